#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aimh/error.hpp"
#include "aimh/kernels.hpp"
#include "aimh/rng.hpp"
#include "aimh/targets.hpp"
#include "aimh/types.hpp"

namespace aimh {

// ---- exact finite-state quantities ------------------------------------------

/// sum_i |p_i - q_i|, i.e. twice the largest difference in set probability.
double exact_tv_discrete(const Vector& p, const Vector& q);

/// Largest row-wise total variation between two transition matrices.
double kernel_tv_distance(const Matrix& k, const Matrix& other);
double kernel_tv_distance(const DiscreteKernel& k, const DiscreteKernel& other);

/// TV(start K^n, pi) for n = 1..n_steps.
std::vector<double> tv_curve(const DiscreteKernel& kernel, const Vector& start, int n_steps);
/// TV(start K_1 ... K_n, pi) along a sequence of kernels sharing pi.
std::vector<double> tv_curve(std::span<const DiscreteKernel> kernels, const Vector& start);

inline constexpr std::uint64_t kMixingTimeCap = 10000;

/// Max over start states of the first n >= 1 with TV(K^n(x,.), pi) < eps.
/// Exceeding `cap` raises a ContainmentViolation error.
std::uint64_t mixing_time_discrete(const DiscreteKernel& kernel, double eps,
                                   std::uint64_t cap = kMixingTimeCap);

/// max over states of log p - log q (states with p = 0 skipped).
double log_ratio_sup(const Vector& target_probs, const Vector& proposal_probs);

/// max over probes of log pi - log q. Both must be normalized densities.
template <class Proposal>
double log_ratio_sup(const Target& target, const Proposal& proposal,
                     std::span<const Vector> probes) {
  if (!target.normalized) {
    throw Error(ErrorKind::Unnormalized, "log-ratio sup needs a normalized target; '" + target.name + "' is not");
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& x : probes) {
    const double lt = target.log_density(x);
    if (lt == -std::numeric_limits<double>::infinity()) continue;
    best = std::max(best, lt - proposal_log_prob(proposal, x));
  }
  return best;
}

// ---- sample-based statistics -------------------------------------------------

/// Sup distance between the two empirical CDFs.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

/// KS statistic of the projections of the rows of a and b onto n_proj
/// uniformly random unit vectors. Directions are drawn from rng in order,
/// then projections are evaluated in parallel; entry i belongs to direction i.
std::vector<double> random_projection_ks(const Matrix& a, const Matrix& b, std::size_t n_proj,
                                         Rng& rng);

/// Expected two-sample KS statistic between samples of one distribution:
/// sqrt(pi/2) ln 2 sqrt((n+m)/(nm)).
double ks_noise_floor(std::size_t n, std::size_t m);
/// Asymptotic two-sample KS critical value at level `level`.
double ks_critical_value(std::size_t n, std::size_t m, double level = 0.01);

/// N / tau with tau from Geyer's initial positive sequence. A constant series
/// has ESS 1.
double ess(std::span<const double> series);

/// Empirical frequency of each mode label among the rows of samples.
Vector mode_weights(const Matrix& samples, const std::function<int(const Vector&)>& classifier,
                    int k_modes);

/// 0 when the spatial mean of the field is positive, else 1.
int phi4_mode(const Vector& phi);
/// 0 for the component at (-2, 2), 1 for (2, -2).
int bimodal_mode(const Vector& x);

// ---- stationarity probe ------------------------------------------------------

enum class ProbeRule { None, Mle };

struct StationarityProbeSettings {
  ProbeRule rule = ProbeRule::Mle;
  std::vector<std::uint64_t> checkpoints{100, 10000};
  std::size_t n_replicas = 100000;
  /// Transitions that use the initial N(0, 1) proposal before MLE takes over.
  std::uint64_t warmup = 20;
  std::uint64_t seed = 0;
};

struct ProbeCurve {
  std::vector<std::uint64_t> steps;
  std::vector<double> ks;
  double noise_floor = 0.0;
  bool low_power = false;
};

/// Starts n_replicas chains at exact draws of a 1D target and runs adaptive
/// IMH. With ProbeRule::None the proposal is the target itself; with
/// ProbeRule::Mle each replica proposes from N(mean, sd^2) of its own history.
/// At each checkpoint the replica states are compared with fresh exact draws.
ProbeCurve stationarity_probe(const Target& target, const StationarityProbeSettings& settings);

// ---- report ------------------------------------------------------------------

struct DiagnosticsReport {
  std::vector<double> acceptance_rate;
  std::vector<double> ks;
  std::vector<double> ess;
  std::vector<double> mode_weights;
  std::vector<double> exact_tv;
  std::vector<double> tv_bound;
  std::vector<double> log_ratio_sup;
  nlohmann::json extra = nlohmann::json::object();

  void validate() const;
};

nlohmann::json to_json(const DiagnosticsReport& r);
DiagnosticsReport report_from_json(const nlohmann::json& j);

/// Writes "index,<column>" rows with round-trip precision.
void write_series_csv(const std::string& path, const std::string& column,
                      std::span<const double> values);

}  // namespace aimh
