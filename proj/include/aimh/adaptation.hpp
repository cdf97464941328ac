#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aimh/error.hpp"
#include "aimh/flows.hpp"
#include "aimh/rng.hpp"
#include "aimh/targets.hpp"
#include "aimh/types.hpp"

namespace aimh {

/// Step sizes eps_n = eps0 * 0.5^floor(n / halving_period) and adaptation
/// probabilities alpha_n = min(1, c / (1 + n / alpha_scale)). Both families
/// are non-increasing in n; alpha_n -> 0 whenever alpha_scale is finite.
struct Schedule {
  double eps0 = 1e-3;
  std::uint64_t halving_period = 5000;  // 0 disables halving
  double alpha_c = 1.0;
  double alpha_scale = 1e4;
  double clip_norm = 0.0;  // > 0 rescales longer pseudo-likelihood gradients to this norm

  double epsilon(std::uint64_t n) const;
  double alpha(std::uint64_t n) const;
  void validate() const;
};

/// States visited by the chains. capacity == 0 keeps everything; otherwise
/// the oldest entries are overwritten.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(const Vector& x);
  std::size_t size() const { return states_.size(); }
  bool empty() const { return states_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const Vector& at(std::size_t i) const { return states_.at(i); }
  const Vector& sample(Rng& rng) const;

 private:
  std::size_t capacity_;
  std::uint64_t inserted_ = 0;
  std::vector<Vector> states_;
};

struct AdaptationEvent {
  std::uint64_t n = 0;
  double epsilon = 0.0;
  double alpha = 0.0;
  bool fired = false;    // the alpha_n coin came up
  bool applied = false;  // parameters actually changed
  std::size_t batch = 0;
  double grad_norm = 0.0;
  std::string note;
};

nlohmann::json to_json(const AdaptationEvent& e);

template <class Params>
struct AdaptationResult {
  Params params;
  AdaptationEvent event;
};

/// With probability alpha_n, theta += eps_n * mean over a batch of
/// grad log q_theta(x_k). The batch is the whole buffer (in order) when
/// batch == 0 or batch >= buffer size, else drawn uniformly with replacement.
/// A non-finite gradient leaves theta unchanged and is noted in the event.
/// Randomness: one uniform for the coin, then the batch indices.
/// Adam moment estimates. When passed to pseudo_likelihood_update the step
/// becomes eps_n * m_hat / (sqrt(v_hat) + delta) instead of eps_n * grad.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  std::uint64_t t = 0;
  Vector m, v;

  /// Updates the moments with `grad` and returns the ascent direction.
  Vector direction(const Vector& grad);
};

AdaptationResult<FlowParams> pseudo_likelihood_update(const FlowParams& params,
                                                      const HistoryBuffer& buffer,
                                                      const Schedule& schedule, std::uint64_t n,
                                                      std::size_t batch, Rng& rng,
                                                      AdamState* adam = nullptr);
/// Same rule applied to the adaptive component; beta and the fixed part are
/// untouched.
AdaptationResult<MixtureProposal> pseudo_likelihood_update(const MixtureProposal& mix,
                                                           const HistoryBuffer& buffer,
                                                           const Schedule& schedule,
                                                           std::uint64_t n, std::size_t batch,
                                                           Rng& rng, AdamState* adam = nullptr);

/// theta -= eps * grad (1/s) sum log(q_theta / pi)(T_theta(z_s)) with
/// reparameterized samples. The first overload draws s base points from rng.
FlowParams reverse_kl_update(const FlowParams& params, const Target& target,
                             std::size_t n_samples, double eps, Rng& rng);
/// Base points supplied as the columns of zs.
FlowParams reverse_kl_update(const FlowParams& params, const Target& target, const Matrix& zs,
                             double eps);

/// Gradient of KL(N(mean, cov) || q) for the diagonal affine flow q, as a
/// flat (shift, log_scale) vector. Only the diagonal of cov enters.
Vector affine_forward_kl_grad(const AffineParams& params, const GaussianMoments& target);
AffineParams exact_kl_update(const AffineParams& params, const GaussianMoments& target,
                             double eps);

/// One explicit Euler step of mu' = -mu, sigma' = 1/sigma - sigma.
std::pair<double, double> gaussian_exact_kl_step(double mu, double sigma, double dt);

inline constexpr double kMleSigmaFloor = 1e-6;

/// Running mean and population standard deviation of every state seen.
class MleAccumulator {
 public:
  void push(double x);
  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  /// Population sd, floored at kMleSigmaFloor.
  double sd() const;

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

std::pair<double, double> mle_gaussian_adapt(std::span<const double> states);

/// Candidate with probability alpha, else current. One uniform is drawn.
template <class T>
const T& coin_flip_adapt(const T& current, const T& candidate, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "adaptation probability must lie in [0,1]");
  }
  return rng.uniform() < alpha ? candidate : current;
}

}  // namespace aimh
