#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aimh/error.hpp"
#include "aimh/flows.hpp"
#include "aimh/parallel.hpp"
#include "aimh/rng.hpp"
#include "aimh/targets.hpp"
#include "aimh/types.hpp"

namespace aimh {

/// Chain position with cached log densities. A NaN `log_proposal` marks the
/// proposal cache as stale (after a local move or an adaptation event); the
/// IMH step recomputes it on demand.
struct ChainState {
  Vector x;
  double log_target = 0.0;
  double log_proposal = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t step = 0;
  std::uint64_t walker = 0;
};

ChainState make_state(const Target& target, Vector x, std::uint64_t walker = 0);

enum class KernelTag { Imh, Rwm, Mala, PrecondMala };
std::string to_string(KernelTag tag);

struct StepOutcome {
  ChainState state;
  Vector proposal;
  double accept_prob = 0.0;
  bool accepted = false;
  KernelTag tag = KernelTag::Imh;
};

/// min(1, exp(log_ratio)); -inf maps to 0, NaN is an error.
double accept_prob_from_log_ratio(double log_ratio);

/// Categorical proposal over {0..k-1}, paired with categorical_target.
struct CategoricalProposal {
  Vector probs;
};
ProposalDraw proposal_draw(const CategoricalProposal& p, Rng& rng);
double proposal_log_prob(const CategoricalProposal& p, const Vector& x);

// ---- independent Metropolis-Hastings ---------------------------------------

namespace detail {
StepOutcome finish_step(const ChainState& state, Vector proposal, double log_target_new,
                        double log_proposal_new, double log_ratio, KernelTag tag, Rng& rng);
}

/// One IMH transition. Randomness: the proposal draw, then one uniform.
template <class Proposal>
StepOutcome imh_step(const ChainState& state, const Target& target, const Proposal& proposal,
                     Rng& rng) {
  double current_lq = state.log_proposal;
  if (std::isnan(current_lq)) current_lq = proposal_log_prob(proposal, state.x);
  if (!(current_lq > -std::numeric_limits<double>::infinity())) {
    throw Error(ErrorKind::SupportViolation,
                "proposal density is zero at the current state (target support not covered)");
  }
  ProposalDraw draw = proposal_draw(proposal, rng);
  const double lt = target.log_density(draw.x);
  if (std::isnan(lt) || std::isnan(draw.log_prob)) {
    throw Error(ErrorKind::NonFinite, "log density is NaN at the proposed point");
  }
  const double log_ratio = (lt - state.log_target) + (current_lq - draw.log_prob);
  ChainState base = state;
  base.log_proposal = current_lq;
  return detail::finish_step(base, std::move(draw.x), lt, draw.log_prob, log_ratio, KernelTag::Imh,
                             rng);
}

// ---- exact finite-state kernels --------------------------------------------

/// Row-stochastic transition matrix and the target it leaves invariant.
struct DiscreteKernel {
  Matrix transition;
  Vector target;

  Eigen::Index size() const { return target.size(); }
};

DiscreteKernel imh_discrete_kernel(const Vector& target_probs, const Vector& proposal_probs);
/// alpha * K + (1 - alpha) * other, rows mixed.
DiscreteKernel mixture_discrete_kernel(double alpha, const DiscreteKernel& k,
                                       const DiscreteKernel& other);

// ---- adaptive random-walk Metropolis ---------------------------------------

/// Welford mean and (n-1)-normalized covariance of pushed samples.
class RunningCovariance {
 public:
  explicit RunningCovariance(Eigen::Index dim);

  void push(const Vector& x);
  std::size_t count() const { return count_; }
  const Vector& mean() const { return mean_; }
  Matrix covariance() const;

 private:
  std::size_t count_ = 0;
  Vector mean_;
  Matrix m2_;
};

struct RwmSettings {
  /// Below this many samples the proposal uses initial_scale^2 * I.
  std::size_t adapt_after = 100;
  double initial_scale = 0.1;
};

/// (2.38^2/m) * (C + lambda I) with lambda = 1e-6 * trace(C)/m.
Matrix rwm_proposal_covariance(const RunningCovariance& cov, const RwmSettings& settings);

StepOutcome rwm_adaptive_step(const ChainState& state, const Target& target,
                              const RunningCovariance& cov, Rng& rng,
                              const RwmSettings& settings = {});

// ---- Langevin ---------------------------------------------------------------

/// x' = x + (h/2) grad + sqrt(h) xi with the asymmetric MH correction.
/// Randomness: dim normals, then one uniform.
StepOutcome mala_step(const ChainState& state, const Target& target, double step_size, Rng& rng);

/// MALA preconditioned by G(x) = (-H(x) + lambda I)^-1 at both endpoints.
StepOutcome precond_mala_step(const ChainState& state, const Target& target, double step_size,
                              Rng& rng, double regularization = 0.0);

// ---- mixtures and ensembles -------------------------------------------------

inline constexpr std::uint64_t kMixtureChoiceTag = 0x6d69786b65726e6cULL;

/// With probability alpha runs `global(rng)`, otherwise `local(rng)`. The
/// choice uses a stream derived from rng without advancing it, so alpha = 1
/// (resp. 0) reproduces the global (resp. local) step exactly.
template <class GlobalStep, class LocalStep>
StepOutcome mixture_kernel_step(double alpha, GlobalStep&& global, LocalStep&& local, Rng& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "mixture probability must lie in [0,1]");
  }
  const double u = rng.derive(kMixtureChoiceTag).uniform();
  if (u < alpha) return global(rng);
  return local(rng);
}

/// IMH with probability alpha, MALA otherwise.
template <class Proposal>
StepOutcome mixture_kernel_step(double alpha, const ChainState& state, const Target& target,
                                const Proposal& proposal, double mala_step_size, Rng& rng) {
  return mixture_kernel_step(
      alpha, [&](Rng& r) { return imh_step(state, target, proposal, r); },
      [&](Rng& r) { return mala_step(state, target, mala_step_size, r); }, rng);
}

struct WalkerResult {
  std::optional<StepOutcome> outcome;
  ErrorKind error_kind = ErrorKind::InvalidArgument;
  std::string error;  // set when outcome is empty
};

/// Advances every walker once with `kernel(state, rng)`. Walker i draws from
/// stream_for(seed, state.walker, state.step), so results do not depend on
/// walker order, walker count, or thread scheduling. A failing walker
/// records its error; the others proceed.
template <class Kernel>
std::vector<WalkerResult> parallel_walkers_step(const std::vector<ChainState>& states,
                                                Kernel&& kernel, std::uint64_t seed) {
  std::vector<WalkerResult> results(states.size());
  parallel_for(states.size(), [&](std::size_t i) {
    Rng rng = stream_for(seed, states[i].walker, states[i].step);
    try {
      results[i].outcome = kernel(states[i], rng);
    } catch (const Error& e) {
      results[i].error_kind = e.kind();
      results[i].error = e.what();
    } catch (const std::exception& e) {
      results[i].error = e.what();
    }
  });
  return results;
}

// ---- ergodicity constants ---------------------------------------------------

struct DoeblinBound {
  double M = 1.0;
  Vector argmax;
};

/// max over probes of pi(x)/q(x), clamped below at 1. Both densities must be
/// normalized.
template <class Proposal>
DoeblinBound doeblin_bound(const Target& target, const Proposal& proposal,
                           std::span<const Vector> probes) {
  if (!target.normalized) {
    throw Error(ErrorKind::Unnormalized,
                "doeblin bound needs a normalized target; '" + target.name + "' is not");
  }
  if (probes.empty()) throw Error(ErrorKind::InvalidArgument, "no probe points");
  double best = -std::numeric_limits<double>::infinity();
  Vector arg = probes.front();
  for (const auto& x : probes) {
    const double lt = target.log_density(x);
    if (lt == -std::numeric_limits<double>::infinity()) continue;  // outside Supp(pi)
    const double r = lt - proposal_log_prob(proposal, x);
    if (r > best) {
      best = r;
      arg = x;
    }
  }
  return {std::max(1.0, std::exp(best)), arg};
}

/// Discrete version; argmax is the state index as a 1-vector.
DoeblinBound doeblin_bound(const Vector& target_probs, const Vector& proposal_probs);

/// 2 * prod(1 - 1/M_i); infinite M contributes a factor of 1.
double tv_bound_product(std::span<const double> Ms);

}  // namespace aimh
