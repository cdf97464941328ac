#include "aimh/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace aimh {

namespace {

void check_simplex(const Vector& p, const char* who, bool strictly_positive) {
  if (p.size() == 0) throw Error(ErrorKind::InvalidArgument, std::string(who) + ": empty vector");
  const bool bad_entry = strictly_positive ? (p.array() <= 0.0).any() : (p.array() < 0.0).any();
  if (bad_entry || !p.allFinite() || std::abs(p.sum() - 1.0) > 1e-9) {
    throw Error(strictly_positive && (p.array() <= 0.0).any() ? ErrorKind::SupportViolation
                                                              : ErrorKind::InvalidArgument,
                std::string(who) + ": not a valid probability vector");
  }
}

Vector checked_gradient(const Target& target, const Vector& x) {
  Vector g = target.grad_log_density(x);
  if (!g.allFinite()) throw Error(ErrorKind::NonFinite, "target gradient is not finite");
  return g;
}

// Cholesky of A = -H + lambda I, clamping eigenvalues when A is indefinite.
Eigen::LLT<Matrix> factor_preconditioner(const Matrix& neg_hessian, double regularization) {
  const Eigen::Index m = neg_hessian.rows();
  Matrix a = neg_hessian + regularization * Matrix::Identity(m, m);
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "preconditioner eigendecomposition failed");
  }
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  const double floor = std::max(regularization, 1e-6 * scale);
  const Vector clamped = eig.eigenvalues().cwiseMax(floor);
  a = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  llt.compute(a);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "preconditioner not positive definite after regularization");
  }
  return llt;
}

}  // namespace

ChainState make_state(const Target& target, Vector x, std::uint64_t walker) {
  ChainState s;
  s.log_target = target.log_density(x);
  s.x = std::move(x);
  s.walker = walker;
  return s;
}

std::string to_string(KernelTag tag) {
  switch (tag) {
    case KernelTag::Imh: return "imh";
    case KernelTag::Rwm: return "rwm";
    case KernelTag::Mala: return "mala";
    case KernelTag::PrecondMala: return "pmala";
  }
  return "unknown";
}

double accept_prob_from_log_ratio(double log_ratio) {
  if (std::isnan(log_ratio)) throw Error(ErrorKind::NonFinite, "acceptance log-ratio is NaN");
  return std::exp(std::min(0.0, log_ratio));
}

ProposalDraw proposal_draw(const CategoricalProposal& p, Rng& rng) {
  double u = rng.uniform();
  Eigen::Index i = 0;
  while (i + 1 < p.probs.size() && u >= p.probs[i]) u -= p.probs[i++];
  return {Vector::Constant(1, static_cast<double>(i)), std::log(p.probs[i])};
}

double proposal_log_prob(const CategoricalProposal& p, const Vector& x) {
  const auto i = static_cast<Eigen::Index>(std::llround(x[0]));
  if (i < 0 || i >= p.probs.size()) return -std::numeric_limits<double>::infinity();
  return std::log(p.probs[i]);
}

namespace detail {

StepOutcome finish_step(const ChainState& state, Vector proposal, double log_target_new,
                        double log_proposal_new, double log_ratio, KernelTag tag, Rng& rng) {
  StepOutcome out;
  out.tag = tag;
  out.accept_prob = accept_prob_from_log_ratio(log_ratio);
  out.accepted = rng.uniform() < out.accept_prob;
  out.state = state;
  if (out.accepted) {
    out.state.x = proposal;
    out.state.log_target = log_target_new;
    out.state.log_proposal = log_proposal_new;
  }
  out.state.step = state.step + 1;
  out.proposal = std::move(proposal);
  return out;
}

}  // namespace detail

DiscreteKernel imh_discrete_kernel(const Vector& target_probs, const Vector& proposal_probs) {
  check_simplex(target_probs, "target", true);
  check_simplex(proposal_probs, "proposal", true);
  if (target_probs.size() != proposal_probs.size()) {
    throw Error(ErrorKind::DimensionMismatch, "target and proposal state counts differ");
  }
  const Eigen::Index k = target_probs.size();
  DiscreteKernel kernel{Matrix::Zero(k, k), target_probs};
  for (Eigen::Index x = 0; x < k; ++x) {
    double moved = 0.0;
    for (Eigen::Index y = 0; y < k; ++y) {
      if (y == x) continue;
      const double ratio = (target_probs[y] * proposal_probs[x]) /
                           (target_probs[x] * proposal_probs[y]);
      const double p = std::min(1.0, ratio) * proposal_probs[y];
      kernel.transition(x, y) = p;
      moved += p;
    }
    kernel.transition(x, x) = 1.0 - moved;
  }
  return kernel;
}

DiscreteKernel mixture_discrete_kernel(double alpha, const DiscreteKernel& k,
                                       const DiscreteKernel& other) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "mixture probability must lie in [0,1]");
  }
  if (k.size() != other.size()) throw Error(ErrorKind::DimensionMismatch, "kernel sizes differ");
  return {alpha * k.transition + (1.0 - alpha) * other.transition, k.target};
}

RunningCovariance::RunningCovariance(Eigen::Index dim)
    : mean_(Vector::Zero(dim)), m2_(Matrix::Zero(dim, dim)) {}

void RunningCovariance::push(const Vector& x) {
  if (x.size() != mean_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "running covariance dimension mismatch");
  }
  ++count_;
  const Vector delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_.noalias() += delta * (x - mean_).transpose();
}

Matrix RunningCovariance::covariance() const {
  if (count_ < 2) return Matrix::Zero(mean_.size(), mean_.size());
  return m2_ / static_cast<double>(count_ - 1);
}

Matrix rwm_proposal_covariance(const RunningCovariance& cov, const RwmSettings& settings) {
  const Eigen::Index m = cov.mean().size();
  const double haario = 2.38 * 2.38 / static_cast<double>(m);
  if (cov.count() < std::max<std::size_t>(2, settings.adapt_after)) {
    return Matrix::Identity(m, m) * settings.initial_scale * settings.initial_scale;
  }
  const Matrix c = cov.covariance();
  const double lambda = 1e-6 * c.trace() / static_cast<double>(m);
  return haario * (c + lambda * Matrix::Identity(m, m));
}

StepOutcome rwm_adaptive_step(const ChainState& state, const Target& target,
                              const RunningCovariance& cov, Rng& rng,
                              const RwmSettings& settings) {
  const Matrix prop_cov = rwm_proposal_covariance(cov, settings);
  Eigen::LLT<Matrix> llt(prop_cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "random-walk proposal covariance factorization failed");
  }
  Vector proposal = state.x + llt.matrixL() * rng.normal_vector(state.x.size());
  const double lt = target.log_density(proposal);
  const double log_ratio = lt - state.log_target;
  return detail::finish_step(state, std::move(proposal), lt,
                             std::numeric_limits<double>::quiet_NaN(), log_ratio, KernelTag::Rwm,
                             rng);
}

StepOutcome mala_step(const ChainState& state, const Target& target, double step_size, Rng& rng) {
  if (!target.has_gradient()) {
    throw Error(ErrorKind::MissingCapability, "MALA needs a gradient; target '" + target.name + "' has none");
  }
  if (!(step_size > 0.0)) throw Error(ErrorKind::InvalidArgument, "MALA step size must be > 0");
  const double h = step_size;
  const Vector g = checked_gradient(target, state.x);
  const Vector noise = rng.normal_vector(state.x.size());
  Vector proposal = state.x + (0.5 * h) * g + std::sqrt(h) * noise;
  const double lt = target.log_density(proposal);
  double log_ratio = -std::numeric_limits<double>::infinity();
  if (lt > -std::numeric_limits<double>::infinity()) {
    const Vector g_new = checked_gradient(target, proposal);
    const double fwd = -(proposal - state.x - (0.5 * h) * g).squaredNorm() / (2.0 * h);
    const double bwd = -(state.x - proposal - (0.5 * h) * g_new).squaredNorm() / (2.0 * h);
    log_ratio = (lt - state.log_target) + (bwd - fwd);
  }
  return detail::finish_step(state, std::move(proposal), lt,
                             std::numeric_limits<double>::quiet_NaN(), log_ratio, KernelTag::Mala,
                             rng);
}

StepOutcome precond_mala_step(const ChainState& state, const Target& target, double step_size,
                              Rng& rng, double regularization) {
  if (!target.has_gradient() || !target.has_hessian()) {
    throw Error(ErrorKind::MissingCapability,
                "preconditioned MALA needs gradient and Hessian; target '" + target.name + "' lacks one");
  }
  if (!(step_size > 0.0)) throw Error(ErrorKind::InvalidArgument, "MALA step size must be > 0");
  const double h = step_size;
  const Vector g = checked_gradient(target, state.x);
  const auto llt = factor_preconditioner(-target.hessian_log_density(state.x), regularization);
  const Vector drift = llt.solve(g);
  const Vector noise = llt.matrixU().solve(rng.normal_vector(state.x.size()));
  Vector proposal = state.x + (0.5 * h) * drift + std::sqrt(h) * noise;
  const double lt = target.log_density(proposal);
  double log_ratio = -std::numeric_limits<double>::infinity();
  if (lt > -std::numeric_limits<double>::infinity()) {
    const Vector g_new = checked_gradient(target, proposal);
    const auto llt_new = factor_preconditioner(-target.hessian_log_density(proposal), regularization);
    const Vector drift_new = llt_new.solve(g_new);
    auto log_q = [h](const Eigen::LLT<Matrix>& f, const Vector& d) {
      const Matrix& lmat = f.matrixLLT();
      const double half_log_det = lmat.diagonal().array().log().sum();
      const Vector ld = f.matrixU() * d;  // d^T A d = |L^T d|^2
      return half_log_det - ld.squaredNorm() / (2.0 * h);
    };
    const double fwd = log_q(llt, proposal - state.x - (0.5 * h) * drift);
    const double bwd = log_q(llt_new, state.x - proposal - (0.5 * h) * drift_new);
    log_ratio = (lt - state.log_target) + (bwd - fwd);
  }
  return detail::finish_step(state, std::move(proposal), lt,
                             std::numeric_limits<double>::quiet_NaN(), log_ratio,
                             KernelTag::PrecondMala, rng);
}

DoeblinBound doeblin_bound(const Vector& target_probs, const Vector& proposal_probs) {
  check_simplex(target_probs, "target", false);
  check_simplex(proposal_probs, "proposal", false);
  if (target_probs.size() != proposal_probs.size()) {
    throw Error(ErrorKind::DimensionMismatch, "target and proposal state counts differ");
  }
  double best = 0.0;
  Eigen::Index arg = 0;
  for (Eigen::Index i = 0; i < target_probs.size(); ++i) {
    if (target_probs[i] == 0.0) continue;
    if (proposal_probs[i] == 0.0) {
      throw Error(ErrorKind::SupportViolation, "proposal has zero mass inside the target support");
    }
    const double r = target_probs[i] / proposal_probs[i];
    if (r > best) {
      best = r;
      arg = i;
    }
  }
  return {std::max(1.0, best), Vector::Constant(1, static_cast<double>(arg))};
}

double tv_bound_product(std::span<const double> Ms) {
  double prod = 2.0;
  for (const double m : Ms) {
    if (std::isnan(m) || m < 1.0) throw Error(ErrorKind::InvalidArgument, "Doeblin constant M must be >= 1");
    if (std::isinf(m)) continue;
    prod *= 1.0 - 1.0 / m;
  }
  return prod;
}

}  // namespace aimh
