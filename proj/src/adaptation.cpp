#include "aimh/adaptation.hpp"

#include <algorithm>
#include <cmath>

namespace aimh {

namespace {

constexpr Eigen::Index kGradChunk = 64;

// Sum of per-point gradients over the columns of xs. Chunk sums are combined
// with Neumaier compensation so the result barely depends on column order.
Vector compensated_grad_sum(const FlowParams& params, const Matrix& xs) {
  const auto p = static_cast<Eigen::Index>(param_count(params));
  Vector sum = Vector::Zero(p);
  Vector comp = Vector::Zero(p);
  for (Eigen::Index start = 0; start < xs.cols(); start += kGradChunk) {
    const Eigen::Index len = std::min(kGradChunk, xs.cols() - start);
    const Vector g = flow_log_prob_param_grad_sum(params, xs.middleCols(start, len));
    for (Eigen::Index i = 0; i < p; ++i) {
      const double t = sum[i] + g[i];
      comp[i] += std::abs(sum[i]) >= std::abs(g[i]) ? (sum[i] - t) + g[i] : (g[i] - t) + sum[i];
      sum[i] = t;
    }
  }
  return sum + comp;
}

Matrix gather_batch(const HistoryBuffer& buffer, std::size_t batch, Rng& rng) {
  const bool full = batch == 0 || batch >= buffer.size();
  const std::size_t n = full ? buffer.size() : batch;
  Matrix xs(buffer.at(0).size(), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    xs.col(static_cast<Eigen::Index>(k)) = full ? buffer.at(k) : buffer.sample(rng);
  }
  return xs;
}

}  // namespace

double Schedule::epsilon(std::uint64_t n) const {
  if (halving_period == 0) return eps0;
  return std::ldexp(eps0, -static_cast<int>(std::min<std::uint64_t>(n / halving_period, 2000)));
}

double Schedule::alpha(std::uint64_t n) const {
  return std::min(1.0, alpha_c / (1.0 + static_cast<double>(n) / alpha_scale));
}

void Schedule::validate() const {
  if (!(eps0 >= 0.0) || !std::isfinite(eps0)) {
    throw Error(ErrorKind::Config, "schedule eps0 must be finite and >= 0");
  }
  if (!(alpha_c >= 0.0) || !std::isfinite(alpha_c)) {
    throw Error(ErrorKind::Config, "schedule alpha_c must be finite and >= 0");
  }
  if (!(alpha_scale > 0.0)) throw Error(ErrorKind::Config, "schedule alpha_scale must be > 0");
  if (!(clip_norm >= 0.0)) throw Error(ErrorKind::Config, "schedule clip_norm must be >= 0");
}

void HistoryBuffer::push(const Vector& x) {
  if (!states_.empty() && x.size() != states_.front().size()) {
    throw Error(ErrorKind::DimensionMismatch, "history buffer state dimension changed");
  }
  if (capacity_ == 0 || states_.size() < capacity_) {
    states_.push_back(x);
  } else {
    states_[inserted_ % capacity_] = x;
  }
  ++inserted_;
}

const Vector& HistoryBuffer::sample(Rng& rng) const {
  if (states_.empty()) throw Error(ErrorKind::InvalidArgument, "sampling from an empty history buffer");
  std::uniform_int_distribution<std::size_t> pick(0, states_.size() - 1);
  return states_[pick(rng)];
}

nlohmann::json to_json(const AdaptationEvent& e) {
  nlohmann::json j{{"n", e.n},         {"epsilon", e.epsilon}, {"alpha", e.alpha},
                   {"fired", e.fired}, {"applied", e.applied}, {"batch", e.batch},
                   {"grad_norm", e.grad_norm}};
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

Vector AdamState::direction(const Vector& grad) {
  if (m.size() != grad.size()) {
    m = Vector::Zero(grad.size());
    v = Vector::Zero(grad.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  return ((m / c1).array() / ((v / c2).array().sqrt() + delta)).matrix();
}

AdaptationResult<FlowParams> pseudo_likelihood_update(const FlowParams& params,
                                                      const HistoryBuffer& buffer,
                                                      const Schedule& schedule, std::uint64_t n,
                                                      std::size_t batch, Rng& rng, AdamState* adam) {
  if (buffer.empty()) throw Error(ErrorKind::InvalidArgument, "pseudo-likelihood update needs a non-empty buffer");
  AdaptationResult<FlowParams> out{params, {}};
  AdaptationEvent& ev = out.event;
  ev.n = n;
  ev.epsilon = schedule.epsilon(n);
  ev.alpha = schedule.alpha(n);
  ev.fired = rng.uniform() < ev.alpha;
  if (!ev.fired || ev.epsilon == 0.0) return out;

  const Matrix xs = gather_batch(buffer, batch, rng);
  ev.batch = static_cast<std::size_t>(xs.cols());
  const Vector grad = compensated_grad_sum(params, xs) / static_cast<double>(xs.cols());
  ev.grad_norm = grad.norm();
  if (!grad.allFinite()) {
    ev.note = "non-finite gradient; update skipped";
    return out;
  }
  double scale = 1.0;
  if (schedule.clip_norm > 0.0 && ev.grad_norm > schedule.clip_norm) {
    scale = schedule.clip_norm / ev.grad_norm;
    ev.note = "gradient clipped";
  }
  const Vector dir = adam != nullptr ? adam->direction(scale * grad) : Vector(scale * grad);
  unflatten(out.params, flatten(params) + ev.epsilon * dir);
  ev.applied = true;
  return out;
}

AdaptationResult<MixtureProposal> pseudo_likelihood_update(const MixtureProposal& mix,
                                                           const HistoryBuffer& buffer,
                                                           const Schedule& schedule,
                                                           std::uint64_t n, std::size_t batch,
                                                           Rng& rng, AdamState* adam) {
  auto inner = pseudo_likelihood_update(mix.adaptive, buffer, schedule, n, batch, rng, adam);
  MixtureProposal next{mix.beta, mix.fixed, std::move(inner.params)};
  return {std::move(next), std::move(inner.event)};
}

FlowParams reverse_kl_update(const FlowParams& params, const Target& target,
                             std::size_t n_samples, double eps, Rng& rng) {
  if (n_samples == 0) throw Error(ErrorKind::InvalidArgument, "reverse-KL update needs n_samples >= 1");
  const Eigen::Index m = flow_dim(params);
  Matrix zs(m, static_cast<Eigen::Index>(n_samples));
  for (Eigen::Index s = 0; s < zs.cols(); ++s) zs.col(s) = rng.normal_vector(m);
  return reverse_kl_update(params, target, zs, eps);
}

FlowParams reverse_kl_update(const FlowParams& params, const Target& target, const Matrix& zs,
                             double eps) {
  if (!target.has_gradient()) {
    throw Error(ErrorKind::MissingCapability,
                "reverse-KL update needs the target gradient; '" + target.name + "' has none");
  }
  if (zs.cols() == 0) throw Error(ErrorKind::InvalidArgument, "reverse-KL update needs at least one base point");
  const Vector grad = flow_sample_path_grad_sum(params, target, zs, 1.0 / static_cast<double>(zs.cols()));
  if (!grad.allFinite()) throw Error(ErrorKind::NonFinite, "reverse-KL gradient is not finite");
  FlowParams next = params;
  unflatten(next, flatten(params) - eps * grad);
  return next;
}

Vector affine_forward_kl_grad(const AffineParams& params, const GaussianMoments& target) {
  const Eigen::Index m = params.shift.size();
  if (target.mean.size() != m || target.cov.rows() != m || target.cov.cols() != m) {
    throw Error(ErrorKind::DimensionMismatch, "affine flow and Gaussian target dimensions differ");
  }
  // E_pi[-log q] = sum_i s_i + (var_i + (m_i - shift_i)^2) e^{-2 s_i} / 2 + const.
  const Vector diff = target.mean - params.shift;
  const Vector inv_var = (-2.0 * params.log_scale).array().exp();
  Vector grad(2 * m);
  grad.head(m) = -(diff.array() * inv_var.array()).matrix();
  grad.tail(m) = (1.0 - (target.cov.diagonal().array() + diff.array().square()) * inv_var.array())
                     .matrix();
  return grad;
}

AffineParams exact_kl_update(const AffineParams& params, const GaussianMoments& target,
                             double eps) {
  const Vector grad = affine_forward_kl_grad(params, target);
  const Eigen::Index m = params.shift.size();
  return {params.shift - eps * grad.head(m), params.log_scale - eps * grad.tail(m)};
}

std::pair<double, double> gaussian_exact_kl_step(double mu, double sigma, double dt) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be > 0");
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be > 0");
  return {mu - dt * mu, sigma + dt * (1.0 / sigma - sigma)};
}

void MleAccumulator::push(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

double MleAccumulator::sd() const {
  if (count_ == 0) return kMleSigmaFloor;
  return std::max(kMleSigmaFloor, std::sqrt(std::max(0.0, m2_ / static_cast<double>(count_))));
}

std::pair<double, double> mle_gaussian_adapt(std::span<const double> states) {
  if (states.empty()) throw Error(ErrorKind::InvalidArgument, "MLE adaptation needs at least one state");
  MleAccumulator acc;
  for (const double x : states) acc.push(x);
  return {acc.mean(), acc.sd()};
}

}  // namespace aimh
