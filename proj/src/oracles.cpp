#include "aimh/oracles.hpp"

#include <cmath>
#include <numbers>

#include "aimh/error.hpp"

namespace aimh {

std::pair<double, double> gaussian_kl_flow_solution(double mu0, double sigma0, double t) {
  if (!(sigma0 > 1.0)) throw Error(ErrorKind::InvalidArgument, "flow solution needs sigma0 > 1");
  if (!(t >= 0.0)) throw Error(ErrorKind::InvalidArgument, "flow time must be >= 0");
  const double decay = std::exp(-t);
  return {mu0 * decay, std::sqrt(decay * decay * (sigma0 * sigma0 - 1.0) + 1.0)};
}

double gaussian_ratio_bound(double mu, double sigma) {
  if (!(sigma > 1.0)) {
    throw Error(ErrorKind::InvalidArgument,
                "ratio bound needs sigma > 1: with sigma <= 1 the proposal tails are no heavier "
                "than N(0,1) and the ratio is unbounded");
  }
  return sigma * std::exp(mu * mu / (2.0 * (sigma * sigma - 1.0)));
}

double gaussian_kl(double mu, double sigma, KlDirection direction) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be > 0");
  const double s2 = sigma * sigma;
  if (direction == KlDirection::Reverse) return -std::log(sigma) + 0.5 * (s2 + mu * mu) - 0.5;
  return std::log(sigma) + (1.0 + mu * mu) / (2.0 * s2) - 0.5;
}

void KdeProposal::validate() const {
  if (centers.empty()) throw Error(ErrorKind::InvalidArgument, "KDE needs at least one center");
  if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "KDE radius must be > 0");
  if (!(volume > 0.0)) throw Error(ErrorKind::InvalidArgument, "KDE ball volume must be > 0");
  for (const auto& c : centers) {
    if (c.size() != centers.front().size()) {
      throw Error(ErrorKind::DimensionMismatch, "KDE centers have different dimensions");
    }
  }
}

double ball_volume(Eigen::Index dim, double radius) {
  const double d = static_cast<double>(dim);
  return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0) * std::pow(radius, d);
}

KdeProposal make_kde(std::vector<Vector> centers, double radius) {
  KdeProposal kde;
  kde.radius = radius;
  if (!centers.empty()) kde.volume = ball_volume(centers.front().size(), radius);
  kde.centers = std::move(centers);
  kde.validate();
  return kde;
}

namespace {

bool in_ball(const Vector& center, double radius, const Vector& x) {
  return (x - center).norm() <= radius;
}

}  // namespace

std::size_t kde_count(const KdeProposal& kde, const Vector& x) {
  std::size_t m = 0;
  for (const auto& c : kde.centers) {
    if (c.size() != x.size()) throw Error(ErrorKind::DimensionMismatch, "KDE point dimension mismatch");
    if (in_ball(c, kde.radius, x)) ++m;
  }
  return m;
}

double kde_density(const KdeProposal& kde, const Vector& x) {
  kde.validate();
  return static_cast<double>(kde_count(kde, x)) /
         (static_cast<double>(kde.centers.size()) * kde.volume);
}

KdeBounds kde_bound_components(const KdeProposal& kde, std::span<const double> target_values,
                               const Vector& new_point, std::span<const Vector> probes) {
  kde.validate();
  if (target_values.size() != probes.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one target value per probe is required");
  }
  KdeBounds b;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double p = target_values[i];
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorKind::NonFinite, "target value must be finite and >= 0");
    }
    if (p == 0.0) continue;
    const std::size_t m = kde_count(kde, probes[i]);
    if (m == 0) {
      throw Error(ErrorKind::SupportViolation,
                  "probe " + std::to_string(i) + " lies in Supp(pi) but no ball covers it");
    }
    const double ratio = p / static_cast<double>(m);
    double& slot = in_ball(new_point, kde.radius, probes[i]) ? b.inner : b.outer;
    slot = std::max(slot, ratio);
  }
  return b;
}

KdeBounds kde_bound_components(const KdeProposal& kde, const Target& target,
                               const Vector& new_point, std::span<const Vector> probes) {
  if (!target.normalized) {
    throw Error(ErrorKind::Unnormalized, "KDE bounds need a normalized target; '" + target.name + "' is not");
  }
  std::vector<double> values;
  values.reserve(probes.size());
  for (const auto& x : probes) values.push_back(std::exp(target.log_density(x)));
  return kde_bound_components(kde, values, new_point, probes);
}

bool kde_update_improves(double inner, double outer, std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "kde_update_improves needs n >= 1");
  if (!(inner >= 0.0) || !(outer >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "KDE bounds must be >= 0");
  }
  return static_cast<double>(n + 1) * outer <= static_cast<double>(n) * inner;
}

}  // namespace aimh
