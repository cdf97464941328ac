#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "aimh/targets.hpp"
#include "aimh/types.hpp"

namespace aimh {

/// Reverse-KL gradient flow of N(mu, sigma^2) toward N(0, 1):
/// mu_t = mu0 e^{-t}, sigma_t = sqrt(e^{-2t}(sigma0^2 - 1) + 1). Needs sigma0 > 1.
std::pair<double, double> gaussian_kl_flow_solution(double mu0, double sigma0, double t);

/// sigma * exp(mu^2 / (2 (sigma^2 - 1))), an upper bound on sup N(0,1)/N(mu, sigma^2).
/// Diverges as sigma -> 1, so sigma <= 1 is rejected.
double gaussian_ratio_bound(double mu, double sigma);

enum class KlDirection { Reverse, Forward };

/// KL(N(mu, sigma^2) || N(0,1)) for Reverse, KL(N(0,1) || N(mu, sigma^2)) for Forward.
double gaussian_kl(double mu, double sigma, KlDirection direction);

/// Uniform-ball kernel density estimate K(x) = m(x) / (n V) with m(x) the
/// number of closed radius-balls containing x.
struct KdeProposal {
  std::vector<Vector> centers;
  double radius = 0.0;
  double volume = 0.0;

  void validate() const;
};

/// Volume of the closed Euclidean ball of the given radius in R^dim.
double ball_volume(Eigen::Index dim, double radius);
KdeProposal make_kde(std::vector<Vector> centers, double radius);

std::size_t kde_count(const KdeProposal& kde, const Vector& x);
double kde_density(const KdeProposal& kde, const Vector& x);

/// Inner bound (sup of pi/m over probes inside the new ball) and outer bound
/// (over the rest). An empty region reports 0.
struct KdeBounds {
  double inner = 0.0;
  double outer = 0.0;
};

/// Probes with pi = 0 lie outside Supp(pi) and are ignored. A probe in the
/// support that no ball covers raises SupportViolation.
KdeBounds kde_bound_components(const KdeProposal& kde, std::span<const double> target_values,
                               const Vector& new_point, std::span<const Vector> probes);
KdeBounds kde_bound_components(const KdeProposal& kde, const Target& target,
                               const Vector& new_point, std::span<const Vector> probes);

/// (1 + 1/n) * outer <= inner, the condition for adding the new ball not to
/// raise the ratio bound.
bool kde_update_improves(double inner, double outer, std::uint64_t n);

}  // namespace aimh
