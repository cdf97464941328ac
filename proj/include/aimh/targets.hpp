#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "aimh/rng.hpp"
#include "aimh/types.hpp"

namespace aimh {

/// A target density on R^m, known up to an additive constant in log-space
/// unless `normalized` is set. Optional members are empty std::functions.
struct Target {
  std::string name;
  Eigen::Index dim = 0;
  bool normalized = false;
  std::function<double(const Vector&)> log_density;
  std::function<Vector(const Vector&)> grad_log_density;
  std::function<Matrix(const Vector&)> hessian_log_density;
  /// Returns n x dim exact draws.
  std::function<Matrix(std::size_t, Rng&)> reference_sampler;

  bool has_gradient() const { return static_cast<bool>(grad_log_density); }
  bool has_hessian() const { return static_cast<bool>(hessian_log_density); }
  bool has_sampler() const { return static_cast<bool>(reference_sampler); }
};

struct Phi4Config {
  int grid = 100;         // interior sample locations; boundaries fixed at 0
  double coupling = 0.1;  // a
  double beta = 20.0;     // inverse temperature

  void validate() const;
};

/// Discretized field energy with h = 1/(grid+1) and phi_0 = phi_{grid+1} = 0.
double phi4_energy(const Phi4Config& cfg, const Vector& phi);
Vector phi4_energy_grad(const Phi4Config& cfg, const Vector& phi);

/// Interior grid t_i = i/(n_times+1), i = 1..n_times.
Vector bridge_times(int n_times);

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

/// Mean sin(pi t) and covariance min(t,s) - st on bridge_times, with a small
/// diagonal jitter.
GaussianMoments bridge_moments(int n_times);
Target brownian_bridge_target(int n_times);
Target bimodal_target();
Target funnel_target();
Target phi4_target(const Phi4Config& cfg);
Target gaussian_1d_target(double mean, double variance);

/// Distribution over {0, ..., k-1}; the state is the index stored as a
/// 1-vector. Used to make kernel identities exactly checkable.
Target categorical_target(const Vector& probs);

/// Diagonal Gaussian log density, normalized.
double log_normal_diag(const Vector& x, const Vector& mean, const Vector& sd);

}  // namespace aimh
