#include "aimh/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "aimh/error.hpp"

namespace aimh {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)
constexpr double kBridgeJitter = 1e-10;

void check_dim(const Vector& x, Eigen::Index dim, const std::string& who) {
  if (x.size() != dim) {
    throw Error(ErrorKind::DimensionMismatch, who + ": expected dimension " + std::to_string(dim) +
                                                  ", got " + std::to_string(x.size()));
  }
}

}  // namespace

double log_normal_diag(const Vector& x, const Vector& mean, const Vector& sd) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) / sd[i];
    acc += -0.5 * z * z - std::log(sd[i]);
  }
  return acc - 0.5 * kLog2Pi * static_cast<double>(x.size());
}

void Phi4Config::validate() const {
  if (grid < 2) throw Error(ErrorKind::InvalidArgument, "phi4 grid must be >= 2");
  if (!(coupling > 0.0)) throw Error(ErrorKind::InvalidArgument, "phi4 coupling a must be > 0");
  if (!(beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "phi4 beta must be > 0");
}

double phi4_energy(const Phi4Config& cfg, const Vector& phi) {
  const Eigen::Index n = cfg.grid;
  check_dim(phi, n, "phi4_energy");
  const double h = 1.0 / static_cast<double>(n + 1);
  const double a = cfg.coupling;
  double kinetic = 0.0;
  for (Eigen::Index i = 0; i <= n; ++i) {
    const double left = i == 0 ? 0.0 : phi[i - 1];
    const double right = i == n ? 0.0 : phi[i];
    const double d = (right - left) / h;
    kinetic += d * d;
  }
  double potential = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = 1.0 - phi[i] * phi[i];
    potential += w * w;
  }
  return 0.5 * a * kinetic * h + potential * h / (4.0 * a);
}

Vector phi4_energy_grad(const Phi4Config& cfg, const Vector& phi) {
  const Eigen::Index n = cfg.grid;
  check_dim(phi, n, "phi4_energy_grad");
  const double h = 1.0 / static_cast<double>(n + 1);
  const double a = cfg.coupling;
  Vector g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double left = i == 0 ? 0.0 : phi[i - 1];
    const double right = i + 1 == n ? 0.0 : phi[i + 1];
    const double coupling_term = (a / h) * (2.0 * phi[i] - left - right);
    const double potential_term = -(h / a) * phi[i] * (1.0 - phi[i] * phi[i]);
    g[i] = coupling_term + potential_term;
  }
  return g;
}

Vector bridge_times(int n_times) {
  Vector t(n_times);
  for (int i = 0; i < n_times; ++i) t[i] = static_cast<double>(i + 1) / (n_times + 1);
  return t;
}

GaussianMoments bridge_moments(int n_times) {
  if (n_times < 2) throw Error(ErrorKind::InvalidArgument, "brownian bridge needs n_times >= 2");
  const Vector t = bridge_times(n_times);
  GaussianMoments m{Vector(n_times), Matrix(n_times, n_times)};
  for (int i = 0; i < n_times; ++i) {
    m.mean[i] = std::sin(std::numbers::pi * t[i]);
    for (int j = 0; j < n_times; ++j) m.cov(i, j) = std::min(t[i], t[j]) - t[i] * t[j];
    m.cov(i, i) += kBridgeJitter;
  }
  return m;
}

Target brownian_bridge_target(int n_times) {
  const auto [mean, cov] = bridge_moments(n_times);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "brownian bridge covariance not positive definite");
  }
  const Matrix chol = llt.matrixL();
  const Matrix precision = llt.solve(Matrix::Identity(n_times, n_times));
  const double log_norm =
      -0.5 * kLog2Pi * n_times - chol.diagonal().array().log().sum();

  Target target;
  target.name = "brownian-bridge";
  target.dim = n_times;
  target.normalized = true;
  target.log_density = [=](const Vector& x) {
    check_dim(x, n_times, "brownian-bridge");
    const Vector d = x - mean;
    return log_norm - 0.5 * d.dot(precision * d);
  };
  target.grad_log_density = [=](const Vector& x) -> Vector {
    check_dim(x, n_times, "brownian-bridge");
    return -(precision * (x - mean));
  };
  target.hessian_log_density = [=](const Vector&) -> Matrix { return -precision; };
  target.reference_sampler = [=](std::size_t n, Rng& rng) {
    Matrix out(static_cast<Eigen::Index>(n), n_times);
    for (std::size_t r = 0; r < n; ++r) {
      out.row(static_cast<Eigen::Index>(r)) = (mean + chol * rng.normal_vector(n_times)).transpose();
    }
    return out;
  };
  return target;
}

Target bimodal_target() {
  const Vector m0 = (Vector(2) << -2.0, 2.0).finished();
  const Vector m1 = (Vector(2) << 2.0, -2.0).finished();
  const double var = 1.0 / 100.0;
  const double log_norm = std::log(0.5) - kLog2Pi - std::log(var);

  // Component log-weights and the per-component score, shared by all members.
  auto components = [=](const Vector& x, double& l0, double& l1) {
    l0 = -0.5 * (x - m0).squaredNorm() / var;
    l1 = -0.5 * (x - m1).squaredNorm() / var;
  };

  Target target;
  target.name = "bimodal-2d";
  target.dim = 2;
  target.normalized = true;
  target.log_density = [=](const Vector& x) {
    check_dim(x, 2, "bimodal-2d");
    double l0, l1;
    components(x, l0, l1);
    const double mx = std::max(l0, l1);
    return log_norm + mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
  };
  target.grad_log_density = [=](const Vector& x) -> Vector {
    check_dim(x, 2, "bimodal-2d");
    double l0, l1;
    components(x, l0, l1);
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx);
    const double e1 = std::exp(l1 - mx);
    const double w0 = e0 / (e0 + e1);
    const double w1 = e1 / (e0 + e1);
    return -(w0 * (x - m0) + w1 * (x - m1)) / var;
  };
  target.hessian_log_density = [=](const Vector& x) -> Matrix {
    check_dim(x, 2, "bimodal-2d");
    double l0, l1;
    components(x, l0, l1);
    const double mx = std::max(l0, l1);
    const double e0 = std::exp(l0 - mx);
    const double e1 = std::exp(l1 - mx);
    const double w0 = e0 / (e0 + e1);
    const double w1 = e1 / (e0 + e1);
    const Vector g0 = -(x - m0) / var;
    const Vector g1 = -(x - m1) / var;
    const Vector gbar = w0 * g0 + w1 * g1;
    Matrix hess = -Matrix::Identity(2, 2) / var;
    hess += w0 * g0 * g0.transpose() + w1 * g1 * g1.transpose() - gbar * gbar.transpose();
    return hess;
  };
  target.reference_sampler = [=](std::size_t n, Rng& rng) {
    Matrix out(static_cast<Eigen::Index>(n), 2);
    const double sd = std::sqrt(var);
    for (std::size_t r = 0; r < n; ++r) {
      const Vector& m = rng.uniform() < 0.5 ? m0 : m1;
      const Vector draw = m + sd * rng.normal_vector(2);
      out.row(static_cast<Eigen::Index>(r)) = draw.transpose();
    }
    return out;
  };
  return target;
}

Target funnel_target() {
  constexpr double kVarV = 9.0;
  Target target;
  target.name = "neal-funnel";
  target.dim = 2;
  target.normalized = true;
  // x | v ~ Normal(0, exp(-v)) (variance), v ~ Normal(0, 9).
  target.log_density = [=](const Vector& p) {
    check_dim(p, 2, "neal-funnel");
    const double v = p[0];
    const double x = p[1];
    const double log_v = -0.5 * (kLog2Pi + std::log(kVarV)) - 0.5 * v * v / kVarV;
    const double log_x = -0.5 * kLog2Pi + 0.5 * v - 0.5 * x * x * std::exp(v);
    return log_v + log_x;
  };
  target.grad_log_density = [=](const Vector& p) -> Vector {
    check_dim(p, 2, "neal-funnel");
    const double v = p[0];
    const double x = p[1];
    const double ev = std::exp(v);
    return (Vector(2) << -v / kVarV + 0.5 - 0.5 * x * x * ev, -x * ev).finished();
  };
  target.hessian_log_density = [=](const Vector& p) -> Matrix {
    check_dim(p, 2, "neal-funnel");
    const double v = p[0];
    const double x = p[1];
    const double ev = std::exp(v);
    Matrix hess(2, 2);
    hess << -1.0 / kVarV - 0.5 * x * x * ev, -x * ev, -x * ev, -ev;
    return hess;
  };
  target.reference_sampler = [=](std::size_t n, Rng& rng) {
    Matrix out(static_cast<Eigen::Index>(n), 2);
    for (std::size_t r = 0; r < n; ++r) {
      const double v = std::sqrt(kVarV) * rng.normal();
      const double x = std::exp(-0.5 * v) * rng.normal();
      out(static_cast<Eigen::Index>(r), 0) = v;
      out(static_cast<Eigen::Index>(r), 1) = x;
    }
    return out;
  };
  return target;
}

Target phi4_target(const Phi4Config& cfg) {
  cfg.validate();
  Target target;
  target.name = "phi4-field";
  target.dim = cfg.grid;
  target.normalized = false;
  target.log_density = [cfg](const Vector& phi) { return -cfg.beta * phi4_energy(cfg, phi); };
  target.grad_log_density = [cfg](const Vector& phi) -> Vector {
    return -cfg.beta * phi4_energy_grad(cfg, phi);
  };
  target.hessian_log_density = [cfg](const Vector& phi) -> Matrix {
    check_dim(phi, cfg.grid, "phi4-field");
    const int n = cfg.grid;
    const double h = 1.0 / static_cast<double>(n + 1);
    const double a = cfg.coupling;
    Matrix hess = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      hess(i, i) = 2.0 * a / h + (h / a) * (3.0 * phi[i] * phi[i] - 1.0);
      if (i + 1 < n) {
        hess(i, i + 1) = -a / h;
        hess(i + 1, i) = -a / h;
      }
    }
    return -cfg.beta * hess;
  };
  return target;
}

Target gaussian_1d_target(double mean, double variance) {
  if (!(variance > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "gaussian target variance must be > 0");
  }
  const double sd = std::sqrt(variance);
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * variance);
  Target target;
  target.name = "gaussian-1d";
  target.dim = 1;
  target.normalized = true;
  target.log_density = [=](const Vector& x) {
    check_dim(x, 1, "gaussian-1d");
    const double d = x[0] - mean;
    return log_norm - 0.5 * d * d / variance;
  };
  target.grad_log_density = [=](const Vector& x) -> Vector {
    check_dim(x, 1, "gaussian-1d");
    return Vector::Constant(1, -(x[0] - mean) / variance);
  };
  target.hessian_log_density = [=](const Vector&) -> Matrix {
    return Matrix::Constant(1, 1, -1.0 / variance);
  };
  target.reference_sampler = [=](std::size_t n, Rng& rng) {
    Matrix out(static_cast<Eigen::Index>(n), 1);
    for (std::size_t r = 0; r < n; ++r) out(static_cast<Eigen::Index>(r), 0) = mean + sd * rng.normal();
    return out;
  };
  return target;
}

Target categorical_target(const Vector& probs) {
  if (probs.size() == 0 || (probs.array() < 0.0).any() ||
      std::abs(probs.sum() - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "categorical probabilities must form a simplex");
  }
  const Eigen::Index k = probs.size();
  Target target;
  target.name = "categorical";
  target.dim = 1;
  target.normalized = true;
  target.log_density = [=](const Vector& x) {
    check_dim(x, 1, "categorical");
    const auto i = static_cast<Eigen::Index>(std::llround(x[0]));
    if (i < 0 || i >= k) return -std::numeric_limits<double>::infinity();
    return std::log(probs[i]);
  };
  target.reference_sampler = [=](std::size_t n, Rng& rng) {
    Matrix out(static_cast<Eigen::Index>(n), 1);
    for (std::size_t r = 0; r < n; ++r) {
      double u = rng.uniform();
      Eigen::Index i = 0;
      while (i + 1 < k && u >= probs[i]) u -= probs[i++];
      out(static_cast<Eigen::Index>(r), 0) = static_cast<double>(i);
    }
    return out;
  };
  return target;
}

}  // namespace aimh
