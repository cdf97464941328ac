#include "aimh/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "aimh/adaptation.hpp"
#include "aimh/parallel.hpp"

namespace aimh {

namespace {

void check_probability_vector(const Vector& p, const char* who) {
  if (p.size() == 0 || (p.array() < 0.0).any() || !p.allFinite() ||
      std::abs(p.sum() - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, std::string(who) + " is not a probability vector");
  }
}

void check_kernel(const DiscreteKernel& k) {
  if (k.transition.rows() != k.size() || k.transition.cols() != k.size()) {
    throw Error(ErrorKind::DimensionMismatch, "transition matrix does not match the target size");
  }
}

double row_tv(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  return (a - b).cwiseAbs().sum();
}

constexpr std::uint64_t kFreshDrawTag = 0x66726573685f6472ULL;

}  // namespace

double exact_tv_discrete(const Vector& p, const Vector& q) {
  check_probability_vector(p, "p");
  check_probability_vector(q, "q");
  if (p.size() != q.size()) throw Error(ErrorKind::DimensionMismatch, "p and q have different sizes");
  return (p - q).cwiseAbs().sum();
}

double kernel_tv_distance(const Matrix& k, const Matrix& other) {
  if (k.rows() != other.rows() || k.cols() != other.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "kernels act on different state sets");
  }
  double d = 0.0;
  for (Eigen::Index r = 0; r < k.rows(); ++r) d = std::max(d, row_tv(k.row(r), other.row(r)));
  return d;
}

double kernel_tv_distance(const DiscreteKernel& k, const DiscreteKernel& other) {
  return kernel_tv_distance(k.transition, other.transition);
}

std::vector<double> tv_curve(const DiscreteKernel& kernel, const Vector& start, int n_steps) {
  check_kernel(kernel);
  check_probability_vector(start, "start distribution");
  if (start.size() != kernel.size()) throw Error(ErrorKind::DimensionMismatch, "start distribution size mismatch");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(0, n_steps)));
  Eigen::RowVectorXd mu = start.transpose();
  for (int n = 0; n < n_steps; ++n) {
    mu = mu * kernel.transition;
    out.push_back(row_tv(mu, kernel.target.transpose()));
  }
  return out;
}

std::vector<double> tv_curve(std::span<const DiscreteKernel> kernels, const Vector& start) {
  std::vector<double> out;
  if (kernels.empty()) return out;
  const Vector& pi = kernels.front().target;
  check_probability_vector(start, "start distribution");
  Eigen::RowVectorXd mu = start.transpose();
  for (const auto& k : kernels) {
    check_kernel(k);
    if (k.size() != mu.size() || (k.target - pi).cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(ErrorKind::InvalidArgument, "kernels in a sequence must share one target");
    }
    mu = mu * k.transition;
    out.push_back(row_tv(mu, pi.transpose()));
  }
  return out;
}

std::uint64_t mixing_time_discrete(const DiscreteKernel& kernel, double eps, std::uint64_t cap) {
  check_kernel(kernel);
  if (!(eps > 0.0 && eps < 2.0)) throw Error(ErrorKind::InvalidArgument, "mixing-time eps must lie in (0, 2)");
  const Eigen::Index k = kernel.size();
  Matrix power = kernel.transition;
  std::vector<std::uint64_t> first(static_cast<std::size_t>(k), 0);
  Eigen::Index pending = k;
  for (std::uint64_t n = 1; n <= cap; ++n) {
    for (Eigen::Index x = 0; x < k; ++x) {
      auto& slot = first[static_cast<std::size_t>(x)];
      if (slot == 0 && row_tv(power.row(x), kernel.target.transpose()) < eps) {
        slot = n;
        --pending;
      }
    }
    if (pending == 0) return *std::max_element(first.begin(), first.end());
    power = power * kernel.transition;
  }
  throw Error(ErrorKind::ContainmentViolation,
              "chain did not reach TV < " + std::to_string(eps) + " within " + std::to_string(cap) +
                  " steps");
}

double log_ratio_sup(const Vector& target_probs, const Vector& proposal_probs) {
  check_probability_vector(target_probs, "target");
  check_probability_vector(proposal_probs, "proposal");
  if (target_probs.size() != proposal_probs.size()) {
    throw Error(ErrorKind::DimensionMismatch, "target and proposal sizes differ");
  }
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < target_probs.size(); ++i) {
    if (target_probs[i] == 0.0) continue;
    best = std::max(best, std::log(target_probs[i]) - std::log(proposal_probs[i]));
  }
  return best;
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidArgument, "KS statistic needs two non-empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

std::vector<double> random_projection_ks(const Matrix& a, const Matrix& b, std::size_t n_proj,
                                         Rng& rng) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "sample sets have different dimensions");
  if (n_proj == 0) throw Error(ErrorKind::InvalidArgument, "need at least one projection");
  const Eigen::Index m = a.cols();
  Matrix directions(m, static_cast<Eigen::Index>(n_proj));
  for (Eigen::Index p = 0; p < directions.cols(); ++p) {
    Vector u = rng.normal_vector(m);
    while (u.norm() == 0.0) u = rng.normal_vector(m);
    directions.col(p) = u / u.norm();
  }
  std::vector<double> out(n_proj);
  parallel_for(n_proj, [&](std::size_t p) {
    const Vector u = directions.col(static_cast<Eigen::Index>(p));
    const Vector pa = a * u;
    const Vector pb = b * u;
    out[p] = ks_two_sample(std::span<const double>(pa.data(), static_cast<std::size_t>(pa.size())),
                           std::span<const double>(pb.data(), static_cast<std::size_t>(pb.size())));
  });
  return out;
}

double ks_noise_floor(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw Error(ErrorKind::InvalidArgument, "sample sizes must be >= 1");
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return std::sqrt(std::numbers::pi / 2.0) * std::numbers::ln2 * std::sqrt((dn + dm) / (dn * dm));
}

double ks_critical_value(std::size_t n, std::size_t m, double level) {
  if (n == 0 || m == 0) throw Error(ErrorKind::InvalidArgument, "sample sizes must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::InvalidArgument, "level must lie in (0,1)");
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return std::sqrt(-std::log(level / 2.0) / 2.0) * std::sqrt((dn + dm) / (dn * dm));
}

double ess(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 10) throw Error(ErrorKind::InvalidArgument, "ESS needs at least 10 values");
  double mean = 0.0;
  for (const double v : series) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(series.begin(), series.end());
  for (double& v : c) v -= mean;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return 1.0;
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double pair = (m == 0 ? 1.0 : autocov(2 * m) / c0) + autocov(2 * m + 1) / c0;
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

Vector mode_weights(const Matrix& samples, const std::function<int(const Vector&)>& classifier,
                    int k_modes) {
  if (k_modes < 1) throw Error(ErrorKind::InvalidArgument, "need at least one mode");
  Vector counts = Vector::Zero(k_modes);
  if (samples.rows() == 0) throw Error(ErrorKind::InvalidArgument, "mode weights need at least one sample");
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    const int label = classifier(samples.row(r).transpose());
    if (label < 0 || label >= k_modes) {
      throw Error(ErrorKind::InvalidArgument, "classifier returned label " + std::to_string(label));
    }
    counts[label] += 1.0;
  }
  return counts / static_cast<double>(samples.rows());
}

int phi4_mode(const Vector& phi) { return phi.mean() > 0.0 ? 0 : 1; }

int bimodal_mode(const Vector& x) {
  if (x.size() != 2) throw Error(ErrorKind::DimensionMismatch, "bimodal classifier expects 2 coordinates");
  const double d0 = (x[0] + 2.0) * (x[0] + 2.0) + (x[1] - 2.0) * (x[1] - 2.0);
  const double d1 = (x[0] - 2.0) * (x[0] - 2.0) + (x[1] + 2.0) * (x[1] + 2.0);
  return d0 <= d1 ? 0 : 1;
}

ProbeCurve stationarity_probe(const Target& target, const StationarityProbeSettings& s) {
  if (!target.has_sampler()) {
    throw Error(ErrorKind::MissingCapability, "stationarity probe needs an exact sampler for '" + target.name + "'");
  }
  if (target.dim != 1) throw Error(ErrorKind::DimensionMismatch, "stationarity probe works on 1D targets");
  if (s.n_replicas == 0) throw Error(ErrorKind::InvalidArgument, "need at least one replica");
  std::vector<std::uint64_t> cps = s.checkpoints;
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  const std::uint64_t last = cps.empty() ? 0 : cps.back();

  std::vector<std::vector<double>> states(cps.size(), std::vector<double>(s.n_replicas));
  parallel_for(s.n_replicas, [&](std::size_t r) {
    Rng rng = stream_for(s.seed, r, 0);
    Vector x = target.reference_sampler(1, rng).transpose();
    Vector y(1);
    double lt_x = target.log_density(x);
    MleAccumulator history;
    history.push(x[0]);
    std::size_t next = 0;
    for (std::uint64_t n = 0; n <= last; ++n) {
      while (next < cps.size() && cps[next] == n) states[next++][r] = x[0];
      if (n == last) break;
      double log_ratio = 0.0;
      double lt_y = 0.0;
      if (s.rule == ProbeRule::None) {
        y = target.reference_sampler(1, rng).transpose();
        lt_y = target.log_density(y);
        log_ratio = 0.0;  // proposal equals target
      } else {
        const bool warm = n < s.warmup;
        const double mu = warm ? 0.0 : history.mean();
        const double sd = warm ? 1.0 : history.sd();
        y[0] = mu + sd * rng.normal();
        lt_y = target.log_density(y);
        const double zx = (x[0] - mu) / sd;
        const double zy = (y[0] - mu) / sd;
        log_ratio = (lt_y - lt_x) + 0.5 * (zy * zy - zx * zx);
      }
      if (rng.uniform() < std::exp(std::min(0.0, log_ratio))) {
        x[0] = y[0];
        lt_x = lt_y;
      }
      history.push(x[0]);
    }
  });

  ProbeCurve curve;
  curve.steps = cps;
  curve.noise_floor = ks_noise_floor(s.n_replicas, s.n_replicas);
  curve.low_power = s.n_replicas < 100;
  const Rng base(s.seed);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    Rng fresh = base.derive(kFreshDrawTag + i);
    const Matrix draws = target.reference_sampler(s.n_replicas, fresh);
    curve.ks.push_back(ks_two_sample(states[i], std::span<const double>(draws.data(), s.n_replicas)));
  }
  return curve;
}

void DiagnosticsReport::validate() const {
  auto finite = [](const std::vector<double>& v, const char* name) {
    for (const double x : v) {
      if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, std::string("report field ") + name + " is not finite");
    }
  };
  finite(acceptance_rate, "acceptance_rate");
  finite(ks, "ks");
  finite(ess, "ess");
  finite(mode_weights, "mode_weights");
  finite(exact_tv, "exact_tv");
  finite(tv_bound, "tv_bound");
  finite(log_ratio_sup, "log_ratio_sup");
  for (const double k : ks) {
    if (k < 0.0 || k > 1.0) throw Error(ErrorKind::InvalidArgument, "KS statistic outside [0,1]");
  }
  if (!mode_weights.empty()) {
    double sum = 0.0;
    for (const double w : mode_weights) sum += w;
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "mode weights do not sum to 1");
  }
}

nlohmann::json to_json(const DiagnosticsReport& r) {
  return {{"acceptance_rate", r.acceptance_rate},
          {"ks", r.ks},
          {"ess", r.ess},
          {"mode_weights", r.mode_weights},
          {"exact_tv", r.exact_tv},
          {"tv_bound", r.tv_bound},
          {"log_ratio_sup", r.log_ratio_sup},
          {"extra", r.extra}};
}

DiagnosticsReport report_from_json(const nlohmann::json& j) {
  try {
    DiagnosticsReport r;
    j.at("acceptance_rate").get_to(r.acceptance_rate);
    j.at("ks").get_to(r.ks);
    j.at("ess").get_to(r.ess);
    j.at("mode_weights").get_to(r.mode_weights);
    j.at("exact_tv").get_to(r.exact_tv);
    j.at("tv_bound").get_to(r.tv_bound);
    j.at("log_ratio_sup").get_to(r.log_ratio_sup);
    r.extra = j.at("extra");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptArtifact, std::string("diagnostics report: ") + e.what());
  }
}

void write_series_csv(const std::string& path, const std::string& column,
                      std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot open " + path + " for writing");
  out.precision(17);
  out << "index," << column << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) out << i << ',' << values[i] << '\n';
  if (!out) throw Error(ErrorKind::InvalidArgument, "write to " + path + " failed");
}

}  // namespace aimh
