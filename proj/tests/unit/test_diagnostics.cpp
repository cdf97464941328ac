#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "aimh/diagnostics.hpp"
#include "aimh/oracles.hpp"
#include "helpers.hpp"

using namespace aimh;
using testing::random_simplex;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Matrix random_kernel(Eigen::Index n, Rng& rng) {
  Matrix k(n, n);
  for (Eigen::Index r = 0; r < n; ++r) k.row(r) = random_simplex(n, rng).transpose();
  return k;
}

// Brute-force two-sample KS: evaluate both CDFs at every sample point.
double ks_brute(const std::vector<double>& a, const std::vector<double>& b) {
  double best = 0.0;
  auto cdf = [](const std::vector<double>& s, double x) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [x](double v) { return v <= x; })) /
           static_cast<double>(s.size());
  };
  for (const auto* s : {&a, &b}) {
    for (double x : *s) best = std::max(best, std::abs(cdf(a, x) - cdf(b, x)));
  }
  return best;
}

}  // namespace

TEST_CASE("exact TV examples and metric properties") {
  CHECK(exact_tv_discrete(vec({0.2, 0.8}), vec({0.2, 0.8})) == 0.0);
  CHECK(exact_tv_discrete(vec({1, 0}), vec({0, 1})) == 2.0);
  CHECK(exact_tv_discrete(vec({0.7, 0.3}), vec({0.5, 0.5})) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_KIND(exact_tv_discrete(vec({0.7, 0.7}), vec({0.5, 0.5})), ErrorKind::InvalidArgument);
  CHECK_THROWS_KIND(exact_tv_discrete(vec({1.0}), vec({0.5, 0.5})), ErrorKind::DimensionMismatch);

  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector p = random_simplex(6, rng), q = random_simplex(6, rng), r = random_simplex(6, rng);
    const double pq = exact_tv_discrete(p, q);
    CHECK(pq >= 0.0);
    CHECK(pq == exact_tv_discrete(q, p));
    CHECK(pq <= exact_tv_discrete(p, r) + exact_tv_discrete(r, q) + 1e-12);
    // Twice the largest set-probability gap, found by enumerating subsets.
    double sup = 0.0;
    for (int mask = 0; mask < 64; ++mask) {
      double gap = 0.0;
      for (int i = 0; i < 6; ++i) {
        if (mask & (1 << i)) gap += p[i] - q[i];
      }
      sup = std::max(sup, std::abs(gap));
    }
    CHECK(pq == doctest::Approx(2 * sup).epsilon(1e-12));
  }
}

TEST_CASE("kernel distance metric properties") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_kernel(4, rng), b = random_kernel(4, rng), c = random_kernel(4, rng);
    CHECK(kernel_tv_distance(a, a) == 0.0);
    CHECK(kernel_tv_distance(a, b) == kernel_tv_distance(b, a));
    CHECK(kernel_tv_distance(a, b) <= kernel_tv_distance(a, c) + kernel_tv_distance(c, b) + 1e-12);
  }
  CHECK_THROWS_KIND(kernel_tv_distance(random_kernel(3, rng), random_kernel(4, rng)), ErrorKind::DimensionMismatch);
}

TEST_CASE("TV curves along fixed and deterministic sequences") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector pi = random_simplex(5, rng);
    const Vector start = vec({1, 0, 0, 0, 0});
    std::vector<DiscreteKernel> seq;
    std::vector<double> ms;
    for (int i = 0; i < 40; ++i) {
      const Vector q = random_simplex(5, rng);
      seq.push_back(imh_discrete_kernel(pi, q));
      ms.push_back(doeblin_bound(pi, q).M);
    }
    const std::vector<double> tv = tv_curve(seq, start);
    REQUIRE(tv.size() == 40);
    for (std::size_t n = 0; n < tv.size(); ++n) {
      CHECK(tv[n] <= tv_bound_product(std::span<const double>(ms.data(), n + 1)) + 1e-12);
      if (n > 0) CHECK(tv[n] <= tv[n - 1] + 1e-15);  // roundoff once converged
    }
    const std::vector<double> fixed = tv_curve(seq[0], start, 10);
    Vector row = start;
    for (int n = 0; n < 10; ++n) {
      row = (row.transpose() * seq[0].transition).transpose();
      CHECK(fixed[static_cast<std::size_t>(n)] == doctest::Approx(exact_tv_discrete(row, pi)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mixing times") {
  const Vector pi = vec({0.7, 0.3});
  DiscreteKernel one_step{Matrix(2, 2), pi};
  one_step.transition << 0.7, 0.3, 0.7, 0.3;
  CHECK(mixing_time_discrete(one_step, 0.5) == 1);
  CHECK(mixing_time_discrete(one_step, 1e-6) == 1);

  const DiscreteKernel stuck{Matrix::Identity(2, 2), pi};
  CHECK_THROWS_KIND(mixing_time_discrete(stuck, 0.1), ErrorKind::ContainmentViolation);

  // Two-state IMH against brute-force matrix powers.
  const DiscreteKernel k = imh_discrete_kernel(pi, vec({0.5, 0.5}));
  std::uint64_t brute = 0;
  for (int x = 0; x < 2; ++x) {
    Matrix power = k.transition;
    for (std::uint64_t n = 1;; ++n) {
      if (exact_tv_discrete(power.row(x).transpose(), pi) < 0.01) {
        brute = std::max(brute, n);
        break;
      }
      power = power * k.transition;
    }
  }
  CHECK(mixing_time_discrete(k, 0.01) == brute);

  // Geometric bound on random instances.
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector p = random_simplex(4, rng), q = random_simplex(4, rng);
    const double m = doeblin_bound(p, q).M;
    const double eps = 0.05;
    const std::uint64_t t = mixing_time_discrete(imh_discrete_kernel(p, q), eps);
    if (m > 1.0) CHECK(t <= static_cast<std::uint64_t>(std::ceil(std::log(eps / 2) / std::log(1 - 1 / m))));
  }
}

TEST_CASE("log-ratio supremum") {
  CHECK(log_ratio_sup(vec({0.7, 0.3}), vec({0.7, 0.3})) == 0.0);
  CHECK(log_ratio_sup(vec({0.7, 0.3}), vec({0.5, 0.5})) == doctest::Approx(std::log(1.4)));
  CHECK(std::log(1.4) == doctest::Approx(0.3365).epsilon(1e-4));

  const Target t = gaussian_1d_target(0.0, 1.0);
  std::vector<Vector> probes;
  for (int i = -400; i <= 400; ++i) probes.push_back(Vector::Constant(1, i * 0.025));
  const FlowParams same = make_affine(Vector::Zero(1), Vector::Zero(1));
  CHECK(std::abs(log_ratio_sup(t, same, probes)) < 1e-14);

  // Along the exact KL flow the probed sup never increases.
  double prev = std::numeric_limits<double>::infinity();
  for (double time = 0.0; time <= 3.0; time += 0.25) {
    const auto [mu, sigma] = gaussian_kl_flow_solution(1.0, 2.0, time);
    const FlowParams q = make_affine(Vector::Constant(1, mu), Vector::Constant(1, std::log(sigma)));
    const double cur = log_ratio_sup(t, q, probes);
    CHECK(cur <= prev + 1e-12);
    CHECK(std::exp(cur) <= gaussian_ratio_bound(mu, sigma) + 1e-12);
    prev = cur;
  }
  CHECK_THROWS_KIND(log_ratio_sup(phi4_target(Phi4Config{2, 0.1, 20.0}), same, probes), ErrorKind::Unnormalized);
}

TEST_CASE("two-sample KS statistic") {
  const std::vector<double> a{1, 2, 3}, b{1.5, 2.5, 3.5}, low{0, 1}, high{5, 6, 7};
  CHECK(ks_two_sample(a, a) == 0.0);
  CHECK(ks_two_sample(low, high) == 1.0);
  CHECK(ks_two_sample(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const std::vector<double> empty;
  CHECK_THROWS_KIND(ks_two_sample(a, empty), ErrorKind::InvalidArgument);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + rng() % 30), y(1 + rng() % 30);
    // Integer-valued draws force ties.
    for (double& v : x) v = std::floor(rng.normal() * 3);
    for (double& v : y) v = std::floor(rng.normal() * 3 + 0.5);
    CHECK(ks_two_sample(x, y) == doctest::Approx(ks_brute(x, y)).epsilon(1e-14));
  }
}

TEST_CASE("random projection KS") {
  Rng rng(6);
  Matrix a(500, 3);
  for (Eigen::Index r = 0; r < a.rows(); ++r) a.row(r) = rng.normal_vector(3).transpose();
  const std::vector<double> self = random_projection_ks(a, a, 20, rng);
  CHECK(std::all_of(self.begin(), self.end(), [](double k) { return k == 0.0; }));

  Matrix x(300, 1), y(200, 1);
  for (Eigen::Index r = 0; r < 300; ++r) x(r, 0) = rng.normal();
  for (Eigen::Index r = 0; r < 200; ++r) y(r, 0) = rng.normal() + 0.3;
  const std::vector<double> one_d = random_projection_ks(x, y, 10, rng);
  const std::vector<double> xs(x.data(), x.data() + 300), ys(y.data(), y.data() + 200);
  for (double k : one_d) CHECK(k == doctest::Approx(ks_two_sample(xs, ys)).epsilon(1e-14));

  const Eigen::Index n = 10000;
  Matrix base(n, 2);
  for (Eigen::Index r = 0; r < n; ++r) base.row(r) = rng.normal_vector(2).transpose();
  double prev = -1.0;
  for (double shift : {0.0, 1.0, 3.0}) {
    Matrix other(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) other.row(r) = rng.normal_vector(2).transpose();
    other.col(0).array() += shift;
    std::vector<double> ks = random_projection_ks(base, other, 50, rng);
    std::nth_element(ks.begin(), ks.begin() + 25, ks.end());
    CHECK(ks[25] > prev);
    prev = ks[25];
  }

  // Same distribution: the 99th percentile stays under the critical value.
  Matrix b2(2000, 4), c2(2000, 4);
  for (Eigen::Index r = 0; r < 2000; ++r) {
    b2.row(r) = rng.normal_vector(4).transpose();
    c2.row(r) = rng.normal_vector(4).transpose();
  }
  std::vector<double> null = random_projection_ks(b2, c2, 200, rng);
  std::sort(null.begin(), null.end());
  CHECK(null[197] < ks_critical_value(2000, 2000, 0.01));

  CHECK_THROWS_KIND(random_projection_ks(b2, Matrix::Zero(3, 2), 5, rng), ErrorKind::DimensionMismatch);
  CHECK_THROWS_KIND(random_projection_ks(b2, c2, 0, rng), ErrorKind::InvalidArgument);
}

TEST_CASE("KS reference levels") {
  CHECK(ks_noise_floor(100, 100) == doctest::Approx(std::sqrt(M_PI / 2) * std::log(2.0) * std::sqrt(0.02)));
  CHECK(ks_critical_value(100, 100, 0.05) == doctest::Approx(1.3581 * std::sqrt(0.02)).epsilon(1e-4));
  // Mean null KS at matched sizes sits near the floor.
  Rng rng(7);
  double total = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> a(1000), b(1000);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    total += ks_two_sample(a, b);
  }
  CHECK(total / 200 == doctest::Approx(ks_noise_floor(1000, 1000)).epsilon(0.1));
}

TEST_CASE("effective sample size") {
  Rng rng(8);
  const std::size_t n = 100000;
  std::vector<double> iid(n), ar(n);
  for (double& v : iid) v = rng.normal();
  double x = 0.0;
  for (double& v : ar) {
    x = 0.5 * x + std::sqrt(0.75) * rng.normal();
    v = x;
  }
  const double ratio = ess(iid) / static_cast<double>(n);
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);
  CHECK(std::abs(ess(ar) / static_cast<double>(n) - 1.0 / 3.0) < 0.05);
  const std::vector<double> constant(50, 2.0);
  CHECK(ess(constant) == 1.0);
  const std::vector<double> short_series(5, 1.0);
  CHECK_THROWS_KIND(ess(short_series), ErrorKind::InvalidArgument);
}

TEST_CASE("mode weights and classifiers") {
  Matrix all0(4, 2);
  all0.rowwise() = vec({-2, 2}).transpose();
  const Vector w0 = mode_weights(all0, bimodal_mode, 2);
  CHECK(w0[0] == 1.0);
  CHECK(w0[1] == 0.0);

  Matrix alt(6, 2);
  for (int r = 0; r < 6; ++r) alt.row(r) = (r % 2 ? vec({2.1, -1.9}) : vec({-1.8, 2.2})).transpose();
  CHECK(mode_weights(alt, bimodal_mode, 2) == vec({0.5, 0.5}));

  // Symmetrized field ensemble: every draw and its mirror image.
  Rng rng(9);
  Matrix fields(400, 16);
  for (int r = 0; r < 200; ++r) {
    const Vector phi = rng.normal_vector(16) + Vector::Constant(16, 0.3);
    fields.row(2 * r) = phi.transpose();
    fields.row(2 * r + 1) = -phi.transpose();
  }
  CHECK(mode_weights(fields, phi4_mode, 2) == vec({0.5, 0.5}));
  CHECK(phi4_mode(Vector::Constant(4, 1.0)) == 0);
  CHECK(phi4_mode(Vector::Constant(4, -1.0)) == 1);
  CHECK_THROWS_KIND(mode_weights(alt, [](const Vector&) { return 3; }, 2), ErrorKind::InvalidArgument);
}

TEST_CASE("stationarity probe") {
  const Target t = gaussian_1d_target(1.0, 0.5);
  StationarityProbeSettings exact;
  exact.rule = ProbeRule::None;
  exact.checkpoints = {0, 10, 100};
  exact.n_replicas = 5000;
  exact.seed = 3;
  const ProbeCurve flat = stationarity_probe(t, exact);
  REQUIRE(flat.ks.size() == 3);
  for (double k : flat.ks) CHECK(k < 3 * flat.noise_floor);
  CHECK_FALSE(flat.low_power);

  StationarityProbeSettings single = exact;
  single.n_replicas = 1;
  const ProbeCurve lone = stationarity_probe(t, single);
  CHECK(lone.low_power);
  CHECK(lone.ks.size() == 3);

  // MLE adaptation drags the marginal away from the target early on.
  StationarityProbeSettings mle;
  mle.checkpoints = {100, 2000};
  mle.n_replicas = 20000;
  mle.seed = 4;
  const ProbeCurve drift = stationarity_probe(t, mle);
  CHECK(drift.ks[0] > drift.ks[1]);

  // Deterministic for a fixed seed.
  const ProbeCurve again = stationarity_probe(t, exact);
  CHECK(again.ks == flat.ks);
  CHECK_THROWS_KIND(stationarity_probe(bimodal_target(), exact), ErrorKind::DimensionMismatch);
}

TEST_CASE("report validation and JSON round trip") {
  DiagnosticsReport r;
  r.acceptance_rate = {0.2, 0.3};
  r.ks = {0.01, 0.5};
  r.mode_weights = {0.25, 0.75};
  r.extra["note"] = "x";
  r.validate();
  const DiagnosticsReport back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(back.ks == r.ks);
  CHECK(back.mode_weights == r.mode_weights);
  CHECK(back.extra == r.extra);

  DiagnosticsReport bad = r;
  bad.ks.push_back(1.5);
  CHECK_THROWS_KIND(bad.validate(), ErrorKind::InvalidArgument);
  bad = r;
  bad.mode_weights = {0.5, 0.6};
  CHECK_THROWS_KIND(bad.validate(), ErrorKind::InvalidArgument);
  bad = r;
  bad.ess = {std::nan("")};
  CHECK_THROWS_KIND(bad.validate(), ErrorKind::NonFinite);
  CHECK_THROWS_KIND(report_from_json(nlohmann::json::array()), ErrorKind::CorruptArtifact);

  const auto path = std::filesystem::temp_directory_path() / "aimh_series_test.csv";
  const std::vector<double> vals{0.1, 1.0 / 3.0};
  write_series_csv(path.string(), "tv", vals);
  std::ifstream in(path);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "index,tv");
  CHECK(std::stod(second.substr(second.find(',') + 1)) == 1.0 / 3.0);
  std::filesystem::remove(path);
}
