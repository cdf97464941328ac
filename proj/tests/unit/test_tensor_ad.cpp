#include <vector>

#include "aimh/tensor_ad.hpp"
#include "helpers.hpp"

using namespace aimh;
using testing::rel_err;

namespace {

ad::DenseParams random_mlp(std::vector<int> widths, Rng& rng) {
  ad::DenseParams p = ad::make_mlp(widths, ad::Activation::Relu, rng, false);
  for (auto& layer : p.layers) layer.bias = rng.normal_vector(layer.bias.size()) * 0.3;
  return p;
}

// Straight-line evaluation written independently of the library.
Vector reference_forward(const ad::DenseParams& p, const Vector& x) {
  std::vector<double> h(x.data(), x.data() + x.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& w = p.layers[l].weight;
    std::vector<double> next(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double acc = p.layers[l].bias[i];
      for (Eigen::Index j = 0; j < w.cols(); ++j) acc += w(i, j) * h[static_cast<std::size_t>(j)];
      const bool last = l + 1 == p.layers.size();
      next[static_cast<std::size_t>(i)] = (!last && acc < 0.0) ? 0.0 : acc;
    }
    h = std::move(next);
  }
  return Eigen::Map<Vector>(h.data(), static_cast<Eigen::Index>(h.size()));
}

Vector flat(const ad::DenseParams& p) {
  Vector v(static_cast<Eigen::Index>(p.param_count()));
  ad::flatten_into(p, std::span<double>(v.data(), p.param_count()));
  return v;
}

}  // namespace

TEST_CASE("zero perceptron maps everything to zero") {
  Rng rng(1);
  const std::vector<int> widths{3, 5, 5, 2};
  ad::DenseParams p = ad::zeros_like(ad::make_mlp(widths, ad::Activation::Relu, rng, false));
  CHECK(ad::mlp_forward(p, rng.normal_vector(3)).isZero(0.0));
}

TEST_CASE("single identity layer passes input through") {
  ad::DenseParams p;
  p.layers.push_back({Matrix::Identity(4, 4), Vector::Zero(4)});
  const Vector v = (Vector(4) << 1.5, -2.0, 0.0, 3.25).finished();
  CHECK(ad::mlp_forward(p, v) == v);
}

TEST_CASE("forward agrees with a straight-line evaluation") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const ad::DenseParams p = random_mlp({4, 7, 6, 3}, rng);
    const Vector x = rng.normal_vector(4);
    const Vector got = ad::mlp_forward(p, x);
    const Vector want = reference_forward(p, x);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward is bit-for-bit deterministic and batch-consistent") {
  Rng rng(3);
  const ad::DenseParams p = random_mlp({5, 8, 8, 5}, rng);
  Matrix xs(5, 6);
  for (int c = 0; c < 6; ++c) xs.col(c) = rng.normal_vector(5);
  const Matrix batch = ad::mlp_forward_batch(p, xs);
  const ad::GradTape tape(p, xs);
  for (int c = 0; c < 6; ++c) {
    const Vector a = ad::mlp_forward(p, xs.col(c));
    CHECK(a == ad::mlp_forward(p, xs.col(c)));
    CHECK((a - batch.col(c)).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK(tape.output() == batch);
}

TEST_CASE("dimension mismatch names the layer") {
  Rng rng(4);
  const std::vector<int> widths{3, 4, 2};
  const ad::DenseParams p = ad::make_mlp(widths, ad::Activation::Relu, rng, false);
  CHECK_THROWS_KIND(ad::mlp_forward(p, Vector::Zero(5)), ErrorKind::DimensionMismatch);
  try {
    ad::mlp_forward(p, Vector::Zero(5));
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  CHECK_THROWS_KIND(ad::mlp_param_grad(p, Vector::Zero(3), Vector::Zero(3)),
                    ErrorKind::DimensionMismatch);

  ad::DenseParams broken = p;
  broken.layers[1].weight = Matrix::Zero(2, 3);
  CHECK_THROWS_KIND(broken.validate(), ErrorKind::DimensionMismatch);
}

TEST_CASE("zero cotangent gives a zero gradient") {
  Rng rng(5);
  const ad::DenseParams p = random_mlp({3, 6, 6, 2}, rng);
  const ad::DenseParams g = ad::mlp_param_grad(p, rng.normal_vector(3), Vector::Zero(2));
  CHECK(flat(g).isZero(0.0));
}

TEST_CASE("linear layer gradient is the outer product") {
  Rng rng(6);
  ad::DenseParams p;
  p.activation = ad::Activation::Identity;
  p.layers.push_back({Matrix::Random(3, 4), Vector::Zero(3)});
  const Vector x = rng.normal_vector(4);
  const Vector c = rng.normal_vector(3);
  const ad::DenseParams g = ad::mlp_param_grad(p, x, c);
  CHECK((g.layers[0].weight - c * x.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((g.layers[0].bias - c).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("relu subgradient at zero is zero") {
  // Hidden pre-activation is exactly 0, so nothing flows into the first layer.
  ad::DenseParams p;
  p.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
  p.layers.push_back({Matrix::Constant(1, 1, 2.0), Vector::Zero(1)});
  const ad::DenseParams g = ad::mlp_param_grad(p, Vector::Zero(1), Vector::Ones(1));
  CHECK(g.layers[0].weight(0, 0) == 0.0);
  CHECK(g.layers[0].bias[0] == 0.0);
}

TEST_CASE("parameter gradient matches central differences") {
  Rng rng(7);
  double worst = 0.0;
  int kinks = 0, checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int in = 1 + static_cast<int>(rng() % 5);
    const int hidden = 2 + static_cast<int>(rng() % 6);
    const int out = 1 + static_cast<int>(rng() % 4);
    ad::DenseParams p = random_mlp({in, hidden, hidden, out}, rng);
    const Vector x = rng.normal_vector(in);
    const Vector c = rng.normal_vector(out);
    const Vector g = flat(ad::mlp_param_grad(p, x, c));
    Vector theta = flat(p);
    auto central = [&](Eigen::Index i, double h) {
      const double keep = theta[i];
      theta[i] = keep + h;
      ad::unflatten_from(p, std::span<const double>(theta.data(), p.param_count()));
      const double up = c.dot(ad::mlp_forward(p, x));
      theta[i] = keep - h;
      ad::unflatten_from(p, std::span<const double>(theta.data(), p.param_count()));
      const double down = c.dot(ad::mlp_forward(p, x));
      theta[i] = keep;
      return (up - down) / (2 * h);
    };
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double fd = central(i, 1e-5);
      // A relu kink inside the stencil makes the two step sizes disagree.
      if (rel_err(fd, central(i, 2.5e-6), 1e-3) > 1e-6) {
        ++kinks;
        continue;
      }
      worst = std::max(worst, rel_err(g[i], fd, 1e-3));
      ++checked;
    }
    ad::unflatten_from(p, std::span<const double>(theta.data(), p.param_count()));
  }
  CHECK(worst < 1e-4);
  CHECK(kinks * 100 < checked);
}

TEST_CASE("tape backward sums per-sample gradients and returns input cotangent") {
  Rng rng(8);
  const ad::DenseParams p = random_mlp({3, 5, 4}, rng);
  Matrix xs(3, 4), cs(4, 4);
  for (int c = 0; c < 4; ++c) {
    xs.col(c) = rng.normal_vector(3);
    cs.col(c) = rng.normal_vector(4);
  }
  ad::DenseParams acc = ad::zeros_like(p);
  const ad::GradTape tape(p, xs);
  const Matrix gin = tape.backward(cs, &acc);
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(p.param_count()));
  for (int c = 0; c < 4; ++c) sum += flat(ad::mlp_param_grad(p, xs.col(c), cs.col(c)));
  CHECK((flat(acc) - sum).cwiseAbs().maxCoeff() < 1e-12);

  // Input cotangent against finite differences for sample 0.
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Vector up = xs.col(0), down = xs.col(0);
    up[i] += h;
    down[i] -= h;
    const double fd =
        (cs.col(0).dot(ad::mlp_forward(p, up)) - cs.col(0).dot(ad::mlp_forward(p, down))) / (2 * h);
    CHECK(gin(i, 0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("flatten and unflatten round trip; make_mlp zero_last") {
  Rng rng(9);
  const std::vector<int> widths{2, 3, 2};
  const ad::DenseParams p = ad::make_mlp(widths, ad::Activation::Relu, rng, true);
  CHECK(p.layers.back().weight.isZero(0.0));
  CHECK(p.layers.back().bias.isZero(0.0));
  CHECK(p.param_count() == 2 * 3 + 3 + 3 * 2 + 2);
  ad::DenseParams q = ad::zeros_like(p);
  const Vector v = flat(p);
  ad::unflatten_from(q, std::span<const double>(v.data(), p.param_count()));
  CHECK(flat(q) == v);
  CHECK(p.input_width() == 2);
  CHECK(p.output_width() == 2);
}
