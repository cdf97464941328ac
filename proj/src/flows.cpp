#include "aimh/flows.hpp"

#include <cmath>
#include <string>

#include "aimh/error.hpp"

namespace aimh {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct Split {
  Eigen::Index pass_start, pass_size, update_start, update_size;
};

Split split_of(const CouplingLayer& layer, Eigen::Index dim) {
  const Eigen::Index k = first_half(dim);
  if (layer.update_first) return {k, dim - k, 0, k};
  return {0, k, k, dim - k};
}

void check_dim(Eigen::Index got, Eigen::Index want, const char* who) {
  if (got != want) {
    throw Error(ErrorKind::DimensionMismatch, std::string(who) + ": expected dimension " +
                                                  std::to_string(want) + ", got " +
                                                  std::to_string(got));
  }
}

void check_finite_layer(const Matrix& m, std::size_t layer, const char* pass) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NonFinite, std::string(pass) + " pass produced a non-finite value at layer " +
                                          std::to_string(layer));
  }
}

Vector std_normal_log_prob(const Matrix& z) {
  Vector out = -0.5 * z.colwise().squaredNorm().transpose();
  out.array() -= 0.5 * kLog2Pi * static_cast<double>(z.rows());
  return out;
}

Vector flatten_grads(const std::vector<ad::DenseParams>& scale,
                     const std::vector<ad::DenseParams>& translate) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < scale.size(); ++l) {
    total += scale[l].param_count() + translate[l].param_count();
  }
  Vector flat(static_cast<Eigen::Index>(total));
  std::size_t offset = 0;
  for (std::size_t l = 0; l < scale.size(); ++l) {
    const std::size_t ns = scale[l].param_count();
    ad::flatten_into(scale[l], std::span<double>(flat.data() + offset, ns));
    offset += ns;
    const std::size_t nt = translate[l].param_count();
    ad::flatten_into(translate[l], std::span<double>(flat.data() + offset, nt));
    offset += nt;
  }
  return flat;
}

// ---- RealNVP core ---------------------------------------------------------

// Raw scale-net output to log-scale. With a bound b > 0 the map is b*tanh(raw/b).
Matrix bound_scale(const RealNvpParams& p, Matrix raw) {
  if (p.scale_bound > 0.0) raw = (p.scale_bound * (raw.array() / p.scale_bound).tanh()).matrix();
  return raw;
}

// d(log-scale)/d(raw), expressed through the bounded value.
void chain_scale(const RealNvpParams& p, const Matrix& scale, Matrix& g) {
  if (p.scale_bound > 0.0) {
    g.array() *= 1.0 - (scale.array() / p.scale_bound).square();
  }
}

Matrix realnvp_forward(const RealNvpParams& p, const Matrix& zs, Vector& log_det) {
  Matrix x = zs;
  log_det = Vector::Zero(zs.cols());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const Split s = split_of(layer, p.dim);
    const Matrix a = x.middleRows(s.pass_start, s.pass_size);
    const Matrix scale = bound_scale(p, ad::mlp_forward_batch(layer.scale_net, a));
    const Matrix shift = ad::mlp_forward_batch(layer.translate_net, a);
    x.middleRows(s.update_start, s.update_size) =
        (x.middleRows(s.update_start, s.update_size).array() * scale.array().exp() + shift.array())
            .matrix();
    log_det += scale.colwise().sum().transpose();
    check_finite_layer(x.middleRows(s.update_start, s.update_size), l, "forward");
  }
  return x;
}

Matrix realnvp_inverse(const RealNvpParams& p, const Matrix& xs, Vector& log_det) {
  Matrix y = xs;
  log_det = Vector::Zero(xs.cols());
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& layer = p.layers[l];
    const Split s = split_of(layer, p.dim);
    const Matrix a = y.middleRows(s.pass_start, s.pass_size);
    const Matrix scale = bound_scale(p, ad::mlp_forward_batch(layer.scale_net, a));
    const Matrix shift = ad::mlp_forward_batch(layer.translate_net, a);
    y.middleRows(s.update_start, s.update_size) =
        ((y.middleRows(s.update_start, s.update_size) - shift).array() * (-scale.array()).exp())
            .matrix();
    log_det -= scale.colwise().sum().transpose();
    check_finite_layer(y.middleRows(s.update_start, s.update_size), l, "inverse");
  }
  return y;
}

Vector realnvp_log_prob_grad_sum(const RealNvpParams& p, const Matrix& xs, Vector* log_probs) {
  const std::size_t n_layers = p.layers.size();
  std::vector<ad::GradTape> scale_tapes;
  std::vector<ad::GradTape> shift_tapes;
  std::vector<Matrix> outputs;
  std::vector<Matrix> inv_scales;
  std::vector<Matrix> scales;
  scale_tapes.reserve(n_layers);
  shift_tapes.reserve(n_layers);

  Matrix y = xs;
  Vector log_det = Vector::Zero(xs.cols());
  // Inverse pass, recorded in processing order (last layer first).
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = p.layers[l];
    const Split s = split_of(layer, p.dim);
    const Matrix a = y.middleRows(s.pass_start, s.pass_size);
    scale_tapes.emplace_back(layer.scale_net, a);
    shift_tapes.emplace_back(layer.translate_net, a);
    const Matrix& scale = scales.emplace_back(bound_scale(p, scale_tapes.back().output()));
    const Matrix& shift = shift_tapes.back().output();
    Matrix inv_scale = (-scale.array()).exp().matrix();
    Matrix b = ((y.middleRows(s.update_start, s.update_size) - shift).array() * inv_scale.array())
                   .matrix();
    check_finite_layer(b, l, "inverse");
    log_det -= scale.colwise().sum().transpose();
    y.middleRows(s.update_start, s.update_size) = b;
    outputs.push_back(std::move(b));
    inv_scales.push_back(std::move(inv_scale));
  }
  if (log_probs != nullptr) *log_probs = std_normal_log_prob(y) + log_det;

  std::vector<ad::DenseParams> scale_grads, shift_grads;
  for (const auto& layer : p.layers) {
    scale_grads.push_back(ad::zeros_like(layer.scale_net));
    shift_grads.push_back(ad::zeros_like(layer.translate_net));
  }
  Matrix g = -y;
  for (std::size_t j = n_layers; j-- > 0;) {
    const std::size_t l = n_layers - 1 - j;
    const Split s = split_of(p.layers[l], p.dim);
    const Matrix gb = g.middleRows(s.update_start, s.update_size);
    const Matrix g_in = gb.cwiseProduct(inv_scales[j]);
    const Matrix g_shift = -g_in;
    Matrix g_scale = -gb.cwiseProduct(outputs[j]);
    g_scale.array() -= 1.0;
    chain_scale(p, scales[j], g_scale);
    Matrix ga = g.middleRows(s.pass_start, s.pass_size);
    ga += scale_tapes[j].backward(g_scale, &scale_grads[l]);
    ga += shift_tapes[j].backward(g_shift, &shift_grads[l]);
    g.middleRows(s.update_start, s.update_size) = g_in;
    g.middleRows(s.pass_start, s.pass_size) = ga;
  }
  return flatten_grads(scale_grads, shift_grads);
}

Vector realnvp_path_grad_sum(const RealNvpParams& p, const Target& target, const Matrix& zs,
                             double cotangent) {
  const std::size_t n_layers = p.layers.size();
  std::vector<ad::GradTape> scale_tapes;
  std::vector<ad::GradTape> shift_tapes;
  std::vector<Matrix> inputs;
  std::vector<Matrix> scales_exp;
  std::vector<Matrix> scales;
  scale_tapes.reserve(n_layers);
  shift_tapes.reserve(n_layers);

  Matrix x = zs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = p.layers[l];
    const Split s = split_of(layer, p.dim);
    const Matrix a = x.middleRows(s.pass_start, s.pass_size);
    scale_tapes.emplace_back(layer.scale_net, a);
    shift_tapes.emplace_back(layer.translate_net, a);
    Matrix e = scales.emplace_back(bound_scale(p, scale_tapes.back().output())).array().exp().matrix();
    Matrix b = x.middleRows(s.update_start, s.update_size);
    x.middleRows(s.update_start, s.update_size) =
        (b.array() * e.array() + shift_tapes.back().output().array()).matrix();
    check_finite_layer(x.middleRows(s.update_start, s.update_size), l, "forward");
    inputs.push_back(std::move(b));
    scales_exp.push_back(std::move(e));
  }

  Matrix g(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Vector grad = target.grad_log_density(x.col(c));
    if (!grad.allFinite()) throw Error(ErrorKind::NonFinite, "target gradient is not finite");
    g.col(c) = -cotangent * grad;
  }

  std::vector<ad::DenseParams> scale_grads, shift_grads;
  for (const auto& layer : p.layers) {
    scale_grads.push_back(ad::zeros_like(layer.scale_net));
    shift_grads.push_back(ad::zeros_like(layer.translate_net));
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const Split s = split_of(p.layers[l], p.dim);
    const Matrix g_out = g.middleRows(s.update_start, s.update_size);
    const Matrix g_in = g_out.cwiseProduct(scales_exp[l]);
    Matrix g_scale = g_in.cwiseProduct(inputs[l]);
    g_scale.array() -= cotangent;
    chain_scale(p, scales[l], g_scale);
    Matrix ga = g.middleRows(s.pass_start, s.pass_size);
    ga += scale_tapes[l].backward(g_scale, &scale_grads[l]);
    ga += shift_tapes[l].backward(g_out, &shift_grads[l]);
    g.middleRows(s.update_start, s.update_size) = g_in;
    g.middleRows(s.pass_start, s.pass_size) = ga;
  }
  return flatten_grads(scale_grads, shift_grads);
}

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

}  // namespace

Eigen::Index first_half(Eigen::Index dim) { return dim / 2; }

AffineParams make_affine(const Vector& shift, const Vector& log_scale) {
  if (shift.size() != log_scale.size()) {
    throw Error(ErrorKind::DimensionMismatch, "affine shift and log-scale lengths differ");
  }
  return AffineParams{shift, log_scale};
}

RealNvpParams make_realnvp(Eigen::Index dim, const RealNvpArchitecture& arch, Rng& rng) {
  if (dim < 2) throw Error(ErrorKind::InvalidArgument, "RealNVP needs dimension >= 2");
  if (arch.layer_pairs < 1 || arch.hidden_width < 1 || arch.hidden_layers < 0) {
    throw Error(ErrorKind::InvalidArgument, "invalid RealNVP architecture");
  }
  RealNvpParams params;
  params.dim = dim;
  params.scale_bound = arch.scale_bound;
  const Eigen::Index k = first_half(dim);
  for (int l = 0; l < 2 * arch.layer_pairs; ++l) {
    CouplingLayer layer;
    layer.update_first = (l % 2) == 1;
    const int pass = static_cast<int>(layer.update_first ? dim - k : k);
    const int update = static_cast<int>(layer.update_first ? k : dim - k);
    std::vector<int> widths{pass};
    for (int h = 0; h < arch.hidden_layers; ++h) widths.push_back(arch.hidden_width);
    widths.push_back(update);
    layer.scale_net = ad::make_mlp(widths, arch.activation, rng, true);
    layer.translate_net = ad::make_mlp(widths, arch.activation, rng, true);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Eigen::Index flow_dim(const FlowParams& params) {
  return std::visit(overloaded{[](const AffineParams& p) { return p.shift.size(); },
                               [](const RealNvpParams& p) { return p.dim; }},
                    params);
}

std::size_t param_count(const FlowParams& params) {
  return std::visit(
      overloaded{[](const AffineParams& p) { return static_cast<std::size_t>(2 * p.shift.size()); },
                 [](const RealNvpParams& p) {
                   std::size_t n = 0;
                   for (const auto& layer : p.layers) {
                     n += layer.scale_net.param_count() + layer.translate_net.param_count();
                   }
                   return n;
                 }},
      params);
}

Vector flatten(const FlowParams& params) {
  Vector flat(static_cast<Eigen::Index>(param_count(params)));
  std::visit(overloaded{[&](const AffineParams& p) {
                          flat << p.shift, p.log_scale;
                        },
                        [&](const RealNvpParams& p) {
                          std::size_t offset = 0;
                          for (const auto& layer : p.layers) {
                            for (const auto* net : {&layer.scale_net, &layer.translate_net}) {
                              const std::size_t n = net->param_count();
                              ad::flatten_into(*net, std::span<double>(flat.data() + offset, n));
                              offset += n;
                            }
                          }
                        }},
             params);
  return flat;
}

void unflatten(FlowParams& params, const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != param_count(params)) {
    throw Error(ErrorKind::DimensionMismatch, "flat parameter vector has the wrong length");
  }
  std::visit(overloaded{[&](AffineParams& p) {
                          const Eigen::Index m = p.shift.size();
                          p.shift = flat.head(m);
                          p.log_scale = flat.tail(m);
                        },
                        [&](RealNvpParams& p) {
                          std::size_t offset = 0;
                          for (auto& layer : p.layers) {
                            for (auto* net : {&layer.scale_net, &layer.translate_net}) {
                              const std::size_t n = net->param_count();
                              ad::unflatten_from(*net,
                                                 std::span<const double>(flat.data() + offset, n));
                              offset += n;
                            }
                          }
                        }},
             params);
}

Matrix flow_forward_batch(const FlowParams& params, const Matrix& zs, Vector* log_det) {
  check_dim(zs.rows(), flow_dim(params), "flow_forward");
  Vector ld;
  Matrix x = std::visit(
      overloaded{[&](const AffineParams& p) -> Matrix {
                   Matrix out = (zs.array().colwise() * p.log_scale.array().exp()).matrix();
                   out.colwise() += p.shift;
                   ld = Vector::Constant(zs.cols(), p.log_scale.sum());
                   check_finite_layer(out, 0, "forward");
                   return out;
                 },
                 [&](const RealNvpParams& p) -> Matrix { return realnvp_forward(p, zs, ld); }},
      params);
  if (log_det != nullptr) *log_det = std::move(ld);
  return x;
}

FlowResult flow_forward(const FlowParams& params, const Vector& z) {
  Vector ld;
  Matrix x = flow_forward_batch(params, z, &ld);
  return {x.col(0), ld[0]};
}

FlowResult flow_inverse(const FlowParams& params, const Vector& x) {
  check_dim(x.size(), flow_dim(params), "flow_inverse");
  return std::visit(
      overloaded{[&](const AffineParams& p) -> FlowResult {
                   Vector z = ((x - p.shift).array() * (-p.log_scale.array()).exp()).matrix();
                   check_finite_layer(z, 0, "inverse");
                   return {z, -p.log_scale.sum()};
                 },
                 [&](const RealNvpParams& p) -> FlowResult {
                   Vector ld;
                   Matrix z = realnvp_inverse(p, x, ld);
                   return {z.col(0), ld[0]};
                 }},
      params);
}

Vector flow_log_prob_batch(const FlowParams& params, const Matrix& xs) {
  check_dim(xs.rows(), flow_dim(params), "flow_log_prob");
  return std::visit(
      overloaded{[&](const AffineParams& p) -> Vector {
                   Matrix z = ((xs.colwise() - p.shift).array().colwise() *
                               (-p.log_scale.array()).exp())
                                  .matrix();
                   check_finite_layer(z, 0, "inverse");
                   Vector out = std_normal_log_prob(z);
                   out.array() -= p.log_scale.sum();
                   return out;
                 },
                 [&](const RealNvpParams& p) -> Vector {
                   Vector ld;
                   Matrix z = realnvp_inverse(p, xs, ld);
                   return std_normal_log_prob(z) + ld;
                 }},
      params);
}

double flow_log_prob(const FlowParams& params, const Vector& x) {
  return flow_log_prob_batch(params, x)[0];
}

Vector flow_sample(const FlowParams& params, Rng& rng) {
  return flow_forward(params, rng.normal_vector(flow_dim(params))).value;
}

Vector flow_log_prob_param_grad_sum(const FlowParams& params, const Matrix& xs,
                                    Vector* log_probs) {
  check_dim(xs.rows(), flow_dim(params), "flow_log_prob_param_grad");
  return std::visit(
      overloaded{[&](const AffineParams& p) -> Vector {
                   const Vector inv_scale = (-p.log_scale.array()).exp();
                   const Matrix z =
                       ((xs.colwise() - p.shift).array().colwise() * inv_scale.array()).matrix();
                   check_finite_layer(z, 0, "inverse");
                   if (log_probs != nullptr) {
                     *log_probs = std_normal_log_prob(z);
                     log_probs->array() -= p.log_scale.sum();
                   }
                   const Eigen::Index m = p.shift.size();
                   Vector grad(2 * m);
                   grad.head(m) = (z.rowwise().sum().array() * inv_scale.array()).matrix();
                   grad.tail(m) = z.array().square().rowwise().sum() - static_cast<double>(xs.cols());
                   return grad;
                 },
                 [&](const RealNvpParams& p) -> Vector {
                   return realnvp_log_prob_grad_sum(p, xs, log_probs);
                 }},
      params);
}

Vector flow_log_prob_param_grad(const FlowParams& params, const Vector& x) {
  return flow_log_prob_param_grad_sum(params, x);
}

Vector flow_sample_path_grad_sum(const FlowParams& params, const Target& target,
                                 const Matrix& zs, double cotangent) {
  if (!target.has_gradient()) {
    throw Error(ErrorKind::MissingCapability, "target '" + target.name + "' has no gradient");
  }
  check_dim(zs.rows(), flow_dim(params), "flow_sample_path_grad");
  return std::visit(
      overloaded{[&](const AffineParams& p) -> Vector {
                   const Eigen::Index m = p.shift.size();
                   const Vector scale = p.log_scale.array().exp();
                   Vector grad = Vector::Zero(2 * m);
                   for (Eigen::Index c = 0; c < zs.cols(); ++c) {
                     const Vector z = zs.col(c);
                     const Vector x = p.shift + (scale.array() * z.array()).matrix();
                     const Vector tg = target.grad_log_density(x);
                     if (!tg.allFinite()) {
                       throw Error(ErrorKind::NonFinite, "target gradient is not finite");
                     }
                     const Vector g = -cotangent * tg;
                     grad.head(m) += g;
                     grad.tail(m) += (g.array() * scale.array() * z.array()).matrix();
                     grad.tail(m).array() -= cotangent;
                   }
                   return grad;
                 },
                 [&](const RealNvpParams& p) -> Vector {
                   return realnvp_path_grad_sum(p, target, zs, cotangent);
                 }},
      params);
}

Vector flow_sample_path_grad(const FlowParams& params, const Target& target, const Vector& z,
                             double cotangent) {
  return flow_sample_path_grad_sum(params, target, z, cotangent);
}

double DiagGaussian::log_prob(const Vector& x) const {
  check_dim(x.size(), mean.size(), "DiagGaussian");
  return log_normal_diag(x, mean, sd);
}

Vector DiagGaussian::sample(Rng& rng) const {
  return mean + (sd.array() * rng.normal_vector(mean.size()).array()).matrix();
}

void MixtureProposal::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "mixture weight beta must lie strictly inside (0,1)");
  }
  if (fixed.mean.size() != flow_dim(adaptive) || fixed.sd.size() != fixed.mean.size()) {
    throw Error(ErrorKind::DimensionMismatch, "mixture components disagree on dimension");
  }
  if (!(fixed.sd.array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidArgument, "fixed component needs positive scales");
  }
}

double mixture_log_prob(const MixtureProposal& mix, const Vector& x) {
  const double a = std::log(mix.beta) + mix.fixed.log_prob(x);
  const double b = std::log1p(-mix.beta) + flow_log_prob(mix.adaptive, x);
  const double mx = std::max(a, b);
  if (!std::isfinite(mx)) return mx;
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

Vector mixture_sample(const MixtureProposal& mix, Rng& rng) {
  if (rng.uniform() < mix.beta) return mix.fixed.sample(rng);
  return flow_sample(mix.adaptive, rng);
}

ProposalDraw proposal_draw(const FlowParams& params, Rng& rng) {
  const Vector z = rng.normal_vector(flow_dim(params));
  const FlowResult r = flow_forward(params, z);
  return {r.value, -0.5 * z.squaredNorm() - 0.5 * kLog2Pi * static_cast<double>(z.size()) - r.log_det};
}

double proposal_log_prob(const FlowParams& params, const Vector& x) {
  return flow_log_prob(params, x);
}

ProposalDraw proposal_draw(const MixtureProposal& mix, Rng& rng) {
  Vector x = mixture_sample(mix, rng);
  const double lp = mixture_log_prob(mix, x);
  return {std::move(x), lp};
}

double proposal_log_prob(const MixtureProposal& mix, const Vector& x) {
  return mixture_log_prob(mix, x);
}

ProposalDraw proposal_draw(const DiagGaussian& g, Rng& rng) {
  Vector x = g.sample(rng);
  const double lp = g.log_prob(x);
  return {std::move(x), lp};
}

double proposal_log_prob(const DiagGaussian& g, const Vector& x) { return g.log_prob(x); }

// ---- checkpoints ------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json net_json(const ad::DenseParams& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    layers.push_back({{"rows", layer.weight.rows()},
                      {"cols", layer.weight.cols()},
                      {"weight", std::vector<double>(layer.weight.data(),
                                                     layer.weight.data() + layer.weight.size())},
                      {"bias", vec_json(layer.bias)}});
  }
  return {{"activation", net.activation == ad::Activation::Relu ? "relu" : "identity"},
          {"layers", layers}};
}

ad::DenseParams json_net(const nlohmann::json& j) {
  ad::DenseParams net;
  const auto act = j.at("activation").get<std::string>();
  if (act == "relu") {
    net.activation = ad::Activation::Relu;
  } else if (act == "identity") {
    net.activation = ad::Activation::Identity;
  } else {
    throw Error(ErrorKind::CorruptArtifact, "unknown activation '" + act + "'");
  }
  for (const auto& jl : j.at("layers")) {
    const auto rows = jl.at("rows").get<Eigen::Index>();
    const auto cols = jl.at("cols").get<Eigen::Index>();
    const auto w = jl.at("weight").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
      throw Error(ErrorKind::CorruptArtifact, "weight entry count does not match its shape");
    }
    net.layers.push_back({Eigen::Map<const Matrix>(w.data(), rows, cols), json_vec(jl.at("bias"))});
  }
  net.validate();
  return net;
}

}  // namespace

nlohmann::json flow_to_json(const FlowParams& params) {
  return std::visit(
      overloaded{[](const AffineParams& p) -> nlohmann::json {
                   return {{"version", kCheckpointVersion},
                           {"family", "affine"},
                           {"shift", vec_json(p.shift)},
                           {"log_scale", vec_json(p.log_scale)}};
                 },
                 [](const RealNvpParams& p) -> nlohmann::json {
                   nlohmann::json layers = nlohmann::json::array();
                   for (const auto& layer : p.layers) {
                     layers.push_back({{"update_first", layer.update_first},
                                       {"scale", net_json(layer.scale_net)},
                                       {"translate", net_json(layer.translate_net)}});
                   }
                   return {{"version", kCheckpointVersion},
                           {"family", "realnvp"},
                           {"dim", p.dim},
                           {"scale_bound", p.scale_bound},
                           {"layers", layers}};
                 }},
      params);
}

FlowParams flow_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorKind::CorruptArtifact, "unsupported checkpoint version");
    }
    const auto family = j.at("family").get<std::string>();
    if (family == "affine") return make_affine(json_vec(j.at("shift")), json_vec(j.at("log_scale")));
    if (family == "realnvp") {
      RealNvpParams p;
      p.dim = j.at("dim").get<Eigen::Index>();
      p.scale_bound = j.value("scale_bound", 0.0);
      for (const auto& jl : j.at("layers")) {
        p.layers.push_back({jl.at("update_first").get<bool>(), json_net(jl.at("scale")),
                            json_net(jl.at("translate"))});
      }
      return p;
    }
    throw Error(ErrorKind::CorruptArtifact, "unknown flow family '" + family + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptArtifact, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace aimh
