#include "aimh/tensor_ad.hpp"

#include <cmath>
#include <string>

#include "aimh/error.hpp"

namespace aimh::ad {

namespace {

Matrix apply_activation(Activation act, const Matrix& pre) {
  if (act == Activation::Relu) return pre.cwiseMax(0.0);
  return pre;
}

void check_input(const DenseParams& params, Eigen::Index rows) {
  if (params.layers.empty()) throw Error(ErrorKind::InvalidArgument, "perceptron has no layers");
  if (rows != params.input_width()) {
    throw Error(ErrorKind::DimensionMismatch,
                "layer 0 expects input width " + std::to_string(params.input_width()) +
                    ", got " + std::to_string(rows));
  }
}

}  // namespace

Eigen::Index DenseParams::input_width() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

Eigen::Index DenseParams::output_width() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

std::size_t DenseParams::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

void DenseParams::validate() const {
  if (layers.empty()) throw Error(ErrorKind::InvalidArgument, "perceptron has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "layer " + std::to_string(l) + " bias length " +
                      std::to_string(layer.bias.size()) + " != weight rows " +
                      std::to_string(layer.weight.rows()));
    }
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "layer " + std::to_string(l) + " input width " +
                      std::to_string(layer.weight.cols()) + " != layer " +
                      std::to_string(l - 1) + " output width " +
                      std::to_string(layers[l - 1].weight.rows()));
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw Error(ErrorKind::NonFinite, "layer " + std::to_string(l) + " has non-finite entries");
    }
  }
}

DenseParams make_mlp(std::span<const int> widths, Activation activation, Rng& rng,
                     bool zero_last) {
  if (widths.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least in and out widths");
  DenseParams params;
  params.activation = activation;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    DenseLayer layer{Matrix::Zero(out, in), Vector::Zero(out)};
    const bool last = l + 2 == widths.size();
    if (!(last && zero_last)) {
      const double limit = std::sqrt(6.0 / (in + out));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
      }
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

DenseParams zeros_like(const DenseParams& params) {
  DenseParams out;
  out.activation = params.activation;
  out.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    out.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                          Vector::Zero(layer.bias.size())});
  }
  return out;
}

Vector mlp_forward(const DenseParams& params, const Vector& input) {
  check_input(params, input.size());
  Vector h = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.cols() != h.size()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "layer " + std::to_string(l) + " expects width " +
                      std::to_string(layer.weight.cols()) + ", got " + std::to_string(h.size()));
    }
    Vector pre = layer.weight * h + layer.bias;
    const bool last = l + 1 == params.layers.size();
    h = last ? pre : Vector(apply_activation(params.activation, pre));
  }
  return h;
}

DenseParams mlp_param_grad(const DenseParams& params, const Vector& input,
                           const Vector& output_cotangent) {
  if (output_cotangent.size() != params.output_width()) {
    throw Error(ErrorKind::DimensionMismatch,
                "cotangent length " + std::to_string(output_cotangent.size()) +
                    " != output width " + std::to_string(params.output_width()));
  }
  GradTape tape(params, input);
  DenseParams grad = zeros_like(params);
  tape.backward(output_cotangent, &grad);
  return grad;
}

void flatten_into(const DenseParams& params, std::span<double> out) {
  std::size_t k = 0;
  for (const auto& layer : params.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) out[k++] = layer.weight.data()[i];
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) out[k++] = layer.bias[i];
  }
}

void unflatten_from(DenseParams& params, std::span<const double> in) {
  std::size_t k = 0;
  for (auto& layer : params.layers) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = in[k++];
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = in[k++];
  }
}

GradTape::GradTape(const DenseParams& params, const Matrix& inputs) : params_(&params) {
  check_input(params, inputs.rows());
  activations_.reserve(params.layers.size() + 1);
  preacts_.reserve(params.layers.size());
  activations_.push_back(inputs);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.cols() != activations_.back().rows()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "layer " + std::to_string(l) + " expects width " +
                      std::to_string(layer.weight.cols()) + ", got " +
                      std::to_string(activations_.back().rows()));
    }
    Matrix pre = layer.weight * activations_.back();
    pre.colwise() += layer.bias;
    const bool last = l + 1 == params.layers.size();
    activations_.push_back(last ? pre : apply_activation(params.activation, pre));
    preacts_.push_back(std::move(pre));
  }
}

Matrix GradTape::backward(const Matrix& output_cotangent, DenseParams* param_grad) const {
  const auto& layers = params_->layers;
  if (output_cotangent.rows() != output().rows() || output_cotangent.cols() != output().cols()) {
    throw Error(ErrorKind::DimensionMismatch, "cotangent shape does not match tape output");
  }
  Matrix g = output_cotangent;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const bool last = l + 1 == layers.size();
    if (!last && params_->activation == Activation::Relu) {
      // relu'(0) := 0
      g = g.cwiseProduct((preacts_[l].array() > 0.0).cast<double>().matrix());
    }
    if (param_grad != nullptr) {
      param_grad->layers[l].weight.noalias() += g * activations_[l].transpose();
      param_grad->layers[l].bias += g.rowwise().sum();
    }
    g = layers[l].weight.transpose() * g;
  }
  return g;
}

}  // namespace aimh::ad

namespace aimh::ad {

Matrix mlp_forward_batch(const DenseParams& params, const Matrix& inputs) {
  check_input(params, inputs.rows());
  Matrix h = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix pre = layer.weight * h;
    pre.colwise() += layer.bias;
    const bool last = l + 1 == params.layers.size();
    h = last ? std::move(pre) : apply_activation(params.activation, pre);
  }
  return h;
}

}  // namespace aimh::ad
