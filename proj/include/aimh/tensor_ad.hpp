#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aimh/rng.hpp"
#include "aimh/types.hpp"

namespace aimh::ad {

enum class Activation { Relu, Identity };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// A feed-forward perceptron. `activation` is applied after every layer
/// except the last, which is always linear.
struct DenseParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Relu;

  Eigen::Index input_width() const;
  Eigen::Index output_width() const;
  std::size_t param_count() const;

  /// Throws DimensionMismatch naming the offending layer, or NonFinite.
  void validate() const;
};

/// widths = {in, hidden..., out}. Weights are Glorot-uniform; with
/// `zero_last` the final layer starts at exactly zero.
DenseParams make_mlp(std::span<const int> widths, Activation activation, Rng& rng,
                     bool zero_last);

/// Same shapes as `params`, all entries zero.
DenseParams zeros_like(const DenseParams& params);

Vector mlp_forward(const DenseParams& params, const Vector& input);

/// d(cotangent . output) / d(params), shaped like `params`.
DenseParams mlp_param_grad(const DenseParams& params, const Vector& input,
                           const Vector& output_cotangent);

/// Flat layout: for each layer, weight (column-major) then bias.
void flatten_into(const DenseParams& params, std::span<double> out);
void unflatten_from(DenseParams& params, std::span<const double> in);

/// Forward record for a batch (one sample per column). Backward replays the
/// stored activations; the tape borrows `params`, which must outlive it.
class GradTape {
 public:
  GradTape(const DenseParams& params, const Matrix& inputs);

  const Matrix& output() const { return activations_.back(); }

  /// Accumulates parameter gradients summed over the batch into
  /// `param_grad` (may be null) and returns the input cotangent.
  Matrix backward(const Matrix& output_cotangent, DenseParams* param_grad) const;

 private:
  const DenseParams* params_;
  std::vector<Matrix> activations_;  // layer inputs, then the final output
  std::vector<Matrix> preacts_;
};

}  // namespace aimh::ad

namespace aimh::ad {

/// Batched forward without recording (one sample per column).
Matrix mlp_forward_batch(const DenseParams& params, const Matrix& inputs);

}  // namespace aimh::ad
