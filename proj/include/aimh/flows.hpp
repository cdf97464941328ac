#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aimh/rng.hpp"
#include "aimh/targets.hpp"
#include "aimh/tensor_ad.hpp"
#include "aimh/types.hpp"

namespace aimh {

/// x = shift + exp(log_scale) * z, coordinatewise.
struct AffineParams {
  Vector shift;
  Vector log_scale;
};

/// One affine coupling: the pass-through half conditions an elementwise
/// affine map of the other half. Scale is exp(raw scale-net output).
struct CouplingLayer {
  bool update_first = false;  // false: first half passes through
  ad::DenseParams scale_net;
  ad::DenseParams translate_net;
};

struct RealNvpParams {
  Eigen::Index dim = 0;
  std::vector<CouplingLayer> layers;
  /// 0 keeps log-scale = raw net output; b > 0 soft-clamps it to b*tanh(raw/b).
  double scale_bound = 0.0;
};

struct RealNvpArchitecture {
  int layer_pairs = 5;
  int hidden_width = 100;
  int hidden_layers = 2;
  ad::Activation activation = ad::Activation::Relu;
  double scale_bound = 0.0;
};

using FlowParams = std::variant<AffineParams, RealNvpParams>;

/// Contiguous half-split: the first half holds dim/2 coordinates.
Eigen::Index first_half(Eigen::Index dim);

AffineParams make_affine(const Vector& shift, const Vector& log_scale);
/// Identity-initialized stack: final layers of every net are zero.
RealNvpParams make_realnvp(Eigen::Index dim, const RealNvpArchitecture& arch, Rng& rng);

Eigen::Index flow_dim(const FlowParams& params);
std::size_t param_count(const FlowParams& params);
/// Affine: shift then log_scale. RealNVP: per layer, scale net then
/// translate net (see ad::flatten_into).
Vector flatten(const FlowParams& params);
void unflatten(FlowParams& params, const Vector& flat);

struct FlowResult {
  Vector value;
  double log_det = 0.0;
};

FlowResult flow_forward(const FlowParams& params, const Vector& z);
FlowResult flow_inverse(const FlowParams& params, const Vector& x);
double flow_log_prob(const FlowParams& params, const Vector& x);
Vector flow_sample(const FlowParams& params, Rng& rng);

/// Batched variants; one point per column.
Matrix flow_forward_batch(const FlowParams& params, const Matrix& zs, Vector* log_det);
Vector flow_log_prob_batch(const FlowParams& params, const Matrix& xs);

/// Gradient of log prob w.r.t. all parameters, flat (see flatten).
Vector flow_log_prob_param_grad(const FlowParams& params, const Vector& x);
/// Sum over columns of the per-point gradients; also returns per-point log
/// probs when requested.
Vector flow_log_prob_param_grad_sum(const FlowParams& params, const Matrix& xs,
                                    Vector* log_probs = nullptr);

/// Reparameterized gradient of cotangent * [log q(x) - log target(x)] with
/// x = forward(z), differentiating through the sample path.
Vector flow_sample_path_grad(const FlowParams& params, const Target& target, const Vector& z,
                             double cotangent);
/// Sum over the columns of zs.
Vector flow_sample_path_grad_sum(const FlowParams& params, const Target& target,
                                 const Matrix& zs, double cotangent);

/// Fixed full-support component for mixtures.
struct DiagGaussian {
  Vector mean;
  Vector sd;

  double log_prob(const Vector& x) const;
  Vector sample(Rng& rng) const;
};

/// beta * fixed + (1 - beta) * flow.
struct MixtureProposal {
  double beta = 0.1;
  DiagGaussian fixed;
  FlowParams adaptive;

  void validate() const;
};

double mixture_log_prob(const MixtureProposal& mix, const Vector& x);
Vector mixture_sample(const MixtureProposal& mix, Rng& rng);

/// Checkpoint encoding, tagged with kCheckpointVersion.
inline constexpr int kCheckpointVersion = 1;
nlohmann::json flow_to_json(const FlowParams& params);
FlowParams flow_from_json(const nlohmann::json& j);

// Uniform proposal interface used by the kernels.
struct ProposalDraw {
  Vector x;
  double log_prob = 0.0;
};

ProposalDraw proposal_draw(const FlowParams& params, Rng& rng);
double proposal_log_prob(const FlowParams& params, const Vector& x);
ProposalDraw proposal_draw(const MixtureProposal& mix, Rng& rng);
double proposal_log_prob(const MixtureProposal& mix, const Vector& x);
ProposalDraw proposal_draw(const DiagGaussian& g, Rng& rng);
double proposal_log_prob(const DiagGaussian& g, const Vector& x);

}  // namespace aimh
