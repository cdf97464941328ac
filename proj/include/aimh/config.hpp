#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "aimh/adaptation.hpp"
#include "aimh/flows.hpp"
#include "aimh/targets.hpp"

namespace aimh {

struct TargetSpec {
  std::string name = "bimodal-2d";  // brownian-bridge | bimodal-2d | neal-funnel | phi4 | gaussian-1d | categorical
  int n_times = 50;                 // brownian-bridge
  Phi4Config phi4{32, 0.1, 20.0};
  double mean = 1.0;      // gaussian-1d
  double variance = 0.5;  // gaussian-1d
  std::vector<double> probs;  // categorical
};

struct ProposalSpec {
  std::string family = "realnvp";  // none | affine | realnvp | categorical
  RealNvpArchitecture arch;
  double mixture_beta = 0.0;  // > 0 mixes in a fixed N(0, fixed_sd^2 I) component
  double fixed_sd = 3.0;
  std::vector<double> init_shift;      // affine; empty means zeros
  std::vector<double> init_log_scale;  // affine; empty means zeros
  std::vector<double> probs;           // categorical
};

struct KernelSpec {
  std::string type = "imh";  // imh | rwm | mala | pmala | mixture (imh or mala)
  double mixture_alpha = 0.5;
  double mala_step = 0.01;
  double pmala_regularization = 0.0;
  double rwm_initial_scale = 0.1;
  std::size_t rwm_adapt_after = 100;
};

struct AdaptationSpec {
  std::string rule = "none";  // none | pseudo-likelihood | reverse-kl | exact-kl
  Schedule schedule;
  std::size_t batch = 0;  // 0: the whole buffer
  std::uint64_t every = 1;
  std::size_t buffer_capacity = 0;
  std::size_t kl_samples = 1;
  std::string optimizer = "sgd";  // sgd | adam; pseudo-likelihood only
};

struct InitSpec {
  std::string kind = "point";  // point | split | gaussian | reference
  std::vector<double> point;   // empty means the origin; center for gaussian
  double sd = 1.0;             // gaussian
  double positive_fraction = 0.2;
  double value = 1.0;
};

struct DiagnosticsSpec {
  std::size_t projections = 1000;
  std::size_t reference_samples = 10000;
  double burn_in = 0.25;
  std::uint64_t checkpoint_every = 0;
  std::uint64_t trace_every = 1;
  int exact_tv_steps = 50;
};

struct KlFlowStudy {
  double mu0 = 1.0;
  double sigma0 = 2.0;
  double dt = 1e-4;
  double t_end = 10.0;
  double record_every = 0.1;
};

struct StationarityStudy {
  std::string rule = "mle";  // mle | none
  std::size_t replicas = 100000;
  std::vector<std::uint64_t> checkpoints{1, 10, 100, 1000, 10000};
  std::uint64_t warmup = 20;
};

struct KdeStudy {
  std::size_t instances = 500;
  int grid_points = 60;
  int max_centers = 12;
};

/// Everything a run needs; the JSON form is what the artifacts echo.
struct RunConfig {
  std::string preset;
  std::string mode = "chain";  // chain | kl-flow | stationarity | kde-study
  std::uint64_t seed = 0;
  std::uint64_t steps = 1000;
  std::size_t walkers = 1;
  std::string out = "runs/out";
  TargetSpec target;
  ProposalSpec proposal;
  KernelSpec kernel;
  AdaptationSpec adaptation;
  InitSpec init;
  DiagnosticsSpec diagnostics;
  KlFlowStudy kl_flow;
  StationarityStudy stationarity;
  KdeStudy kde;
  nlohmann::json paper_scale = nlohmann::json::object();

  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Strict: unknown keys, wrong types and a missing seed raise Config errors.
RunConfig config_from_json(const nlohmann::json& j);

struct PresetInfo {
  std::string name;
  std::string description;
};

std::vector<PresetInfo> list_presets();
/// Full JSON config of a preset. Unknown names raise a Config error.
nlohmann::json preset_json(const std::string& name);

/// Resolves a user config: a "preset" key pulls in that preset, then the
/// remaining keys are merged over it (RFC 7386 merge patch).
nlohmann::json resolve_config_json(const nlohmann::json& user);

/// Sets a value at a dotted path such as "kernel.type"; `value` is parsed
/// as JSON when possible and taken as a string otherwise.
void set_config_path(nlohmann::json& j, const std::string& dotted_path, const std::string& value);

Target make_target(const TargetSpec& spec);

}  // namespace aimh
