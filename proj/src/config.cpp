#include "aimh/config.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "aimh/error.hpp"

namespace aimh {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::Config, path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      j_.at(key).get_to(out);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw Error(ErrorKind::Config, "unknown key " + path_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string activation_name(ad::Activation a) {
  return a == ad::Activation::Relu ? "relu" : "identity";
}

ad::Activation activation_from(const std::string& s) {
  if (s == "relu") return ad::Activation::Relu;
  if (s == "identity") return ad::Activation::Identity;
  throw Error(ErrorKind::Config, "unknown activation '" + s + "'");
}

template <class T>
void require_one_of(const std::string& value, std::initializer_list<T> allowed, const char* what) {
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
    std::ostringstream msg;
    msg << "unknown " << what << " '" << value << "' (expected one of:";
    for (const auto& a : allowed) msg << ' ' << a;
    msg << ')';
    throw Error(ErrorKind::Config, msg.str());
  }
}

}  // namespace

void RunConfig::validate() const {
  require_one_of(mode, {"chain", "kl-flow", "stationarity", "kde-study"}, "mode");
  if (walkers == 0) throw Error(ErrorKind::Config, "walkers must be >= 1");
  if (out.empty()) throw Error(ErrorKind::Config, "out must name a directory");
  require_one_of(target.name, {"brownian-bridge", "bimodal-2d", "neal-funnel", "phi4", "gaussian-1d", "categorical"},
                 "target");
  require_one_of(proposal.family, {"none", "affine", "realnvp", "categorical"}, "proposal family");
  require_one_of(kernel.type, {"imh", "rwm", "mala", "pmala", "mixture"}, "kernel type");
  require_one_of(adaptation.rule, {"none", "pseudo-likelihood", "reverse-kl", "exact-kl"}, "adaptation rule");
  require_one_of(adaptation.optimizer, {"sgd", "adam"}, "adaptation optimizer");
  require_one_of(init.kind, {"point", "split", "gaussian", "reference"}, "init kind");
  if (!(init.sd > 0.0)) throw Error(ErrorKind::Config, "init.sd must be > 0");
  require_one_of(stationarity.rule, {"mle", "none"}, "stationarity rule");
  if (target.name == "phi4") target.phi4.validate();
  const bool needs_proposal = kernel.type == "imh" || kernel.type == "mixture";
  if (needs_proposal && proposal.family == "none") {
    throw Error(ErrorKind::Config, "kernel '" + kernel.type + "' needs a proposal family");
  }
  if ((proposal.family == "categorical") != (target.name == "categorical") && proposal.family != "none") {
    throw Error(ErrorKind::Config, "categorical proposals pair only with the categorical target");
  }
  if (!(proposal.mixture_beta >= 0.0 && proposal.mixture_beta < 1.0)) {
    throw Error(ErrorKind::Config, "proposal.mixture_beta must lie in [0, 1)");
  }
  if (proposal.mixture_beta > 0.0 && !(proposal.fixed_sd > 0.0)) {
    throw Error(ErrorKind::Config, "proposal.fixed_sd must be > 0");
  }
  if (!(kernel.mixture_alpha >= 0.0 && kernel.mixture_alpha <= 1.0)) {
    throw Error(ErrorKind::Config, "kernel.mixture_alpha must lie in [0, 1]");
  }
  if (!(kernel.mala_step > 0.0)) throw Error(ErrorKind::Config, "kernel.mala_step must be > 0");
  if (!(kernel.rwm_initial_scale > 0.0)) throw Error(ErrorKind::Config, "kernel.rwm_initial_scale must be > 0");
  const bool flow = proposal.family == "affine" || proposal.family == "realnvp";
  if (adaptation.rule != "none" && !flow) {
    throw Error(ErrorKind::Config, "adaptation rule '" + adaptation.rule + "' needs an affine or realnvp proposal");
  }
  if (adaptation.rule == "exact-kl" && (proposal.family != "affine" || target.name != "brownian-bridge")) {
    throw Error(ErrorKind::Config, "exact-kl adaptation needs an affine proposal on the brownian-bridge target");
  }
  adaptation.schedule.validate();
  if (adaptation.every == 0) throw Error(ErrorKind::Config, "adaptation.every must be >= 1");
  if (adaptation.kl_samples == 0) throw Error(ErrorKind::Config, "adaptation.kl_samples must be >= 1");
  if (diagnostics.trace_every == 0) throw Error(ErrorKind::Config, "diagnostics.trace_every must be >= 1");
  if (!(diagnostics.burn_in >= 0.0 && diagnostics.burn_in < 1.0)) {
    throw Error(ErrorKind::Config, "diagnostics.burn_in must lie in [0, 1)");
  }
  if (!(init.positive_fraction >= 0.0 && init.positive_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "init.positive_fraction must lie in [0, 1]");
  }
  if (!(kl_flow.dt > 0.0) || !(kl_flow.t_end >= 0.0) || !(kl_flow.record_every > 0.0)) {
    throw Error(ErrorKind::Config, "kl_flow needs dt > 0, t_end >= 0, record_every > 0");
  }
  if (stationarity.replicas == 0) throw Error(ErrorKind::Config, "stationarity.replicas must be >= 1");
  if (kde.instances == 0 || kde.grid_points < 2 || kde.max_centers < 1) {
    throw Error(ErrorKind::Config, "kde study needs instances >= 1, grid_points >= 2, max_centers >= 1");
  }
}

json to_json(const RunConfig& c) {
  return {
      {"preset", c.preset},
      {"mode", c.mode},
      {"seed", c.seed},
      {"steps", c.steps},
      {"walkers", c.walkers},
      {"out", c.out},
      {"target",
       {{"name", c.target.name},
        {"n_times", c.target.n_times},
        {"phi4", {{"grid", c.target.phi4.grid}, {"coupling", c.target.phi4.coupling}, {"beta", c.target.phi4.beta}}},
        {"mean", c.target.mean},
        {"variance", c.target.variance},
        {"probs", c.target.probs}}},
      {"proposal",
       {{"family", c.proposal.family},
        {"layer_pairs", c.proposal.arch.layer_pairs},
        {"hidden_width", c.proposal.arch.hidden_width},
        {"hidden_layers", c.proposal.arch.hidden_layers},
        {"scale_bound", c.proposal.arch.scale_bound},
        {"activation", activation_name(c.proposal.arch.activation)},
        {"mixture_beta", c.proposal.mixture_beta},
        {"fixed_sd", c.proposal.fixed_sd},
        {"init_shift", c.proposal.init_shift},
        {"init_log_scale", c.proposal.init_log_scale},
        {"probs", c.proposal.probs}}},
      {"kernel",
       {{"type", c.kernel.type},
        {"mixture_alpha", c.kernel.mixture_alpha},
        {"mala_step", c.kernel.mala_step},
        {"pmala_regularization", c.kernel.pmala_regularization},
        {"rwm_initial_scale", c.kernel.rwm_initial_scale},
        {"rwm_adapt_after", c.kernel.rwm_adapt_after}}},
      {"adaptation",
       {{"rule", c.adaptation.rule},
        {"eps0", c.adaptation.schedule.eps0},
        {"halving_period", c.adaptation.schedule.halving_period},
        {"alpha_c", c.adaptation.schedule.alpha_c},
        {"alpha_scale", c.adaptation.schedule.alpha_scale},
        {"clip_norm", c.adaptation.schedule.clip_norm},
        {"batch", c.adaptation.batch},
        {"every", c.adaptation.every},
        {"buffer_capacity", c.adaptation.buffer_capacity},
        {"kl_samples", c.adaptation.kl_samples},
        {"optimizer", c.adaptation.optimizer}}},
      {"init",
       {{"kind", c.init.kind},
        {"point", c.init.point},
        {"sd", c.init.sd},
        {"positive_fraction", c.init.positive_fraction},
        {"value", c.init.value}}},
      {"diagnostics",
       {{"projections", c.diagnostics.projections},
        {"reference_samples", c.diagnostics.reference_samples},
        {"burn_in", c.diagnostics.burn_in},
        {"checkpoint_every", c.diagnostics.checkpoint_every},
        {"trace_every", c.diagnostics.trace_every},
        {"exact_tv_steps", c.diagnostics.exact_tv_steps}}},
      {"kl_flow",
       {{"mu0", c.kl_flow.mu0},
        {"sigma0", c.kl_flow.sigma0},
        {"dt", c.kl_flow.dt},
        {"t_end", c.kl_flow.t_end},
        {"record_every", c.kl_flow.record_every}}},
      {"stationarity",
       {{"rule", c.stationarity.rule},
        {"replicas", c.stationarity.replicas},
        {"checkpoints", c.stationarity.checkpoints},
        {"warmup", c.stationarity.warmup}}},
      {"kde",
       {{"instances", c.kde.instances}, {"grid_points", c.kde.grid_points}, {"max_centers", c.kde.max_centers}}},
      {"paper_scale", c.paper_scale},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  ObjectReader root(j, "config");
  if (!root.has("seed")) throw Error(ErrorKind::Config, "config.seed is mandatory");
  root.get("preset", c.preset);
  root.get("mode", c.mode);
  root.get("seed", c.seed);
  root.get("steps", c.steps);
  root.get("walkers", c.walkers);
  root.get("out", c.out);
  root.get("paper_scale", c.paper_scale);
  if (const json* t = root.child("target")) {
    ObjectReader r(*t, "target");
    r.get("name", c.target.name);
    r.get("n_times", c.target.n_times);
    r.get("mean", c.target.mean);
    r.get("variance", c.target.variance);
    r.get("probs", c.target.probs);
    if (const json* p = r.child("phi4")) {
      ObjectReader q(*p, "target.phi4");
      q.get("grid", c.target.phi4.grid);
      q.get("coupling", c.target.phi4.coupling);
      q.get("beta", c.target.phi4.beta);
      q.finish();
    }
    r.finish();
  }
  if (const json* p = root.child("proposal")) {
    ObjectReader r(*p, "proposal");
    std::string act = activation_name(c.proposal.arch.activation);
    r.get("family", c.proposal.family);
    r.get("layer_pairs", c.proposal.arch.layer_pairs);
    r.get("hidden_width", c.proposal.arch.hidden_width);
    r.get("hidden_layers", c.proposal.arch.hidden_layers);
    r.get("scale_bound", c.proposal.arch.scale_bound);
    r.get("activation", act);
    r.get("mixture_beta", c.proposal.mixture_beta);
    r.get("fixed_sd", c.proposal.fixed_sd);
    r.get("init_shift", c.proposal.init_shift);
    r.get("init_log_scale", c.proposal.init_log_scale);
    r.get("probs", c.proposal.probs);
    r.finish();
    c.proposal.arch.activation = activation_from(act);
  }
  if (const json* k = root.child("kernel")) {
    ObjectReader r(*k, "kernel");
    r.get("type", c.kernel.type);
    r.get("mixture_alpha", c.kernel.mixture_alpha);
    r.get("mala_step", c.kernel.mala_step);
    r.get("pmala_regularization", c.kernel.pmala_regularization);
    r.get("rwm_initial_scale", c.kernel.rwm_initial_scale);
    r.get("rwm_adapt_after", c.kernel.rwm_adapt_after);
    r.finish();
  }
  if (const json* a = root.child("adaptation")) {
    ObjectReader r(*a, "adaptation");
    r.get("rule", c.adaptation.rule);
    r.get("eps0", c.adaptation.schedule.eps0);
    r.get("halving_period", c.adaptation.schedule.halving_period);
    r.get("alpha_c", c.adaptation.schedule.alpha_c);
    r.get("alpha_scale", c.adaptation.schedule.alpha_scale);
    r.get("clip_norm", c.adaptation.schedule.clip_norm);
    r.get("batch", c.adaptation.batch);
    r.get("every", c.adaptation.every);
    r.get("buffer_capacity", c.adaptation.buffer_capacity);
    r.get("optimizer", c.adaptation.optimizer);
    r.get("kl_samples", c.adaptation.kl_samples);
    r.finish();
  }
  if (const json* i = root.child("init")) {
    ObjectReader r(*i, "init");
    r.get("kind", c.init.kind);
    r.get("point", c.init.point);
    r.get("sd", c.init.sd);
    r.get("positive_fraction", c.init.positive_fraction);
    r.get("value", c.init.value);
    r.finish();
  }
  if (const json* d = root.child("diagnostics")) {
    ObjectReader r(*d, "diagnostics");
    r.get("projections", c.diagnostics.projections);
    r.get("reference_samples", c.diagnostics.reference_samples);
    r.get("burn_in", c.diagnostics.burn_in);
    r.get("checkpoint_every", c.diagnostics.checkpoint_every);
    r.get("trace_every", c.diagnostics.trace_every);
    r.get("exact_tv_steps", c.diagnostics.exact_tv_steps);
    r.finish();
  }
  if (const json* s = root.child("kl_flow")) {
    ObjectReader r(*s, "kl_flow");
    r.get("mu0", c.kl_flow.mu0);
    r.get("sigma0", c.kl_flow.sigma0);
    r.get("dt", c.kl_flow.dt);
    r.get("t_end", c.kl_flow.t_end);
    r.get("record_every", c.kl_flow.record_every);
    r.finish();
  }
  if (const json* s = root.child("stationarity")) {
    ObjectReader r(*s, "stationarity");
    r.get("rule", c.stationarity.rule);
    r.get("replicas", c.stationarity.replicas);
    r.get("checkpoints", c.stationarity.checkpoints);
    r.get("warmup", c.stationarity.warmup);
    r.finish();
  }
  if (const json* s = root.child("kde")) {
    ObjectReader r(*s, "kde");
    r.get("instances", c.kde.instances);
    r.get("grid_points", c.kde.grid_points);
    r.get("max_centers", c.kde.max_centers);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

namespace {

struct PresetEntry {
  const char* name;
  const char* description;
  const char* body;
};

// Desk-scale defaults; paper_scale records the published settings.
const PresetEntry kPresets[] = {
    {"two-state-exact", "IMH on a two-state target (0.7, 0.3) with a uniform proposal; exact TV curve vs 2(1-1/M)^n",
     R"({"mode": "chain", "seed": 1, "steps": 50, "walkers": 2000,
         "target": {"name": "categorical", "probs": [0.7, 0.3]},
         "proposal": {"family": "categorical", "probs": [0.5, 0.5]},
         "kernel": {"type": "imh"},
         "init": {"kind": "point", "point": [1]},
         "diagnostics": {"projections": 0, "burn_in": 0.0, "exact_tv_steps": 50}})"},
    {"gaussian-kl-flow", "Reverse-KL gradient flow of N(mu, sigma^2) toward N(0,1): Euler vs closed form, ratio bound",
     R"({"mode": "kl-flow", "seed": 1, "steps": 0,
         "kl_flow": {"mu0": 1.0, "sigma0": 2.0, "dt": 1e-4, "t_end": 10.0, "record_every": 0.1}})"},
    {"brownian-bridge", "50-time Brownian bridge with sinusoidal mean; affine flow IMH with pseudo-likelihood adaptation",
     R"({"mode": "chain", "seed": 1, "steps": 20000, "walkers": 1,
         "target": {"name": "brownian-bridge", "n_times": 50},
         "proposal": {"family": "affine"},
         "kernel": {"type": "imh"},
         "adaptation": {"rule": "pseudo-likelihood", "eps0": 0.05, "halving_period": 5000, "alpha_c": 1.0,
                        "alpha_scale": 10000, "batch": 100, "every": 1},
         "init": {"kind": "point"},
         "diagnostics": {"projections": 1000, "reference_samples": 10000, "burn_in": 0.5, "checkpoint_every": 5000},
         "paper_scale": {"n_times": 50, "projections": 10000}})"},
    {"brownian-bridge-exact-kl", "Brownian bridge with the affine flow trained on the exact forward KL",
     R"({"mode": "chain", "seed": 1, "steps": 20000, "walkers": 1,
         "target": {"name": "brownian-bridge", "n_times": 50},
         "proposal": {"family": "affine"},
         "kernel": {"type": "imh"},
         "adaptation": {"rule": "exact-kl", "eps0": 0.05, "halving_period": 5000, "alpha_c": 1.0,
                        "alpha_scale": 10000, "every": 1},
         "init": {"kind": "point"},
         "diagnostics": {"projections": 1000, "reference_samples": 10000, "burn_in": 0.5, "checkpoint_every": 5000},
         "paper_scale": {"n_times": 50, "projections": 10000}})"},
    {"bimodal-2d", "Two Gaussians at (-2,2) and (2,-2), covariance diag(1/100,1/100); RealNVP IMH",
     R"({"mode": "chain", "seed": 1, "steps": 50000, "walkers": 1,
         "target": {"name": "bimodal-2d"},
         "proposal": {"family": "realnvp", "layer_pairs": 3, "hidden_width": 32, "hidden_layers": 2,
                      "mixture_beta": 0.1, "fixed_sd": 3.0, "scale_bound": 3.0},
         "kernel": {"type": "imh", "mala_step": 0.001, "rwm_initial_scale": 0.1},
         "adaptation": {"rule": "pseudo-likelihood", "eps0": 0.01, "halving_period": 5000, "alpha_c": 1.0,
                        "alpha_scale": 10000, "clip_norm": 10.0, "batch": 64, "every": 1},
         "init": {"kind": "point", "point": [-2.0, 2.0]},
         "diagnostics": {"projections": 1000, "reference_samples": 10000, "burn_in": 0.25, "checkpoint_every": 10000},
         "paper_scale": {"layer_pairs": 5, "hidden_width": 100, "projections": 10000}})"},
    {"neal-funnel", "Neal's funnel in 2D (v ~ N(0,9), x ~ N(0, e^-v)); RealNVP IMH",
     R"({"mode": "chain", "seed": 1, "steps": 50000, "walkers": 1,
         "target": {"name": "neal-funnel"},
         "proposal": {"family": "realnvp", "layer_pairs": 3, "hidden_width": 32, "hidden_layers": 2,
                      "mixture_beta": 0.1, "fixed_sd": 3.0, "scale_bound": 3.0},
         "kernel": {"type": "imh", "mala_step": 0.01},
         "adaptation": {"rule": "pseudo-likelihood", "eps0": 0.01, "halving_period": 5000, "alpha_c": 1.0,
                        "alpha_scale": 10000, "clip_norm": 10.0, "batch": 64, "every": 1},
         "init": {"kind": "point", "point": [0.0, 0.0]},
         "diagnostics": {"projections": 1000, "reference_samples": 10000, "burn_in": 0.25, "checkpoint_every": 10000},
         "paper_scale": {"layer_pairs": 5, "hidden_width": 100, "projections": 10000}})"},
    {"phi4-field", "1D phi^4 field (a=0.1, beta=20), 100 walkers started 20/80 at +1/-1; mixture IMH/MALA kernel",
     R"({"mode": "chain", "seed": 1, "steps": 10000, "walkers": 100,
         "target": {"name": "phi4", "phi4": {"grid": 32, "coupling": 0.1, "beta": 20.0}},
         "proposal": {"family": "realnvp", "layer_pairs": 3, "hidden_width": 64, "hidden_layers": 2,
                      "scale_bound": 3.0},
         "kernel": {"type": "mixture", "mixture_alpha": 0.5, "mala_step": 0.0005},
         "adaptation": {"rule": "pseudo-likelihood", "eps0": 0.001, "halving_period": 5000, "alpha_c": 1.0,
                        "alpha_scale": 10000, "batch": 0, "every": 10, "buffer_capacity": 1000,
                        "optimizer": "adam"},
         "init": {"kind": "split", "positive_fraction": 0.2, "value": 1.0},
         "diagnostics": {"projections": 0, "burn_in": 0.75, "trace_every": 10, "checkpoint_every": 1000},
         "paper_scale": {"grid": 100, "coupling": 0.1, "beta": 20.0, "walkers": 100, "layer_pairs": 5,
                         "hidden_width": 100, "batch": 1000, "every": 10, "eps0": 0.001,
                         "halving_period": 5000}})"},
    {"stationarity-violation", "MLE-adapted IMH chains started at exact draws of Normal(1, 1/2); KS vs fresh draws",
     R"({"mode": "stationarity", "seed": 1, "steps": 0,
         "target": {"name": "gaussian-1d", "mean": 1.0, "variance": 0.5},
         "stationarity": {"rule": "mle", "replicas": 100000, "checkpoints": [1, 10, 100, 1000, 10000], "warmup": 20}})"},
    {"kde-bound-study", "Random 1D grid instances: the (1+1/n) M'' <= M' predicate vs brute-force M_{n+1} <= M_n",
     R"({"mode": "kde-study", "seed": 1, "steps": 0,
         "kde": {"instances": 500, "grid_points": 60, "max_centers": 12}})"},
};

}  // namespace

std::vector<PresetInfo> list_presets() {
  std::vector<PresetInfo> out;
  for (const auto& p : kPresets) out.push_back({p.name, p.description});
  return out;
}

json preset_json(const std::string& name) {
  for (const auto& p : kPresets) {
    if (name == p.name) {
      json j = json::parse(p.body);
      j["preset"] = name;
      j["out"] = "runs/" + name;
      return j;
    }
  }
  throw Error(ErrorKind::Config, "unknown preset '" + name + "'");
}

json resolve_config_json(const json& user) {
  if (!user.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  json base = json::object();
  if (user.contains("preset") && user.at("preset").is_string() && !user.at("preset").get<std::string>().empty()) {
    base = preset_json(user.at("preset").get<std::string>());
  }
  base.merge_patch(user);
  return base;
}

void set_config_path(json& j, const std::string& dotted_path, const std::string& value) {
  if (dotted_path.empty()) throw Error(ErrorKind::Config, "empty config path");
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorKind::Config, "malformed config path '" + dotted_path + "'");
    if (!node->is_object()) throw Error(ErrorKind::Config, "config path '" + dotted_path + "' crosses a non-object");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json parsed = json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? json(value) : parsed;
}

Target make_target(const TargetSpec& spec) {
  if (spec.name == "brownian-bridge") return brownian_bridge_target(spec.n_times);
  if (spec.name == "bimodal-2d") return bimodal_target();
  if (spec.name == "neal-funnel") return funnel_target();
  if (spec.name == "phi4") return phi4_target(spec.phi4);
  if (spec.name == "gaussian-1d") return gaussian_1d_target(spec.mean, spec.variance);
  if (spec.name == "categorical") {
    return categorical_target(Eigen::Map<const Vector>(spec.probs.data(), static_cast<Eigen::Index>(spec.probs.size())));
  }
  throw Error(ErrorKind::Config, "unknown target '" + spec.name + "'");
}

}  // namespace aimh
