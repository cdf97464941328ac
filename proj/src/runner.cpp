#include "aimh/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <variant>

#include "aimh/adaptation.hpp"
#include "aimh/error.hpp"
#include "aimh/kernels.hpp"
#include "aimh/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aimh {

namespace {

constexpr std::uint64_t kControllerWalker = ~std::uint64_t{0};
constexpr std::uint64_t kInitStep = ~std::uint64_t{0};
constexpr std::uint64_t kProposalInitTag = 0x70726f705f696e69ULL;
constexpr std::uint64_t kReferenceTag = 0x7265665f64726177ULL;
constexpr std::uint64_t kProjectionTag = 0x70726f6a5f646972ULL;
constexpr std::uint64_t kKdeTag = 0x6b64655f73747564ULL;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using Proposal = std::variant<std::monostate, FlowParams, MixtureProposal, CategoricalProposal>;

// ---- text helpers -------------------------------------------------------------

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

void append_number(std::string& out, std::uint64_t v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot open " + path.string() + " for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw Error(ErrorKind::InvalidArgument, "write to " + path.string() + " failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptArtifact, "missing artifact " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::CorruptArtifact, "malformed JSON in " + path.string());
  return j;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---- proposals ----------------------------------------------------------------

Proposal make_proposal(const RunConfig& c, const Target& target) {
  const auto& p = c.proposal;
  const Eigen::Index m = target.dim;
  if (p.family == "none") return std::monostate{};
  if (p.family == "categorical") {
    if (static_cast<Eigen::Index>(p.probs.size()) != static_cast<Eigen::Index>(c.target.probs.size())) {
      throw Error(ErrorKind::Config, "categorical proposal and target have different state counts");
    }
    return CategoricalProposal{to_vector(p.probs)};
  }
  FlowParams flow;
  if (p.family == "affine") {
    auto fill = [m](const std::vector<double>& v, const char* what) {
      if (v.empty()) return Vector(Vector::Zero(m));
      if (static_cast<Eigen::Index>(v.size()) != m) {
        throw Error(ErrorKind::Config, std::string("proposal.") + what + " must have " + std::to_string(m) + " entries");
      }
      return to_vector(v);
    };
    flow = make_affine(fill(p.init_shift, "init_shift"), fill(p.init_log_scale, "init_log_scale"));
  } else {
    Rng rng = Rng(c.seed).derive(kProposalInitTag);
    flow = make_realnvp(m, p.arch, rng);
  }
  if (p.mixture_beta > 0.0) {
    MixtureProposal mix{p.mixture_beta, DiagGaussian{Vector::Zero(m), Vector::Constant(m, p.fixed_sd)}, std::move(flow)};
    mix.validate();
    return mix;
  }
  return flow;
}

const FlowParams* adaptive_flow(const Proposal& p) {
  if (const auto* f = std::get_if<FlowParams>(&p)) return f;
  if (const auto* mix = std::get_if<MixtureProposal>(&p)) return &mix->adaptive;
  return nullptr;
}

void set_adaptive_flow(Proposal& p, FlowParams flow) {
  if (auto* mix = std::get_if<MixtureProposal>(&p)) {
    mix->adaptive = std::move(flow);
  } else {
    p = std::move(flow);
  }
}

Proposal proposal_with_flow(const RunConfig& c, const Target& target, FlowParams flow) {
  Proposal p = make_proposal(c, target);
  set_adaptive_flow(p, std::move(flow));
  return p;
}

StepOutcome imh_any(const ChainState& s, const Target& target, const Proposal& p, Rng& rng) {
  return std::visit(overloaded{[](const std::monostate&) -> StepOutcome {
                                 throw Error(ErrorKind::Config, "IMH step without a proposal");
                               },
                               [&](const auto& q) { return imh_step(s, target, q, rng); }},
                    p);
}

// ---- initialization ---------------------------------------------------------------

Vector initial_point(const RunConfig& c, const Target& target, std::uint64_t walker) {
  const Eigen::Index m = target.dim;
  if (c.init.kind == "split") {
    const auto n_pos = static_cast<std::uint64_t>(std::llround(c.init.positive_fraction * static_cast<double>(c.walkers)));
    const double sign = walker < n_pos ? 1.0 : -1.0;
    return Vector::Constant(m, sign * c.init.value);
  }
  if (c.init.kind == "reference") {
    if (!target.has_sampler()) throw Error(ErrorKind::Config, "init kind 'reference' needs a target sampler");
    Rng rng = stream_for(c.seed, walker, kInitStep);
    return target.reference_sampler(1, rng).transpose();
  }
  Vector center = Vector::Zero(m);
  if (!c.init.point.empty()) {
    if (static_cast<Eigen::Index>(c.init.point.size()) != m) {
      throw Error(ErrorKind::Config, "init.point must have " + std::to_string(m) + " entries");
    }
    center = to_vector(c.init.point);
  }
  if (c.init.kind == "gaussian") {
    Rng rng = stream_for(c.seed, walker, kInitStep);
    return center + c.init.sd * rng.normal_vector(m);
  }
  return center;
}

// ---- chain runs ------------------------------------------------------------------------

class TraceWriter {
 public:
  TraceWriter(const fs::path& path, Eigen::Index dim) : out_(open_out(path)) {
    std::string header = "step,walker";
    for (Eigen::Index i = 0; i < dim; ++i) header += ",x" + std::to_string(i);
    header += ",log_target,accepted,kernel_tag\n";
    out_ << header;
  }

  void row(std::uint64_t step, std::uint64_t walker, const Vector& x, double log_target, bool accepted,
           const std::string& tag) {
    line_.clear();
    append_number(line_, step);
    line_ += ',';
    append_number(line_, walker);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      line_ += ',';
      append_number(line_, x[i]);
    }
    line_ += ',';
    append_number(line_, log_target);
    line_ += accepted ? ",1," : ",0,";
    line_ += tag;
    line_ += '\n';
    out_ << line_;
    ++rows_;
  }

  std::size_t rows() const { return rows_; }

  void close() {
    out_.close();
    if (!out_) throw Error(ErrorKind::InvalidArgument, "trace write failed");
  }

 private:
  std::ofstream out_;
  std::string line_;
  std::size_t rows_ = 0;
};

json write_checkpoint(const fs::path& dir, std::uint64_t step, const FlowParams& flow) {
  const std::string name = "checkpoints/step_" + std::to_string(step) + ".json";
  json j{{"step", step}, {"flow", flow_to_json(flow)}};
  write_text(dir / name, j.dump() + "\n");
  return {{"step", step}, {"file", name}};
}

json run_chain(const RunConfig& c, const fs::path& dir) {
  const Target target = make_target(c.target);
  Proposal proposal = make_proposal(c, target);
  const bool needs_gradient = c.kernel.type == "mala" || c.kernel.type == "pmala" || c.kernel.type == "mixture";
  if (needs_gradient && !target.has_gradient()) {
    throw Error(ErrorKind::MissingCapability, "kernel '" + c.kernel.type + "' needs the gradient of '" + target.name + "'");
  }

  std::vector<ChainState> states;
  for (std::size_t w = 0; w < c.walkers; ++w) states.push_back(make_state(target, initial_point(c, target, w), w));

  std::vector<RunningCovariance> covs;
  if (c.kernel.type == "rwm") {
    for (const auto& s : states) {
      covs.emplace_back(target.dim);
      covs.back().push(s.x);
    }
  }
  const RwmSettings rwm{c.kernel.rwm_adapt_after, c.kernel.rwm_initial_scale};

  const bool pseudo = c.adaptation.rule == "pseudo-likelihood";
  HistoryBuffer buffer(c.adaptation.buffer_capacity);
  AdamState adam;
  AdamState* adam_ptr = c.adaptation.optimizer == "adam" ? &adam : nullptr;
  if (pseudo) {
    for (const auto& s : states) buffer.push(s.x);
  }
  std::optional<GaussianMoments> bridge;
  if (c.adaptation.rule == "exact-kl") bridge = bridge_moments(c.target.n_times);

  TraceWriter trace(dir / "trace.csv", target.dim);
  for (const auto& s : states) trace.row(0, s.walker, s.x, s.log_target, false, "init");
  auto events = open_out(dir / "events.jsonl");
  json checkpoints = json::array();
  const std::uint64_t ck_every = c.diagnostics.checkpoint_every;
  if (ck_every > 0) {
    fs::create_directories(dir / "checkpoints");
    if (const FlowParams* f = adaptive_flow(proposal)) checkpoints.push_back(write_checkpoint(dir, 0, *f));
  }

  auto kernel = [&](const ChainState& s, Rng& rng) -> StepOutcome {
    const std::string& type = c.kernel.type;
    if (type == "imh") return imh_any(s, target, proposal, rng);
    if (type == "rwm") return rwm_adaptive_step(s, target, covs[s.walker], rng, rwm);
    if (type == "mala") return mala_step(s, target, c.kernel.mala_step, rng);
    if (type == "pmala") return precond_mala_step(s, target, c.kernel.mala_step, rng, c.kernel.pmala_regularization);
    return mixture_kernel_step(
        c.kernel.mixture_alpha, [&](Rng& r) { return imh_any(s, target, proposal, r); },
        [&](Rng& r) { return mala_step(s, target, c.kernel.mala_step, r); }, rng);
  };

  std::uint64_t attempts = 0;
  for (std::uint64_t step = 0; step < c.steps; ++step) {
    const std::uint64_t next = step + 1;
    auto results = parallel_walkers_step(states, kernel, c.seed);
    const bool record = next % c.diagnostics.trace_every == 0;
    for (std::size_t w = 0; w < results.size(); ++w) {
      if (!results[w].outcome) {
        throw Error(results[w].error_kind,
                    "step " + std::to_string(next) + ", walker " + std::to_string(w) + ": " + results[w].error);
      }
      const StepOutcome& out = *results[w].outcome;
      states[w] = out.state;
      if (record) trace.row(next, w, out.state.x, out.state.log_target, out.accepted, to_string(out.tag));
      if (!covs.empty()) covs[w].push(out.state.x);
      if (pseudo) buffer.push(out.state.x);
    }

    if (c.adaptation.rule != "none" && next % c.adaptation.every == 0) {
      Rng rng = stream_for(c.seed, kControllerWalker, next);
      const std::uint64_t n = attempts++;
      const FlowParams& flow = *adaptive_flow(proposal);
      AdaptationEvent ev;
      FlowParams updated = flow;
      if (pseudo) {
        auto res = pseudo_likelihood_update(flow, buffer, c.adaptation.schedule, n, c.adaptation.batch, rng, adam_ptr);
        ev = std::move(res.event);
        updated = std::move(res.params);
      } else {
        ev.n = n;
        ev.epsilon = c.adaptation.schedule.epsilon(n);
        ev.alpha = c.adaptation.schedule.alpha(n);
        ev.fired = rng.uniform() < ev.alpha;
        if (ev.fired && ev.epsilon > 0.0) {
          if (c.adaptation.rule == "reverse-kl") {
            updated = reverse_kl_update(flow, target, c.adaptation.kl_samples, ev.epsilon, rng);
            ev.batch = c.adaptation.kl_samples;
          } else {
            updated = exact_kl_update(std::get<AffineParams>(flow), *bridge, ev.epsilon);
          }
          ev.applied = true;
        }
      }
      if (ev.applied) {
        set_adaptive_flow(proposal, std::move(updated));
        for (auto& s : states) s.log_proposal = std::numeric_limits<double>::quiet_NaN();
      }
      json line = to_json(ev);
      line["step"] = next;
      events << line.dump() << '\n';
    }
    if (ck_every > 0 && next % ck_every == 0) {
      if (const FlowParams* f = adaptive_flow(proposal)) checkpoints.push_back(write_checkpoint(dir, next, *f));
    }
  }
  trace.close();
  events.close();
  return {{"trace_rows", trace.rows()}, {"checkpoints", checkpoints}};
}

// ---- studies -----------------------------------------------------------------------------

class StudyWriter {
 public:
  StudyWriter(const fs::path& path, const std::vector<std::string>& columns) : out_(open_out(path)) {
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
  }

  void row(std::initializer_list<double> values) {
    line_.clear();
    bool first = true;
    for (const double v : values) {
      if (!first) line_ += ',';
      first = false;
      append_number(line_, v);
    }
    line_ += '\n';
    out_ << line_;
    ++rows_;
  }

  std::size_t finish() {
    out_.close();
    if (!out_) throw Error(ErrorKind::InvalidArgument, "study trace write failed");
    return rows_;
  }

 private:
  std::ofstream out_;
  std::string line_;
  std::size_t rows_ = 0;
};

json run_kl_flow(const RunConfig& c, const fs::path& dir) {
  const auto& k = c.kl_flow;
  StudyWriter w(dir / "trace.csv",
                {"t", "mu_euler", "sigma_euler", "mu_exact", "sigma_exact", "ratio_bound", "kl_reverse", "kl_forward"});
  double mu = k.mu0;
  double sigma = k.sigma0;
  const auto n_steps = static_cast<std::uint64_t>(std::llround(k.t_end / k.dt));
  const auto record = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(k.record_every / k.dt)));
  for (std::uint64_t i = 0; i <= n_steps; ++i) {
    if (i % record == 0 || i == n_steps) {
      const double t = static_cast<double>(i) * k.dt;
      const auto [mu_t, sigma_t] = gaussian_kl_flow_solution(k.mu0, k.sigma0, t);
      w.row({t, mu, sigma, mu_t, sigma_t, gaussian_ratio_bound(mu_t, sigma_t),
             gaussian_kl(mu_t, sigma_t, KlDirection::Reverse), gaussian_kl(mu_t, sigma_t, KlDirection::Forward)});
    }
    if (i < n_steps) std::tie(mu, sigma) = gaussian_exact_kl_step(mu, sigma, k.dt);
  }
  write_text(dir / "events.jsonl", "");
  return {{"trace_rows", w.finish()}, {"checkpoints", json::array()}};
}

json run_stationarity(const RunConfig& c, const fs::path& dir) {
  const Target target = make_target(c.target);
  StationarityProbeSettings s;
  s.rule = c.stationarity.rule == "mle" ? ProbeRule::Mle : ProbeRule::None;
  s.checkpoints = c.stationarity.checkpoints;
  s.n_replicas = c.stationarity.replicas;
  s.warmup = c.stationarity.warmup;
  s.seed = c.seed;
  const ProbeCurve curve = stationarity_probe(target, s);
  StudyWriter w(dir / "trace.csv", {"step", "ks", "noise_floor", "low_power"});
  for (std::size_t i = 0; i < curve.steps.size(); ++i) {
    w.row({static_cast<double>(curve.steps[i]), curve.ks[i], curve.noise_floor, curve.low_power ? 1.0 : 0.0});
  }
  write_text(dir / "events.jsonl", "");
  return {{"trace_rows", w.finish()}, {"checkpoints", json::array()}};
}

// Integer weights times lcm(1..n) keep every ratio pi/m exact in floating point.
std::int64_t lcm_upto(int n) {
  std::int64_t l = 1;
  for (int i = 2; i <= n; ++i) l = std::lcm(l, static_cast<std::int64_t>(i));
  return l;
}

json run_kde_study(const RunConfig& c, const fs::path& dir) {
  StudyWriter w(dir / "trace.csv", {"instance", "n", "radius", "inner", "outer", "improves", "brute_improves"});
  Rng rng = Rng(c.seed).derive(kKdeTag);
  const int g = c.kde.grid_points;
  constexpr int kMaxCenters = 24;
  std::vector<Vector> probes;
  for (int j = 0; j < g; ++j) probes.push_back(Vector::Constant(1, static_cast<double>(j) / (g - 1)));
  std::size_t done = 0;
  while (done < c.kde.instances) {
    const double radius = 0.1 + 0.25 * rng.uniform();
    std::vector<int> weight(static_cast<std::size_t>(g), 0);
    const int lo = static_cast<int>(rng.uniform() * g / 2);
    const int hi = lo + 1 + static_cast<int>(rng.uniform() * (g - lo - 1));
    for (int j = lo; j <= hi && j < g; ++j) weight[static_cast<std::size_t>(j)] = 1 + static_cast<int>(rng.uniform() * 5);
    std::vector<Vector> centers;
    const int initial = 1 + static_cast<int>(rng.uniform() * c.kde.max_centers);
    for (int i = 0; i < initial; ++i) centers.push_back(Vector::Constant(1, rng.uniform()));
    for (int j = 0; j < g; ++j) {
      const bool covered = std::any_of(centers.begin(), centers.end(), [&](const Vector& ctr) {
        return std::abs(ctr[0] - probes[static_cast<std::size_t>(j)][0]) <= radius;
      });
      if (weight[static_cast<std::size_t>(j)] > 0 && !covered) centers.push_back(probes[static_cast<std::size_t>(j)]);
    }
    const Vector new_point = Vector::Constant(1, rng.uniform());
    const int n = static_cast<int>(centers.size());
    if (n > kMaxCenters) continue;
    const std::int64_t scale = lcm_upto(n + 1);
    std::vector<double> values;
    for (const int wv : weight) values.push_back(static_cast<double>(wv * scale));
    const KdeProposal kde = make_kde(centers, radius);
    const KdeBounds b = kde_bound_components(kde, values, new_point, probes);
    const bool improves = kde_update_improves(b.inner, b.outer, static_cast<std::uint64_t>(n));

    // Brute force: M_{n+1} <= M_n compared as exact rationals pi*k/m.
    std::int64_t best_num_n = 0, best_den_n = 1, best_num_n1 = 0, best_den_n1 = 1;
    std::vector<Vector> grown = centers;
    grown.push_back(new_point);
    const KdeProposal kde1 = make_kde(grown, radius);
    for (int j = 0; j < g; ++j) {
      const std::int64_t wv = weight[static_cast<std::size_t>(j)];
      if (wv == 0) continue;
      const auto m0 = static_cast<std::int64_t>(kde_count(kde, probes[static_cast<std::size_t>(j)]));
      const auto m1 = static_cast<std::int64_t>(kde_count(kde1, probes[static_cast<std::size_t>(j)]));
      if (wv * n * best_den_n > best_num_n * m0) best_num_n = wv * n, best_den_n = m0;
      if (wv * (n + 1) * best_den_n1 > best_num_n1 * m1) best_num_n1 = wv * (n + 1), best_den_n1 = m1;
    }
    const bool brute = best_num_n1 * best_den_n <= best_num_n * best_den_n1;
    w.row({static_cast<double>(done), static_cast<double>(n), radius, b.inner, b.outer, improves ? 1.0 : 0.0,
           brute ? 1.0 : 0.0});
    ++done;
  }
  write_text(dir / "events.jsonl", "");
  return {{"trace_rows", w.finish()}, {"checkpoints", json::array()}};
}

// ---- reports -----------------------------------------------------------------------------

json nullable(double num, double den) { return den > 0 ? json(num / den) : json(nullptr); }

DiagnosticsReport chain_report(const RunConfig& c, const fs::path& dir, const TraceTable& t, const json& manifest,
                               const ReplayOptions& opt) {
  DiagnosticsReport r;
  const Target target = make_target(c.target);
  const Eigen::Index m = target.dim;
  if (static_cast<Eigen::Index>(t.header.size()) != m + 5) {
    throw Error(ErrorKind::CorruptArtifact, "trace header does not match the target dimension");
  }
  const std::size_t col_lt = static_cast<std::size_t>(m) + 2;
  const std::size_t col_acc = col_lt + 1;
  const double steps = static_cast<double>(c.steps);

  // Acceptance per step window, overall and for the IMH moves alone.
  const std::size_t windows = static_cast<std::size_t>(std::min<std::uint64_t>(100, c.steps));
  std::vector<double> acc(windows, 0.0), cnt(windows, 0.0);
  double q_acc[4] = {0, 0, 0, 0}, q_cnt[4] = {0, 0, 0, 0};
  double imh_acc = 0, imh_cnt = 0;
  std::vector<std::size_t> post;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double step = t.rows[i][0];
    if (step >= 1.0) {
      const auto wi = std::min(windows - 1, static_cast<std::size_t>((step - 1.0) * static_cast<double>(windows) / steps));
      acc[wi] += t.rows[i][col_acc];
      cnt[wi] += 1.0;
      if (t.tags[i] == "imh") {
        const auto qi = std::min<std::size_t>(3, static_cast<std::size_t>((step - 1.0) * 4.0 / steps));
        q_acc[qi] += t.rows[i][col_acc];
        q_cnt[qi] += 1.0;
        imh_acc += t.rows[i][col_acc];
        imh_cnt += 1.0;
      }
    }
    if (c.steps == 0 || (step >= 1.0 && step > c.diagnostics.burn_in * steps)) post.push_back(i);
  }
  for (std::size_t wi = 0; wi < windows; ++wi) {
    if (cnt[wi] > 0) r.acceptance_rate.push_back(acc[wi] / cnt[wi]);
  }
  r.extra["imh_acceptance_quartiles"] = json::array();
  for (int q = 0; q < 4; ++q) r.extra["imh_acceptance_quartiles"].push_back(nullable(q_acc[q], q_cnt[q]));
  r.extra["imh_acceptance"] = nullable(imh_acc, imh_cnt);
  r.extra["post_burn_in_rows"] = post.size();

  Matrix samples(static_cast<Eigen::Index>(post.size()), m);
  for (std::size_t k = 0; k < post.size(); ++k) {
    for (Eigen::Index d = 0; d < m; ++d) samples(static_cast<Eigen::Index>(k), d) = t.rows[post[k]][static_cast<std::size_t>(d) + 2];
  }

  if (!post.empty() && (c.target.name == "bimodal-2d" || c.target.name == "phi4")) {
    const auto classify = c.target.name == "phi4" ? phi4_mode : bimodal_mode;
    const Vector w = mode_weights(samples, classify, 2);
    r.mode_weights.assign(w.data(), w.data() + w.size());
  }

  // ESS per coordinate from walker 0.
  std::vector<std::vector<double>> series(static_cast<std::size_t>(std::min<Eigen::Index>(m, 100)));
  for (const std::size_t i : post) {
    if (t.rows[i][1] != 0.0) continue;
    for (std::size_t d = 0; d < series.size(); ++d) series[d].push_back(t.rows[i][d + 2]);
  }
  for (const auto& s : series) {
    if (s.size() >= 10) r.ess.push_back(ess(s));
  }

  const std::size_t n_proj = opt.projections.value_or(c.diagnostics.projections);
  Matrix reference;
  if (target.has_sampler() && c.diagnostics.reference_samples > 0) {
    Rng ref_rng = Rng(c.seed).derive(kReferenceTag);
    reference = target.reference_sampler(c.diagnostics.reference_samples, ref_rng);
  }
  if (n_proj > 0 && reference.rows() > 0 && samples.rows() > 0) {
    const Eigen::Index stride = std::max<Eigen::Index>(1, (samples.rows() + reference.rows() - 1) / reference.rows());
    Matrix thinned(0, m);
    thinned.resize((samples.rows() + stride - 1) / stride, m);
    for (Eigen::Index k = 0; k < thinned.rows(); ++k) thinned.row(k) = samples.row(k * stride);
    Rng proj_rng = Rng(c.seed).derive(kProjectionTag);
    r.ks = random_projection_ks(thinned, reference, n_proj, proj_rng);
  }

  if (c.target.name == "categorical" && c.proposal.family == "categorical" && c.kernel.type == "imh") {
    const Vector pi = to_vector(c.target.probs);
    const DiscreteKernel k = imh_discrete_kernel(pi, to_vector(c.proposal.probs));
    Vector start = Vector::Zero(pi.size());
    const Vector x0 = initial_point(c, target, 0);
    start[static_cast<Eigen::Index>(std::llround(x0[0]))] = 1.0;
    r.exact_tv = tv_curve(k, start, c.diagnostics.exact_tv_steps);
    const double M = doeblin_bound(pi, to_vector(c.proposal.probs)).M;
    for (int n = 1; n <= c.diagnostics.exact_tv_steps; ++n) r.tv_bound.push_back(2.0 * std::pow(1.0 - 1.0 / M, n));
    r.extra["doeblin_M"] = M;
    // Empirical TV across walkers at each recorded step.
    std::vector<Vector> counts;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto step = static_cast<std::size_t>(t.rows[i][0]);
      if (step == 0) continue;
      if (counts.size() < step) counts.resize(step, Vector::Zero(pi.size()));
      counts[step - 1][static_cast<Eigen::Index>(std::llround(t.rows[i][2]))] += 1.0;
    }
    json emp = json::array();
    for (const auto& v : counts) emp.push_back(v.sum() > 0 ? (v / v.sum() - pi).cwiseAbs().sum() : 0.0);
    r.extra["empirical_tv"] = emp;
  }

  if (target.normalized && reference.rows() > 0) {
    std::vector<Vector> probes;
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(1000, reference.rows()); ++k) probes.push_back(reference.row(k).transpose());
    json steps_json = json::array();
    for (const auto& ck : manifest.at("checkpoints")) {
      const json j = read_json(dir / ck.at("file").get<std::string>());
      const Proposal p = proposal_with_flow(c, target, flow_from_json(j.at("flow")));
      const double v = std::visit(
          overloaded{[](const std::monostate&) { return 0.0; },
                     [&](const auto& q) { return log_ratio_sup(target, q, std::span<const Vector>(probes)); }},
          p);
      r.log_ratio_sup.push_back(v);
      steps_json.push_back(ck.at("step"));
    }
    r.extra["log_ratio_sup_steps"] = steps_json;
  }
  return r;
}

DiagnosticsReport kl_flow_report(const TraceTable& t) {
  DiagnosticsReport r;
  double err_mu = 0.0, err_sigma = 0.0;
  bool monotone = true;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    err_mu = std::max(err_mu, std::abs(row[1] - row[3]));
    err_sigma = std::max(err_sigma, std::abs(row[2] - row[4]));
    r.log_ratio_sup.push_back(std::log(row[5]));
    if (i > 0 && row[5] > t.rows[i - 1][5]) monotone = false;
  }
  r.extra["max_abs_error_mu"] = err_mu;
  r.extra["max_abs_error_sigma"] = err_sigma;
  r.extra["ratio_bound_non_increasing"] = monotone;
  if (!t.rows.empty()) {
    r.extra["ratio_bound_final"] = t.rows.back()[5];
    r.extra["t_final"] = t.rows.back()[0];
  }
  return r;
}

DiagnosticsReport stationarity_report(const TraceTable& t) {
  DiagnosticsReport r;
  json steps = json::array();
  for (const auto& row : t.rows) {
    steps.push_back(static_cast<std::uint64_t>(row[0]));
    r.ks.push_back(row[1]);
  }
  r.extra["steps"] = steps;
  if (!t.rows.empty()) {
    r.extra["noise_floor"] = t.rows.front()[2];
    r.extra["low_power"] = t.rows.front()[3] != 0.0;
  }
  return r;
}

DiagnosticsReport kde_report(const TraceTable& t) {
  DiagnosticsReport r;
  std::size_t agree = 0, improving = 0;
  for (const auto& row : t.rows) {
    agree += row[5] == row[6] ? 1 : 0;
    improving += row[5] != 0.0 ? 1 : 0;
  }
  r.extra["instances"] = t.rows.size();
  r.extra["agreements"] = agree;
  r.extra["improving"] = improving;
  return r;
}

DiagnosticsReport compute_report(const RunConfig& c, const fs::path& dir, const json& manifest,
                                 const ReplayOptions& opt) {
  const TraceTable t = read_trace((dir / "trace.csv").string(), manifest.at("trace_rows").get<std::size_t>());
  DiagnosticsReport r;
  if (c.mode == "chain") {
    r = chain_report(c, dir, t, manifest, opt);
  } else if (c.mode == "kl-flow") {
    r = kl_flow_report(t);
  } else if (c.mode == "stationarity") {
    r = stationarity_report(t);
  } else {
    r = kde_report(t);
  }
  r.validate();
  return r;
}

}  // namespace

std::string report_text(const DiagnosticsReport& report) { return to_json(report).dump(2) + "\n"; }

TraceTable read_trace(const std::string& path, std::size_t expected_rows) {
  const std::string text = read_text(path);
  if (text.empty() || text.back() != '\n') throw Error(ErrorKind::CorruptArtifact, path + ": truncated (no final newline)");
  TraceTable t;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    return true;
  };
  std::string_view line;
  next_line(line);
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t comma = line.find(',', start);
    t.header.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  const bool tagged = !t.header.empty() && t.header.back() == "kernel_tag";
  const std::size_t numeric = tagged ? t.header.size() - 1 : t.header.size();
  std::size_t line_no = 1;
  while (next_line(line)) {
    ++line_no;
    std::vector<double> row;
    row.reserve(numeric);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t k = 0; k < numeric; ++k) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        throw Error(ErrorKind::CorruptArtifact, path + ": bad number on line " + std::to_string(line_no));
      }
      row.push_back(v);
      p = res.ptr;
      const bool last = k + 1 == numeric && !tagged;
      if (last ? p != end : (p == end || *p != ',')) {
        throw Error(ErrorKind::CorruptArtifact, path + ": wrong field count on line " + std::to_string(line_no));
      }
      if (!last) ++p;
    }
    t.rows.push_back(std::move(row));
    if (tagged) t.tags.emplace_back(p, end);
    if (tagged && t.tags.back().empty()) {
      throw Error(ErrorKind::CorruptArtifact, path + ": missing kernel tag on line " + std::to_string(line_no));
    }
  }
  if (t.rows.size() != expected_rows) {
    throw Error(ErrorKind::CorruptArtifact, path + ": expected " + std::to_string(expected_rows) + " rows, found " +
                                                std::to_string(t.rows.size()));
  }
  return t;
}

RunArtifacts run_experiment(const RunConfig& config) {
  config.validate();
  const fs::path dir(config.out);
  fs::create_directories(dir);
  fs::remove_all(dir / "checkpoints");
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");

  json manifest;
  if (config.mode == "chain") {
    manifest = run_chain(config, dir);
  } else if (config.mode == "kl-flow") {
    manifest = run_kl_flow(config, dir);
  } else if (config.mode == "stationarity") {
    manifest = run_stationarity(config, dir);
  } else {
    manifest = run_kde_study(config, dir);
  }
  manifest["format_version"] = kArtifactFormatVersion;
  manifest["trace"] = "trace.csv";
  manifest["events"] = "events.jsonl";
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  RunArtifacts art;
  art.dir = dir.string();
  for (const auto& ck : manifest.at("checkpoints")) art.checkpoint_files.push_back(ck.at("file").get<std::string>());
  art.report = replay_diagnostics(art.dir);
  write_text(dir / "report.json", report_text(art.report));
  if (!art.report.ks.empty()) write_series_csv((dir / "ks.csv").string(), "ks", art.report.ks);
  if (!art.report.exact_tv.empty()) write_series_csv((dir / "exact_tv.csv").string(), "exact_tv", art.report.exact_tv);
  return art;
}

DiagnosticsReport replay_diagnostics(const std::string& dir_name, const ReplayOptions& options) {
  const fs::path dir(dir_name);
  const json manifest = read_json(dir / "manifest.json");
  if (!manifest.contains("format_version") || manifest.at("format_version") != kArtifactFormatVersion ||
      !manifest.contains("trace_rows") || !manifest.contains("checkpoints")) {
    throw Error(ErrorKind::CorruptArtifact, "manifest in " + dir_name + " is incomplete or from another format");
  }
  RunConfig config;
  try {
    config = config_from_json(read_json(dir / "config.json"));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptArtifact) throw;
    throw Error(ErrorKind::CorruptArtifact, std::string("stored config: ") + e.what());
  }
  return compute_report(config, dir, manifest, options);
}

}  // namespace aimh
