#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "acceptance.hpp"
#include "aimh/config.hpp"
#include "aimh/error.hpp"
#include "aimh/runner.hpp"

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw aimh::Error(aimh::ErrorKind::Config, "cannot read config file " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw aimh::Error(aimh::ErrorKind::Config, "config file " + path + " is not valid JSON");
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive independent Metropolis-Hastings with normalizing-flow proposals"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
  std::string config_path, preset, out;
  std::vector<std::string> sets;
  std::uint64_t seed = 0, steps = 0;
  std::size_t walkers = 0;
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--preset", preset, "Preset name (see `presets`)");
  auto* seed_opt = run->add_option("--seed", seed, "Random seed");
  auto* steps_opt = run->add_option("--steps", steps, "Sampling steps per walker");
  auto* walkers_opt = run->add_option("--walkers", walkers, "Number of walkers");
  run->add_option("--out", out, "Output directory");
  run->add_option("--set", sets, "Override a config key, e.g. --set kernel.type=mala");

  auto* presets = app.add_subcommand("presets", "List presets");
  std::string show;
  presets->add_option("--show", show, "Print the full config of one preset");

  auto* replay = app.add_subcommand("replay", "Recompute diagnostics from a run directory");
  std::string replay_dir, replay_out;
  std::size_t projections = 0;
  replay->add_option("dir", replay_dir, "Run directory")->required();
  auto* proj_opt = replay->add_option("--projections", projections, "Override the number of KS projections");
  replay->add_option("--out", replay_out, "Write the report here instead of stdout");

  auto* check = app.add_subcommand("check", "Run the acceptance suite");
  std::vector<int> only;
  std::string work_dir = "acceptance_runs";
  check->add_option("--only", only, "Criterion numbers to run");
  check->add_option("--work-dir", work_dir, "Scratch directory for acceptance runs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      json user = config_path.empty() ? json::object() : load_json_file(config_path);
      if (!preset.empty()) user["preset"] = preset;
      if (!user.contains("preset") && config_path.empty()) {
        throw aimh::Error(aimh::ErrorKind::Config, "give --preset or --config");
      }
      json resolved = aimh::resolve_config_json(user);
      if (*seed_opt) resolved["seed"] = seed;
      if (*steps_opt) resolved["steps"] = steps;
      if (*walkers_opt) resolved["walkers"] = walkers;
      if (!out.empty()) resolved["out"] = out;
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw aimh::Error(aimh::ErrorKind::Config, "--set expects key=value, got " + s);
        aimh::set_config_path(resolved, s.substr(0, eq), s.substr(eq + 1));
      }
      const aimh::RunConfig config = aimh::config_from_json(resolved);
      const auto art = aimh::run_experiment(config);
      std::cout << "wrote " << art.dir << "/{config.json,manifest.json,trace.csv,events.jsonl,report.json}\n";
      const json report = aimh::to_json(art.report);
      if (!art.report.mode_weights.empty()) std::cout << "mode_weights " << report["mode_weights"].dump() << '\n';
      if (report["extra"].contains("imh_acceptance")) {
        std::cout << "imh_acceptance " << report["extra"]["imh_acceptance"].dump() << '\n';
      }
    } else if (presets->parsed()) {
      if (!show.empty()) {
        std::cout << aimh::preset_json(show).dump(2) << '\n';
      } else {
        for (const auto& p : aimh::list_presets()) std::cout << p.name << "\t" << p.description << '\n';
      }
    } else if (replay->parsed()) {
      aimh::ReplayOptions opt;
      if (*proj_opt) opt.projections = projections;
      const std::string text = aimh::report_text(aimh::replay_diagnostics(replay_dir, opt));
      if (replay_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(replay_out) << text;
      }
    } else if (check->parsed()) {
      aimh::acceptance::SuiteOptions opt;
      opt.only = only;
      opt.work_dir = work_dir;
      const auto results = aimh::acceptance::run_suite(opt, std::cout);
      for (const auto& r : results) {
        if (!r.pass) return 1;
      }
    }
  } catch (const aimh::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
