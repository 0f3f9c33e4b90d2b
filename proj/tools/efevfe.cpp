// Command-line front end: run, trace, verify, render.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "efe/checks.hpp"
#include "efe/error.hpp"
#include "efe/harness.hpp"

namespace {

struct Flags {
  std::string env, agent, config, out, env_config;
  int episodes = 0, horizon = 0, vi_iters = 0, workers = 0;
  std::uint64_t seed = 0;
  bool sample = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--env", f.env, "grid or minigrid");
  app->add_option("--agent", f.agent, "efe, kl or both");
  app->add_option("--seed", f.seed, "base seed; episode i uses seed + i");
  app->add_option("--horizon", f.horizon, "planning and episode horizon");
  app->add_option("--vi-iters", f.vi_iters, "free-energy iterations per plan");
  app->add_option("--config", f.config, "JSON config file");
  app->add_option("--env-config", f.env_config, "gridworld layout file");
  app->add_option("--out", f.out, "output directory");
}

// Defaults, then the JSON file, then EFEVFE_* variables, then flags.
efe::ExperimentConfig resolve(const CLI::App* app, const Flags& f) {
  efe::ExperimentConfig cfg;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw efe::ConfigurationError("cannot read " + f.config);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw efe::ConfigurationError(f.config + " is not JSON");
    efe::apply_config_json(cfg, j);
  }
  efe::apply_env_overrides(cfg);
  auto given = [&](const char* name) { return app->count(name) > 0; };
  if (given("--env")) cfg.environment = f.env;
  if (given("--agent")) cfg.agent = f.agent;
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--horizon")) cfg.horizon = f.horizon;
  if (given("--vi-iters")) cfg.agent_config.vi_iterations = f.vi_iters;
  if (given("--env-config")) cfg.env_config = f.env_config;
  if (given("--out")) cfg.out_dir = f.out;
  if (app->get_option_no_throw("--episodes") && given("--episodes")) {
    cfg.episodes = f.episodes;
  }
  if (app->get_option_no_throw("--workers") && given("--workers")) {
    cfg.workers = f.workers;
  }
  if (app->get_option_no_throw("--sample") && given("--sample")) {
    cfg.agent_config.action_selection = efe::ActionSelection::kSample;
  }
  cfg.validate();
  return cfg;
}

int cmd_run(const CLI::App* app, const Flags& f) {
  const auto cfg = resolve(app, f);
  const auto res = efe::run_suite(cfg);
  if (res.runs.size() > 1) {
    std::cout << efe::comparison_table(res.runs);
  } else {
    std::cout << res.summary.dump(2) << '\n';
  }
  if (!cfg.out_dir.empty()) std::cout << "artifacts in " << cfg.out_dir << '\n';
  return 0;
}

int cmd_trace(const CLI::App* app, const Flags& f) {
  auto cfg = resolve(app, f);
  cfg.agent_config.epistemic_enabled = cfg.agent != "kl";
  const auto tr = efe::trace_inference(cfg, cfg.out_dir);
  std::cout << tr.frame << "iteration,bfe\n";
  std::cout.precision(12);
  for (std::size_t i = 0; i < tr.trace.bethe_free_energy.size(); ++i) {
    std::cout << i + 1 << ',' << tr.trace.bethe_free_energy[i] << '\n';
  }
  for (const auto& [name, b] : tr.beliefs) {
    std::cout << name << ' ' << efe::to_json(b)["data"].dump() << '\n';
  }
  return 0;
}

int cmd_verify(std::uint64_t seed, int samples) {
  const efe::CheckResult results[] = {
      efe::check_tree_inference(100, seed),
      efe::check_decomposition(100, seed),
      efe::check_entropy_identities(1000, seed),
      efe::check_ablation(seed),
      efe::check_grid_convergence(20, 1e-6),
      efe::check_grid_chi_square(samples, seed),
      efe::check_minigrid_coherence(),
  };
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

int cmd_render(const CLI::App* app, const Flags& f, const std::string& path,
               int index) {
  const auto cfg = resolve(app, f);
  const auto env = efe::make_environment(cfg);
  const auto records = efe::read_episodes_jsonl(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (index >= 0 && static_cast<int>(i) != index) continue;
    std::cout << efe::render_trajectory(*env, records[i]) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expected free energy planning by message passing"};
  app.require_subcommand(1);
  Flags f;

  auto* run = app.add_subcommand("run", "run an experiment suite");
  add_common(run, f);
  run->add_option("--episodes", f.episodes, "episodes per agent");
  run->add_option("--workers", f.workers, "worker threads");
  run->add_flag("--sample", f.sample, "sample actions instead of argmax");

  auto* trace = app.add_subcommand("trace", "one planning call from the start state");
  add_common(trace, f);

  auto* verify = app.add_subcommand("verify", "oracle and coherence checks");
  std::uint64_t verify_seed = 0;
  int samples = 100000;
  verify->add_option("--seed", verify_seed, "generator seed");
  verify->add_option("--samples", samples, "simulator samples per (cell, action)");

  auto* render = app.add_subcommand("render", "draw recorded episodes");
  add_common(render, f);
  std::string episodes_path;
  int index = -1;
  render->add_option("episodes", episodes_path, "episodes_<agent>.jsonl")->required();
  render->add_option("--index", index, "only this episode");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run, f);
    if (*trace) return cmd_trace(trace, f);
    if (*verify) return cmd_verify(verify_seed, samples);
    if (*render) return cmd_render(render, f, episodes_path, index);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
