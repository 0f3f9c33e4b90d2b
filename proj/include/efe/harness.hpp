#pragma once

// Experiment orchestration: paired-seed suites, metrics, artifact files,
// single-plan traces, and the simulator-versus-model coherence checks.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "efe/env.hpp"
#include "efe/factor_graph.hpp"
#include "efe/grid_env.hpp"
#include "efe/minigrid_env.hpp"
#include "efe/oracle.hpp"
#include "efe/planner.hpp"

namespace efe {

struct ExperimentConfig {
  std::string environment = "grid";  // grid | minigrid
  std::string agent = "both";        // efe | kl | both
  int episodes = 100;
  std::uint64_t seed = 0;
  // 0 picks the environment's default horizon.
  int horizon = 0;
  AgentConfig agent_config;
  // Gridworld key = value file; empty means the default instance.
  std::string env_config;
  // Artifacts are written only when set.
  std::string out_dir;
  int workers = 1;

  void validate() const;
  std::vector<std::string> agents() const;
  nlohmann::json to_json() const;
};

// Applies JSON keys (environment, agent, episodes, seed, horizon,
// vi_iterations, sweeps, filter_sweeps, score_scale, sample, workers,
// env_config, out) onto cfg. Unknown keys are a ConfigurationError.
void apply_config_json(ExperimentConfig& cfg, const nlohmann::json& j);
// Same keys read from environment variables PREFIX + upper-case key.
void apply_env_overrides(ExperimentConfig& cfg,
                         const std::string& prefix = "EFEVFE_");

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg);
int default_horizon(const std::string& environment);

struct MetricsSummary {
  std::string environment;
  std::string agent;
  int episodes = 0;
  double success_rate = 0.0;
  double reward_mean = 0.0;
  double reward_std = 0.0;  // sample standard deviation
  // Over episodes in which the key became visible.
  std::optional<double> key_time_mean;
  std::optional<double> key_time_std;
  int key_seen = 0;
  int key_never_seen = 0;

  nlohmann::json to_json() const;
};

MetricsSummary summarize(const std::vector<EpisodeRecord>& records,
                         const std::string& environment,
                         const std::string& agent);

struct AgentRun {
  std::vector<EpisodeRecord> records;
  MetricsSummary summary;
};

// Episodes with seeds seed + i, run on `workers` threads; results keep seed
// order. Any episode error is rethrown naming its seed.
AgentRun run_agent(const ExperimentConfig& cfg, bool epistemic);

struct SuiteResult {
  std::map<std::string, AgentRun> runs;  // keyed by agent name
  nlohmann::json summary;
};

// Runs every requested agent on the same seeds and writes artifacts when
// cfg.out_dir is set: episodes_<agent>.jsonl, bfe_<agent>.csv,
// trajectories_<agent>.txt and summary.json.
SuiteResult run_suite(const ExperimentConfig& cfg);
nlohmann::json suite_summary(const ExperimentConfig& cfg,
                             const std::map<std::string, AgentRun>& runs);
// Side-by-side metrics table when both agents ran.
std::string comparison_table(const std::map<std::string, AgentRun>& runs);

void write_episodes_jsonl(const std::string& path,
                          const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_episodes_jsonl(const std::string& path);
void write_bfe_csv(const std::string& path,
                   const std::vector<EpisodeRecord>& records);
std::string render_trajectory(const Environment& env,
                              const EpisodeRecord& record);

struct TraceResult {
  InferenceTrace trace;
  // Beliefs over the current state and static variables after the last
  // iteration, keyed by variable.
  std::map<std::string, DiscreteTensor> beliefs;
  std::string frame;
};

// One planning call from the environment's reset state; dumps bfe.csv and
// beliefs.json into out_dir when given.
TraceResult trace_inference(const ExperimentConfig& cfg,
                            const std::string& out_dir = "");

// Chain posterior read off planner marginals for the oracle: node joints of
// the transitions become q(x_t | x_{t-1}, u_t); zero-mass parent columns fall
// back to the model's table. Observation conditionals are the likelihoods.
ChainPosterior chain_from_marginals(const ModelSpec& model, const Marginals& m);
// prod_a q_a / prod_i q_i^(d_i - 1) over every edge; exact on trees.
DiscreteTensor bethe_joint(const FactorGraph& graph, const Marginals& m);

struct ChiSquareRow {
  std::string what;  // e.g. "B x=12 u=3"
  double statistic = 0.0;
  double critical = 0.0;
  int dof = 0;
  bool pass = true;
};

// Samples the gridworld simulator from every non-absorbing (cell, action)
// and compares next-cell and observation frequencies with B and A.
std::vector<ChiSquareRow> grid_chi_square(const GridSpec& spec, int samples,
                                          std::uint64_t seed);

struct CoherenceReport {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> examples;  // first few mismatches
};

// Every (l, o, s, k, d, u): the simulator's successor against the one-hot
// columns of B^l, B^o, B^s, and its rendering against every A column.
CoherenceReport minigrid_coherence(const MiniGridSpec& spec);

// Upper 1 - alpha quantile of chi-square with dof degrees of freedom
// (Wilson-Hilferty).
double chi_square_critical(int dof, double z = 3.719);  // alpha ~ 1e-4

}  // namespace efe
