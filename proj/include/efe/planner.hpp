#pragma once

// Iterative free-energy minimization with epistemic prior refresh, belief
// filtering between actions, and the receding-horizon episode loop.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "efe/env.hpp"
#include "efe/factor_graph.hpp"
#include "efe/model.hpp"

namespace efe {

enum class ActionSelection { kArgmax, kSample };

struct AgentConfig {
  int horizon = 12;
  int vi_iterations = 20;
  int sweeps_per_iteration = 1;
  bool epistemic_enabled = true;
  ActionSelection action_selection = ActionSelection::kArgmax;
  std::uint64_t sample_seed = 0;
  double score_scale = 1.0;
  // Sweeps for the one-slice belief update graphs.
  int filter_sweeps = 1;
  bool keep_prior_snapshots = false;

  void validate() const;
};

struct PolicyPosterior {
  std::vector<DiscreteTensor> control_marginals;  // q(u_1) ... q(u_T)
};

struct InferenceTrace {
  std::vector<double> bethe_free_energy;
  // Installed epistemic prior tables per iteration, when requested.
  std::vector<nlohmann::json> prior_snapshots;
};

struct PlanResult {
  PolicyPosterior policy;
  InferenceTrace trace;
  Marginals marginals;
};

struct History {
  std::vector<std::size_t> actions;
  // observations[0] precedes the first action.
  std::vector<Observation> observations;
};

// Factorized belief over every state and static variable, keyed by name.
using Belief = std::map<std::string, DiscreteTensor>;

Belief initial_belief(const ModelSpec& model);
// Conditions the current slice on an observation.
Belief observe_belief(const ModelSpec& model, const Belief& belief,
                      const Observation& obs, int sweeps);
// Advances one slice under a known action, then conditions on obs.
Belief filter_step(const ModelSpec& model, const Belief& belief,
                   std::size_t action, const Observation& obs, int sweeps);
Belief filter_history(const ModelSpec& model, const History& history,
                      int sweeps);

// Plans over `remaining` slices starting from `belief`.
PlanResult plan_from_belief(const ModelSpec& model, const Belief& belief,
                            int remaining, const AgentConfig& cfg);
// Plans over the steps left to model.horizon after the history.
PlanResult plan(const ModelSpec& model, const History& history,
                const AgentConfig& cfg);

std::size_t select_action(const DiscreteTensor& q_u1, const AgentConfig& cfg);
std::size_t select_action(const DiscreteTensor& q_u1, const AgentConfig& cfg,
                          std::mt19937_64& rng);

// Resets env with seed and runs the receding-horizon loop with the env's own
// agent model.
EpisodeRecord run_episode(Environment& env, const AgentConfig& cfg,
                          std::uint64_t seed);
// Same, with a caller-supplied model; its horizon is replaced by cfg.horizon.
EpisodeRecord run_episode(Environment& env, const ModelSpec& model,
                          const AgentConfig& cfg, std::uint64_t seed);

}  // namespace efe
