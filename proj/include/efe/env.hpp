#pragma once

// Environment interface shared by the gridworld and the door-key world, and
// the per-episode record the planner fills in.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "efe/model.hpp"

namespace efe {

using Observation = std::vector<std::size_t>;

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
};

struct EpisodeRecord {
  std::string environment;
  std::string agent;
  std::uint64_t seed = 0;
  std::vector<std::size_t> actions;
  // observations[0] is emitted by reset; observations[i] follows actions[i-1].
  std::vector<Observation> observations;
  std::vector<double> rewards;
  double total_reward = 0.0;
  bool success = false;
  int steps = 0;
  // Environment state vectors, starting with the reset state.
  std::vector<std::vector<int>> states;
  // Bethe free energy per planning iteration, one list per step.
  std::vector<std::vector<double>> bfe_traces;
  // q(u_1) used for each action.
  std::vector<std::vector<double>> policies;
  std::optional<int> key_visibility_step;

  nlohmann::json to_json() const;
  static EpisodeRecord from_json(const nlohmann::json& j);
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual Observation reset(std::uint64_t seed) = 0;
  // Throws UsageError after the episode is done.
  virtual StepResult step(std::size_t action) = 0;
  virtual bool done() const = 0;
  virtual bool success() const = 0;
  virtual int time() const = 0;
  virtual int horizon() const = 0;
  virtual std::size_t num_actions() const = 0;
  virtual std::vector<std::size_t> observation_alphabets() const = 0;
  // The agent's generative model for the current episode (after reset).
  virtual ModelSpec agent_model() const = 0;
  virtual std::vector<int> state_vector() const = 0;
  virtual std::string render() const = 0;
  // Renders a recorded state vector the same way render() draws the live one.
  virtual std::string render_state(const std::vector<int>& state) const = 0;
  virtual std::optional<int> key_visibility_step(
      const EpisodeRecord& record) const {
    (void)record;
    return std::nullopt;
  }
};

}  // namespace efe
