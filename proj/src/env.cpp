#include "efe/env.hpp"

namespace efe {

nlohmann::json EpisodeRecord::to_json() const {
  nlohmann::json j;
  j["environment"] = environment;
  j["agent"] = agent;
  j["seed"] = seed;
  j["actions"] = actions;
  j["observations"] = observations;
  j["rewards"] = rewards;
  j["total_reward"] = total_reward;
  j["success"] = success;
  j["steps"] = steps;
  j["states"] = states;
  j["bfe_traces"] = bfe_traces;
  j["policies"] = policies;
  j["key_visibility_step"] =
      key_visibility_step ? nlohmann::json(*key_visibility_step)
                          : nlohmann::json(nullptr);
  return j;
}

EpisodeRecord EpisodeRecord::from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  r.environment = j.at("environment").get<std::string>();
  r.agent = j.at("agent").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.actions = j.at("actions").get<std::vector<std::size_t>>();
  r.observations = j.at("observations").get<std::vector<Observation>>();
  r.rewards = j.at("rewards").get<std::vector<double>>();
  r.total_reward = j.at("total_reward").get<double>();
  r.success = j.at("success").get<bool>();
  r.steps = j.at("steps").get<int>();
  r.states = j.at("states").get<std::vector<std::vector<int>>>();
  r.bfe_traces = j.at("bfe_traces").get<std::vector<std::vector<double>>>();
  r.policies = j.at("policies").get<std::vector<std::vector<double>>>();
  if (!j.at("key_visibility_step").is_null()) {
    r.key_visibility_step = j.at("key_visibility_step").get<int>();
  }
  return r;
}

}  // namespace efe
