#include "efe/planner.hpp"

#include <sstream>

#include "efe/epistemic.hpp"
#include "efe/error.hpp"

namespace efe {
namespace {

Belief read_belief(const ModelSpec& model, const Marginals& m, int t) {
  Belief b;
  for (const auto& v : model.states) {
    b.emplace(v.name,
              m.edge_marginal(edge_name(v.name, t)).renamed(edge_name(v.name, t),
                                                            v.name));
  }
  for (const auto& v : model.statics) b.emplace(v.name, m.edge_marginal(v.name));
  return b;
}

void check_observation(const ModelSpec& model, const Observation& obs) {
  if (obs.size() != model.observations.size()) {
    throw ConfigurationError("observation has " + std::to_string(obs.size()) +
                             " symbols, model expects " +
                             std::to_string(model.observations.size()));
  }
}

}  // namespace

void AgentConfig::validate() const {
  if (horizon < 1) throw ConfigurationError("horizon must be at least 1");
  if (vi_iterations < 1) {
    throw ConfigurationError("vi_iterations must be at least 1");
  }
  if (sweeps_per_iteration < 1 || filter_sweeps < 1) {
    throw ConfigurationError("sweep counts must be at least 1");
  }
}

Belief initial_belief(const ModelSpec& model) {
  Belief b;
  for (const auto& v : model.states) b.emplace(v.name, model.initial.at(v.name));
  for (const auto& v : model.statics) b.emplace(v.name, model.initial.at(v.name));
  return b;
}

Belief observe_belief(const ModelSpec& model, const Belief& belief,
                      const Observation& obs, int sweeps) {
  check_observation(model, obs);
  BuildOptions opts;
  opts.preferences = false;
  opts.epistemic = false;
  opts.control_prior = false;
  opts.horizon = 0;
  opts.observe_initial_slice = true;
  auto mg = build_graph(with_initial(model, belief, 1), opts);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    mg.graph.observe(edge_name(model.observations[i].name, 0), obs[i]);
  }
  return read_belief(model, run_inference(mg.graph, sweeps), 0);
}

Belief filter_step(const ModelSpec& model, const Belief& belief,
                   std::size_t action, const Observation& obs, int sweeps) {
  check_observation(model, obs);
  BuildOptions opts;
  opts.preferences = false;
  opts.epistemic = false;
  opts.control_prior = false;
  opts.horizon = 1;
  auto mg = build_graph(with_initial(model, belief, 1), opts);
  mg.graph.observe(edge_name(model.control.name, 1), action);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    mg.graph.observe(edge_name(model.observations[i].name, 1), obs[i]);
  }
  return read_belief(model, run_inference(mg.graph, sweeps), 1);
}

Belief filter_history(const ModelSpec& model, const History& history,
                      int sweeps) {
  if (history.observations.size() != history.actions.size() + 1) {
    throw UsageError("history needs one more observation than actions");
  }
  Belief b = observe_belief(model, initial_belief(model),
                            history.observations[0], sweeps);
  for (std::size_t i = 0; i < history.actions.size(); ++i) {
    b = filter_step(model, b, history.actions[i], history.observations[i + 1],
                    sweeps);
  }
  return b;
}

PlanResult plan_from_belief(const ModelSpec& model, const Belief& belief,
                            int remaining, const AgentConfig& cfg) {
  cfg.validate();
  if (remaining < 1) throw UsageError("nothing left to plan");
  auto mg = build_graph(with_initial(model, belief, remaining));
  PlanResult out;
  Marginals m;
  for (int tau = 1; tau <= cfg.vi_iterations; ++tau) {
    try {
      if (tau > 1 && cfg.epistemic_enabled) {
        // Priors for this iteration come from the previous posterior.
        std::vector<std::pair<std::string, DiscreteTensor>> tables;
        for (const auto& spec : mg.epistemic) {
          tables.emplace_back(spec.node,
                              factored_epistemic_prior(spec, m, cfg.score_scale));
        }
        for (auto& [node, table] : tables) {
          mg.graph.set_table(node, std::move(table));
        }
      }
      if (cfg.keep_prior_snapshots) {
        nlohmann::json snap = nlohmann::json::object();
        for (const auto& spec : mg.epistemic) {
          snap[spec.node] = to_json(mg.graph.table(spec.node));
        }
        out.trace.prior_snapshots.push_back(std::move(snap));
      }
      m = run_inference(mg.graph, cfg.sweeps_per_iteration);
    } catch (const InconsistentEvidenceError& e) {
      std::ostringstream os;
      os << "iteration " << tau << ": " << e.what();
      throw InconsistentEvidenceError(e.edge(), os.str());
    }
    out.trace.bethe_free_energy.push_back(bethe_free_energy(m));
  }
  for (int t = 1; t <= remaining; ++t) {
    out.policy.control_marginals.push_back(
        m.edge_marginal(edge_name(model.control.name, t)));
  }
  out.marginals = std::move(m);
  return out;
}

PlanResult plan(const ModelSpec& model, const History& history,
                const AgentConfig& cfg) {
  const int remaining = model.horizon - static_cast<int>(history.actions.size());
  if (remaining < 1) throw UsageError("history already spans the horizon");
  return plan_from_belief(model, filter_history(model, history, cfg.filter_sweeps),
                          remaining, cfg);
}

std::size_t select_action(const DiscreteTensor& q_u1, const AgentConfig& cfg,
                          std::mt19937_64& rng) {
  const auto d = q_u1.data();
  if (cfg.action_selection == ActionSelection::kSample) {
    std::discrete_distribution<std::size_t> dist(d.begin(), d.end());
    return dist(rng);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] > d[best]) best = i;
  }
  return best;
}

std::size_t select_action(const DiscreteTensor& q_u1, const AgentConfig& cfg) {
  std::mt19937_64 rng(cfg.sample_seed);
  return select_action(q_u1, cfg, rng);
}

EpisodeRecord run_episode(Environment& env, const AgentConfig& cfg,
                          std::uint64_t seed) {
  env.reset(seed);
  return run_episode(env, env.agent_model(), cfg, seed);
}

EpisodeRecord run_episode(Environment& env, const ModelSpec& model_in,
                          const AgentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelSpec model = model_in;
  model.horizon = cfg.horizon;
  if (env.horizon() != cfg.horizon) {
    throw ConfigurationError("environment horizon " +
                             std::to_string(env.horizon()) +
                             " differs from agent horizon " +
                             std::to_string(cfg.horizon));
  }
  const auto alphabets = env.observation_alphabets();
  bool agree = model.control.card == env.num_actions() &&
               alphabets.size() == model.observations.size();
  for (std::size_t i = 0; agree && i < alphabets.size(); ++i) {
    agree = alphabets[i] == model.observations[i].card;
  }
  if (!agree) {
    throw ConfigurationError("environment and model alphabets disagree");
  }

  EpisodeRecord rec;
  rec.environment = env.name();
  rec.agent = cfg.epistemic_enabled ? "efe" : "kl";
  rec.seed = seed;
  const Observation first = env.reset(seed);
  rec.observations.push_back(first);
  rec.states.push_back(env.state_vector());
  std::mt19937_64 rng(cfg.sample_seed ^ (seed * 0x9E3779B97F4A7C15ull));

  Belief belief;
  if (!env.done()) {
    belief = observe_belief(model, initial_belief(model), first,
                            cfg.filter_sweeps);
  }
  while (!env.done() && env.time() < cfg.horizon) {
    const int remaining = cfg.horizon - env.time();
    const auto pr = plan_from_belief(model, belief, remaining, cfg);
    const auto& q = pr.policy.control_marginals.front();
    const std::size_t action = select_action(q, cfg, rng);
    const auto sr = env.step(action);
    rec.actions.push_back(action);
    rec.observations.push_back(sr.observation);
    rec.rewards.push_back(sr.reward);
    rec.total_reward += sr.reward;
    rec.states.push_back(env.state_vector());
    rec.bfe_traces.push_back(pr.trace.bethe_free_energy);
    rec.policies.emplace_back(q.data().begin(), q.data().end());
    if (!sr.done) {
      belief = filter_step(model, belief, action, sr.observation,
                           cfg.filter_sweeps);
    }
  }
  rec.success = env.success();
  rec.steps = static_cast<int>(rec.actions.size());
  rec.key_visibility_step = env.key_visibility_step(rec);
  return rec;
}

}  // namespace efe
