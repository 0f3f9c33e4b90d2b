#include "efe/harness.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "efe/error.hpp"

namespace efe {
namespace {

const char* const kConfigKeys[] = {
    "environment", "agent",       "episodes", "seed",    "horizon",
    "vi_iterations", "sweeps",    "filter_sweeps", "score_scale", "sample",
    "sample_seed", "workers",     "env_config",   "out"};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("cannot write " + path);
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string format_pm(double m, double s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << m << " ± " << s;
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (environment != "grid" && environment != "minigrid") {
    throw ConfigurationError("unknown environment '" + environment + "'");
  }
  if (agent != "efe" && agent != "kl" && agent != "both") {
    throw ConfigurationError("unknown agent '" + agent + "'");
  }
  if (episodes < 1) throw ConfigurationError("episodes must be at least 1");
  if (horizon < 0) throw ConfigurationError("horizon must not be negative");
  if (workers < 1) throw ConfigurationError("workers must be at least 1");
  if (environment == "minigrid" && !env_config.empty()) {
    throw ConfigurationError("the door-key world takes no layout file");
  }
  AgentConfig a = agent_config;
  a.horizon = horizon > 0 ? horizon : default_horizon(environment);
  a.validate();
}

std::vector<std::string> ExperimentConfig::agents() const {
  if (agent == "both") return {"efe", "kl"};
  return {agent};
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"environment", environment},
          {"agent", agent},
          {"episodes", episodes},
          {"seed", seed},
          {"horizon", horizon > 0 ? horizon : default_horizon(environment)},
          {"vi_iterations", agent_config.vi_iterations},
          {"sweeps", agent_config.sweeps_per_iteration},
          {"filter_sweeps", agent_config.filter_sweeps},
          {"score_scale", agent_config.score_scale},
          {"sample", agent_config.action_selection == ActionSelection::kSample},
          {"sample_seed", agent_config.sample_seed},
          {"env_config", env_config}};
}

void apply_config_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigurationError("config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "environment") cfg.environment = v.get<std::string>();
      else if (k == "agent") cfg.agent = v.get<std::string>();
      else if (k == "episodes") cfg.episodes = v.get<int>();
      else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "horizon") cfg.horizon = v.get<int>();
      else if (k == "vi_iterations") cfg.agent_config.vi_iterations = v.get<int>();
      else if (k == "sweeps") cfg.agent_config.sweeps_per_iteration = v.get<int>();
      else if (k == "filter_sweeps") cfg.agent_config.filter_sweeps = v.get<int>();
      else if (k == "score_scale") cfg.agent_config.score_scale = v.get<double>();
      else if (k == "sample") {
        cfg.agent_config.action_selection =
            v.get<bool>() ? ActionSelection::kSample : ActionSelection::kArgmax;
      } else if (k == "sample_seed") {
        cfg.agent_config.sample_seed = v.get<std::uint64_t>();
      } else if (k == "workers") cfg.workers = v.get<int>();
      else if (k == "env_config") cfg.env_config = v.get<std::string>();
      else if (k == "out") cfg.out_dir = v.get<std::string>();
      else throw ConfigurationError("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("config value: ") + e.what());
  }
}

void apply_env_overrides(ExperimentConfig& cfg, const std::string& prefix) {
  nlohmann::json j = nlohmann::json::object();
  for (const char* key : kConfigKeys) {
    std::string name = prefix;
    for (const char* c = key; *c; ++c) {
      name += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
    }
    const char* v = std::getenv(name.c_str());
    if (!v) continue;
    // Numbers and booleans parse as JSON; anything else is a string.
    auto parsed = nlohmann::json::parse(v, nullptr, false);
    j[key] = parsed.is_discarded() || parsed.is_object() || parsed.is_array()
                 ? nlohmann::json(std::string(v))
                 : parsed;
  }
  apply_config_json(cfg, j);
}

int default_horizon(const std::string& environment) {
  if (environment == "minigrid") return MiniGridSpec{}.horizon;
  return GridSpec::default_instance().horizon;
}

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg) {
  if (cfg.environment == "grid") {
    GridSpec spec = cfg.env_config.empty() ? GridSpec::default_instance()
                                           : load_grid_config(cfg.env_config);
    if (cfg.horizon > 0) spec.horizon = cfg.horizon;
    return std::make_unique<GridEnv>(spec);
  }
  if (cfg.environment == "minigrid") {
    MiniGridSpec spec;
    if (cfg.horizon > 0) spec.horizon = cfg.horizon;
    return std::make_unique<MiniGridEnv>(spec);
  }
  throw ConfigurationError("unknown environment '" + cfg.environment + "'");
}

nlohmann::json MetricsSummary::to_json() const {
  nlohmann::json j = {{"environment", environment},
                      {"agent", agent},
                      {"episodes", episodes},
                      {"success_rate", success_rate},
                      {"reward_mean", reward_mean},
                      {"reward_std", reward_std}};
  if (environment == "minigrid") {
    j["key_time_mean"] = key_time_mean ? nlohmann::json(*key_time_mean)
                                       : nlohmann::json(nullptr);
    j["key_time_std"] = key_time_std ? nlohmann::json(*key_time_std)
                                     : nlohmann::json(nullptr);
    j["key_seen"] = key_seen;
    j["key_never_seen"] = key_never_seen;
  }
  return j;
}

MetricsSummary summarize(const std::vector<EpisodeRecord>& records,
                         const std::string& environment,
                         const std::string& agent) {
  MetricsSummary s;
  s.environment = environment;
  s.agent = agent;
  s.episodes = static_cast<int>(records.size());
  std::vector<double> rewards, key_times;
  int wins = 0;
  for (const auto& r : records) {
    wins += r.success ? 1 : 0;
    rewards.push_back(r.total_reward);
    if (r.key_visibility_step) {
      key_times.push_back(*r.key_visibility_step);
    } else {
      ++s.key_never_seen;
    }
  }
  s.key_seen = static_cast<int>(key_times.size());
  if (!records.empty()) {
    s.success_rate = static_cast<double>(wins) / static_cast<double>(records.size());
  }
  s.reward_mean = mean(rewards);
  s.reward_std = sample_std(rewards);
  if (!key_times.empty()) {
    s.key_time_mean = mean(key_times);
    s.key_time_std = sample_std(key_times);
  }
  return s;
}

AgentRun run_agent(const ExperimentConfig& cfg, bool epistemic) {
  cfg.validate();
  const std::string name = epistemic ? "efe" : "kl";
  AgentConfig ac = cfg.agent_config;
  ac.epistemic_enabled = epistemic;
  ac.horizon = cfg.horizon > 0 ? cfg.horizon : default_horizon(cfg.environment);

  AgentRun run;
  run.records.resize(static_cast<std::size_t>(cfg.episodes));
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::optional<std::pair<std::uint64_t, std::string>> failure;
  auto worker = [&] {
    std::unique_ptr<Environment> env;
    try {
      env = make_environment(cfg);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!failure) failure = {cfg.seed, e.what()};
      return;
    }
    for (int i; (i = next++) < cfg.episodes;) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
      try {
        run.records[i] = run_episode(*env, ac, seed);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!failure || seed < failure->first) failure = {seed, e.what()};
        next = cfg.episodes;
      }
    }
  };
  const int n = std::min(cfg.workers, cfg.episodes);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    throw std::runtime_error(name + " episode with seed " +
                             std::to_string(failure->first) + " failed: " +
                             failure->second);
  }
  run.summary = summarize(run.records, cfg.environment, name);
  return run;
}

nlohmann::json suite_summary(const ExperimentConfig& cfg,
                             const std::map<std::string, AgentRun>& runs) {
  nlohmann::json agents = nlohmann::json::object();
  for (const auto& [name, run] : runs) agents[name] = run.summary.to_json();
  return {{"config", cfg.to_json()}, {"agents", agents}};
}

std::string comparison_table(const std::map<std::string, AgentRun>& runs) {
  std::ostringstream os;
  std::vector<std::string> names;
  for (const auto& [name, run] : runs) names.push_back(name);
  // EFE first when present.
  std::sort(names.begin(), names.end(),
            [](const std::string& a, const std::string& b) {
              return (a == "efe") != (b == "efe") ? a == "efe" : a < b;
            });
  os << std::left << std::setw(30) << "metric";
  for (const auto& n : names) os << std::setw(20) << n;
  os << '\n';
  os << std::setw(30) << "success rate";
  for (const auto& n : names) {
    std::ostringstream v;
    v << std::fixed << std::setprecision(1)
      << 100.0 * runs.at(n).summary.success_rate << "%";
    os << std::setw(20) << v.str();
  }
  os << '\n' << std::setw(30) << "avg reward";
  for (const auto& n : names) {
    const auto& s = runs.at(n).summary;
    os << std::setw(21) << format_pm(s.reward_mean, s.reward_std);
  }
  os << '\n';
  if (!names.empty() && runs.at(names[0]).summary.environment == "minigrid") {
    os << std::setw(30) << "avg time to key visibility";
    for (const auto& n : names) {
      const auto& s = runs.at(n).summary;
      os << std::setw(21)
         << (s.key_time_mean ? format_pm(*s.key_time_mean, *s.key_time_std)
                             : std::string("n/a"));
    }
    os << '\n' << std::setw(30) << "key never seen";
    for (const auto& n : names) {
      os << std::setw(20) << runs.at(n).summary.key_never_seen;
    }
    os << '\n';
  }
  return os.str();
}

void write_episodes_jsonl(const std::string& path,
                          const std::vector<EpisodeRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<EpisodeRecord> read_episodes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read " + path);
  std::vector<EpisodeRecord> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    out.push_back(EpisodeRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_bfe_csv(const std::string& path,
                   const std::vector<EpisodeRecord>& records) {
  auto out = open_out(path);
  out << "seed,step,iteration,bfe\n" << std::setprecision(17);
  for (const auto& r : records) {
    for (std::size_t s = 0; s < r.bfe_traces.size(); ++s) {
      for (std::size_t i = 0; i < r.bfe_traces[s].size(); ++i) {
        out << r.seed << ',' << s << ',' << i + 1 << ',' << r.bfe_traces[s][i]
            << '\n';
      }
    }
  }
}

std::string render_trajectory(const Environment& env,
                              const EpisodeRecord& record) {
  std::ostringstream os;
  os << "seed " << record.seed << " agent " << record.agent
     << (record.success ? " success" : " failure") << " reward "
     << record.total_reward << '\n';
  for (std::size_t t = 0; t < record.states.size(); ++t) {
    os << "t=" << t;
    if (t > 0) os << " action=" << record.actions[t - 1];
    os << '\n' << env.render_state(record.states[t]);
  }
  return os.str();
}

SuiteResult run_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  SuiteResult res;
  for (const auto& name : cfg.agents()) {
    res.runs.emplace(name, run_agent(cfg, name == "efe"));
  }
  res.summary = suite_summary(cfg, res.runs);
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto env = make_environment(cfg);
    for (const auto& [name, run] : res.runs) {
      const std::string base = cfg.out_dir + "/";
      write_episodes_jsonl(base + "episodes_" + name + ".jsonl", run.records);
      write_bfe_csv(base + "bfe_" + name + ".csv", run.records);
      auto out = open_out(base + "trajectories_" + name + ".txt");
      for (const auto& r : run.records) out << render_trajectory(*env, r) << '\n';
    }
    open_out(cfg.out_dir + "/summary.json") << res.summary.dump(2) << '\n';
  }
  return res;
}

TraceResult trace_inference(const ExperimentConfig& cfg,
                            const std::string& out_dir) {
  cfg.validate();
  auto env = make_environment(cfg);
  const Observation obs = env->reset(cfg.seed);
  ModelSpec model = env->agent_model();
  AgentConfig ac = cfg.agent_config;
  ac.horizon = env->horizon();
  ac.keep_prior_snapshots = true;
  model.horizon = ac.horizon;

  TraceResult r;
  r.frame = env->render();
  const Belief b = observe_belief(model, initial_belief(model), obs, ac.filter_sweeps);
  const PlanResult pr = plan_from_belief(model, b, ac.horizon, ac);
  r.trace = pr.trace;
  for (const auto& v : model.states) {
    r.beliefs.emplace(v.name, pr.marginals.edge_marginal(edge_name(v.name, 0))
                                  .renamed(edge_name(v.name, 0), v.name));
  }
  for (const auto& v : model.statics) {
    r.beliefs.emplace(v.name, pr.marginals.edge_marginal(v.name));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    auto csv = open_out(out_dir + "/bfe.csv");
    csv << "iteration,bfe\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.trace.bethe_free_energy.size(); ++i) {
      csv << i + 1 << ',' << r.trace.bethe_free_energy[i] << '\n';
    }
    nlohmann::json beliefs = nlohmann::json::object();
    for (const auto& [k, t] : r.beliefs) beliefs[k] = to_json(t);
    nlohmann::json q = nlohmann::json::array();
    for (const auto& d : pr.policy.control_marginals) q.push_back(to_json(d));
    open_out(out_dir + "/beliefs.json")
        << nlohmann::json{{"beliefs", beliefs}, {"policy", q}, {"frame", r.frame}}
               .dump(2)
        << '\n';
  }
  return r;
}

ChainPosterior chain_from_marginals(const ModelSpec& model, const Marginals& m) {
  if (model.states.size() != 1 || model.transitions.size() != 1) {
    throw ModelValidationError("chain posterior needs a single-state model");
  }
  const std::string& x = model.states[0].name;
  const std::string& u = model.control.name;
  const auto& tmpl = model.transitions[0];
  const auto table = tmpl.table.permuted({x, x + "@prev", u});
  const std::size_t nx = model.states[0].card, nu = model.control.card;

  ChainPosterior q;
  q.x0 = m.edge_marginal(edge_name(x, 0)).renamed(edge_name(x, 0), x);
  for (int t = 1; t <= model.horizon; ++t) {
    const std::string xt = edge_name(x, t), xp = edge_name(x, t - 1),
                      ut = edge_name(u, t);
    q.u.push_back(m.edge_marginal(ut).renamed(ut, u));
    const auto joint =
        m.node_joint(tmpl.name + "[" + std::to_string(t) + "]").permuted({xt, xp, ut});
    std::vector<double> cond(nx * nx * nu);
    for (std::size_t a = 0; a < nx; ++a) {
      for (std::size_t c = 0; c < nu; ++c) {
        double z = 0.0;
        for (std::size_t b = 0; b < nx; ++b) z += joint[(b * nx + a) * nu + c];
        for (std::size_t b = 0; b < nx; ++b) {
          const std::size_t i = (b * nx + a) * nu + c;
          cond[i] = z > 0.0 ? joint[i] / z : table[i];
        }
      }
    }
    q.trans.push_back(
        DiscreteTensor({{x, nx}, {x + "@prev", nx}, {u, nu}}, std::move(cond)));
    std::vector<DiscreteTensor> obs;
    for (const auto& l : model.likelihoods) obs.push_back(l.table);
    q.obs.push_back(std::move(obs));
  }
  return q;
}

DiscreteTensor bethe_joint(const FactorGraph& graph, const Marginals& m) {
  std::vector<DiscreteTensor> f;
  AxisSet keep;
  for (const auto& id : graph.node_ids()) f.push_back(m.node_joint(id));
  for (const auto& e : graph.edge_ids()) {
    keep.insert(e);
    const auto d = graph.neighbours(e).size();
    if (d <= 1) continue;
    const auto q = m.edge_marginal(e);
    std::vector<double> inv(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      inv[i] = q[i] > 0.0 ? std::pow(q[i], -static_cast<double>(d - 1)) : 0.0;
    }
    f.push_back(DiscreteTensor(q.axes(), std::move(inv)));
  }
  return contract(f, keep);
}

double chi_square_critical(int dof, double z) {
  const double k = dof;
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

namespace {

ChiSquareRow chi_square_row(std::string what, const std::vector<double>& expected,
                            const std::vector<long>& counts, long n) {
  ChiSquareRow row;
  row.what = std::move(what);
  int cats = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] <= 0.0) {
      if (counts[i] > 0) {
        row.statistic = std::numeric_limits<double>::infinity();
        row.pass = false;
      }
      continue;
    }
    ++cats;
    const double e = expected[i] * static_cast<double>(n);
    row.statistic += (counts[i] - e) * (counts[i] - e) / e;
  }
  row.dof = cats - 1;
  if (row.dof > 0) {
    row.critical = chi_square_critical(row.dof);
    row.pass = row.pass && row.statistic <= row.critical;
  }
  return row;
}

}  // namespace

std::vector<ChiSquareRow> grid_chi_square(const GridSpec& spec, int samples,
                                          std::uint64_t seed) {
  GridEnv env(spec);
  env.reset(seed);
  const auto n = static_cast<std::size_t>(spec.cells());
  std::vector<std::vector<long>> obs_counts(n, std::vector<long>(n, 0));
  std::vector<long> visits(n, 0);
  std::vector<ChiSquareRow> rows;
  for (int x = 0; x < spec.cells(); ++x) {
    if (x == spec.goal || spec.sink_cells.count(x)) continue;
    for (std::size_t u = 0; u < 4; ++u) {
      std::vector<long> counts(n, 0);
      for (int i = 0; i < samples; ++i) {
        env.set_cell(x);
        const auto r = env.step(u);
        ++counts[static_cast<std::size_t>(env.cell())];
        ++obs_counts[static_cast<std::size_t>(env.cell())][r.observation[0]];
        ++visits[static_cast<std::size_t>(env.cell())];
      }
      rows.push_back(chi_square_row(
          "B x=" + std::to_string(x) + " u=" + std::to_string(u),
          grid_transition(spec, x, u), counts, samples));
    }
  }
  for (std::size_t x = 0; x < n; ++x) {
    if (visits[x] == 0) continue;
    rows.push_back(chi_square_row("A x=" + std::to_string(x),
                                  grid_observation(spec, static_cast<int>(x)),
                                  obs_counts[x], visits[x]));
  }
  return rows;
}

CoherenceReport minigrid_coherence(const MiniGridSpec& spec) {
  MiniGridEnv env(spec);
  const auto& t = env.tensors();
  CoherenceReport rep;
  auto miss = [&](const std::string& what) {
    ++rep.mismatches;
    if (rep.examples.size() < 10) rep.examples.push_back(what);
  };
  const std::size_t L = spec.locations(), K = spec.key_candidates(), D = spec.doors();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t d = 0; d < D; ++d) {
            const MiniState st{static_cast<int>(l), static_cast<int>(o),
                               static_cast<int>(s), static_cast<int>(k),
                               static_cast<int>(d)};
            std::ostringstream tag;
            tag << "l=" << l << " o=" << o << " s=" << s << " k=" << k
                << " d=" << d;
            const Observation seen = env.set_state(st);
            for (std::size_t n = 0; n < seen.size(); ++n) {
              ++rep.checked;
              const std::size_t idx[] = {seen[n], l, o, k, d, s};
              if (t.A[n].table.at(idx) != 1.0) {
                miss("A" + std::to_string(n) + " " + tag.str());
              }
            }
            for (std::size_t u = 0; u < 5; ++u) {
              MiniState next;
              if (env.done()) {
                // Terminal states cannot be stepped; use the rule directly.
                next = minigrid_successor(spec, st, u);
              } else {
                env.set_state(st);
                env.step(u);
                next = env.state();
              }
              const auto nl = static_cast<std::size_t>(next.l);
              const auto no = static_cast<std::size_t>(next.o);
              const auto ns = static_cast<std::size_t>(next.s);
              const std::size_t il[] = {nl, l, o, s, k, d, u};
              const std::size_t io[] = {no, o, u};
              const std::size_t is[] = {ns, s, l, o, k, d, u};
              rep.checked += 3;
              const std::string ut = tag.str() + " u=" + std::to_string(u);
              if (t.Bl.table.at(il) != 1.0) miss("Bl " + ut);
              if (t.Bo.table.at(io) != 1.0) miss("Bo " + ut);
              if (t.Bs.table.at(is) != 1.0) miss("Bs " + ut);
              if (next.k != st.k || next.d != st.d) miss("statics moved " + ut);
            }
          }
        }
      }
    }
  }
  return rep;
}

}  // namespace efe
