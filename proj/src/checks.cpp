#include "efe/checks.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "efe/error.hpp"
#include "efe/factor_graph.hpp"
#include "efe/grid_env.hpp"
#include "efe/harness.hpp"
#include "efe/minigrid_env.hpp"
#include "efe/planner.hpp"

namespace efe {
namespace {

double uniform01(std::mt19937_64& rng) {
  // (0, 1]
  return 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

DiscreteTensor random_tensor(std::mt19937_64& rng, std::vector<Axis> axes,
                             double zero_prob) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.card;
  std::vector<double> v(n);
  std::bernoulli_distribution zero(zero_prob);
  for (double& e : v) e = zero(rng) ? 0.0 : uniform01(rng);
  return DiscreteTensor(std::move(axes), std::move(v));
}

DiscreteTensor random_conditional(std::mt19937_64& rng, std::vector<Axis> axes,
                                  const std::string& child, double zero_prob) {
  const auto t = random_tensor(rng, axes, zero_prob);
  // Refill empty columns with one random entry.
  std::vector<std::string> order{child};
  for (const auto& a : axes) {
    if (a.name != child) order.push_back(a.name);
  }
  const auto p = t.permuted(order);
  std::vector<double> v(p.data().begin(), p.data().end());
  const std::size_t nc = p.axes()[0].card, cols = v.size() / nc;
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < nc; ++i) s += v[i * cols + c];
    if (s == 0.0) v[pick(rng, 0, nc - 1) * cols + c] = uniform01(rng);
  }
  return normalize(DiscreteTensor(p.axes(), std::move(v)), {child});
}

DiscreteTensor random_distribution(std::mt19937_64& rng, Axis axis,
                                   double zero_prob) {
  const std::string name = axis.name;
  return random_conditional(rng, {std::move(axis)}, name, zero_prob);
}

std::vector<std::pair<std::string, DiscreteTensor>> random_tree_factors(
    std::mt19937_64& rng, int max_vars, std::size_t max_card) {
  const int n = static_cast<int>(pick(rng, 1, static_cast<std::size_t>(max_vars)));
  std::vector<Axis> vars;
  for (int i = 0; i < n; ++i) {
    vars.push_back({"v" + std::to_string(i), pick(rng, 2, max_card)});
  }
  std::vector<std::pair<std::string, DiscreteTensor>> f;
  auto add = [&](std::vector<Axis> axes) {
    // Occasional zeros, never an all-zero table.
    auto t = random_tensor(rng, std::move(axes), 0.15);
    if (t.sum() == 0.0) t = DiscreteTensor::filled(t.axes(), 1.0);
    f.emplace_back("f" + std::to_string(f.size()), t);
  };
  // Each new factor joins one existing variable to one or two new ones.
  int next = 1;
  while (next < n) {
    const auto old = pick(rng, 0, static_cast<std::size_t>(next - 1));
    const int fresh = std::min(n - next, static_cast<int>(pick(rng, 1, 2)));
    std::vector<Axis> axes{vars[old]};
    for (int j = 0; j < fresh; ++j) axes.push_back(vars[next++]);
    std::shuffle(axes.begin(), axes.end(), rng);
    add(axes);
  }
  for (const auto& v : vars) {
    if (std::bernoulli_distribution(0.5)(rng)) add({v});
  }
  if (f.empty()) add({vars[0]});
  return f;
}

ModelSpec random_chain_model(std::mt19937_64& rng, std::size_t controls,
                             int max_T) {
  ModelSpec m;
  const std::size_t nx = pick(rng, 2, 3);
  m.states = {{"x", nx}};
  m.control = {"u", controls};
  m.horizon = static_cast<int>(pick(rng, 1, static_cast<std::size_t>(max_T)));
  const std::size_t nobs = pick(rng, 1, 2);
  for (std::size_t n = 0; n < nobs; ++n) {
    const std::string y = "y" + std::to_string(n);
    const std::size_t ny = pick(rng, 2, 3);
    m.observations.push_back({y, ny});
    m.likelihoods.push_back(make_template(
        "A" + std::to_string(n), y,
        random_conditional(rng, {{y, ny}, {"x", nx}}, y)));
  }
  m.initial["x"] = random_distribution(rng, {"x", nx});
  m.control_prior = random_distribution(rng, {"u", controls});
  m.transitions.push_back(make_template(
      "B", "x",
      random_conditional(rng, {{"x", nx}, {"x@prev", nx}, {"u", controls}}, "x")));
  m.preferences["x"] = random_distribution(rng, {"x", nx});
  m.validate();
  return m;
}

ChainPosterior random_chain_posterior(std::mt19937_64& rng,
                                      const ModelSpec& model) {
  const std::size_t nx = model.states[0].card, nu = model.control.card;
  ChainPosterior q;
  q.x0 = random_distribution(rng, {"x", nx}, 0.2);
  for (int t = 0; t < model.horizon; ++t) {
    q.u.push_back(random_distribution(rng, {"u", nu}, 0.2));
    q.trans.push_back(random_conditional(
        rng, {{"x", nx}, {"x@prev", nx}, {"u", nu}}, "x", 0.2));
    std::vector<DiscreteTensor> obs;
    for (const auto& l : model.likelihoods) {
      const std::size_t ny = l.table.cardinality(l.child);
      obs.push_back(random_conditional(rng, {{l.child, ny}, {"x", nx}}, l.child, 0.2));
    }
    q.obs.push_back(std::move(obs));
  }
  return q;
}

CheckResult check_tree_inference(int models, std::uint64_t seed, double tol) {
  Timer timer;
  CheckResult r{"tree inference", true, 0.0, "", 0.0};
  std::mt19937_64 rng(seed);
  std::ostringstream fail;
  for (int i = 0; i < models; ++i) {
    const auto factors = random_tree_factors(rng);
    auto graph = build_graph(factors);
    if (!graph.is_tree()) {
      r.pass = false;
      fail << "model " << i << " is not a tree; ";
      continue;
    }
    std::vector<DiscreteTensor> tables;
    AxisSet all;
    for (const auto& [id, t] : factors) {
      tables.push_back(t);
      for (const auto& a : t.axes()) all.insert(a.name);
    }
    const auto joint = contract(tables, all);
    const double z = joint.sum();
    if (!(z > 0.0)) continue;  // no consistent assignment; skip
    const auto p = joint.scaled(1.0 / z);
    const auto m = run_inference(graph, 2);
    double worst = 0.0;
    for (const auto& e : graph.edge_ids()) {
      worst = std::max(worst, max_abs_difference(m.edge_marginal(e), marginal(p, {e})));
    }
    for (const auto& [id, t] : factors) {
      worst = std::max(worst,
                       max_abs_difference(m.node_joint(id), marginal(p, t.axis_names())));
    }
    const double bfe_err = std::abs(bethe_free_energy(m) + std::log(z));
    worst = std::max(worst, bfe_err);
    r.value = std::max(r.value, worst);
    if (!(worst <= tol)) {
      r.pass = false;
      fail << "model " << i << " err " << sci(worst) << "; ";
    }
  }
  r.seconds = timer.seconds();
  r.detail = models == 0 ? "no models" :
             std::to_string(models) + " models, max error " + sci(r.value);
  if (!r.pass) r.detail += " (" + fail.str() + ")";
  return r;
}

CheckResult check_decomposition(int models, std::uint64_t seed, double tol) {
  Timer timer;
  CheckResult r{"free-energy decomposition", true, 0.0, "", 0.0};
  std::mt19937_64 rng(seed);
  for (int i = 0; i < models; ++i) {
    const auto model = random_chain_model(rng);
    const auto q = random_chain_posterior(rng, model);
    const double shift = std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
    const auto a = verify_decomposition(model, q);
    const auto b = verify_decomposition(model, q, shift);
    const double worst =
        std::max({a.residual, b.residual, std::abs(a.lhs - b.lhs)});
    if (!std::isfinite(a.lhs)) {
      r.pass = false;
      r.detail = "model " + std::to_string(i) + " has infinite free energy";
      break;
    }
    r.value = std::max(r.value, worst);
    if (!(worst <= tol)) r.pass = false;
  }
  r.seconds = timer.seconds();
  if (r.detail.empty()) {
    r.detail = std::to_string(models) + " models, max residual " + sci(r.value);
  }
  return r;
}

CheckResult check_entropy_identities(int tensors, std::uint64_t seed, double tol) {
  Timer timer;
  CheckResult r{"entropy identities", true, 0.0, "", 0.0};
  std::mt19937_64 rng(seed);
  for (int i = 0; i < tensors; ++i) {
    const std::size_t na = pick(rng, 1, 3), nb = pick(rng, 1, 3);
    std::vector<Axis> axes;
    AxisSet a_names, b_names;
    for (std::size_t k = 0; k < na + nb; ++k) {
      const std::string name = "a" + std::to_string(k);
      axes.push_back({name, pick(rng, 1, 4)});
      (k < na ? a_names : b_names).insert(name);
    }
    std::shuffle(axes.begin(), axes.end(), rng);
    auto t = random_tensor(rng, axes, 0.2);
    if (t.sum() == 0.0) t = DiscreteTensor::filled(axes, 1.0);
    const auto p = normalize(t);
    // H[a, b] = H[a] + sum_a p(a) H[b | a]
    const auto pa = marginal(p, a_names);
    const auto hb_a = conditional_entropy(p, a_names);
    double cond = 0.0;
    const auto al = pa.permuted(std::vector<std::string>(a_names.begin(), a_names.end()));
    const auto hl = hb_a.permuted(std::vector<std::string>(a_names.begin(), a_names.end()));
    for (std::size_t k = 0; k < al.size(); ++k) cond += al[k] * hl[k];
    const double chain_err = std::abs(entropy(p) - entropy(pa) - cond);

    std::vector<double> s(axes[0].card);
    for (double& e : s) e = std::normal_distribution<double>(0.0, 5.0)(rng);
    const double c = std::normal_distribution<double>(0.0, 50.0)(rng);
    std::vector<double> sc = s;
    for (double& e : sc) e += c;
    const auto s1 = softmax(DiscreteTensor::signed_values({axes[0]}, s));
    const auto s2 = softmax(DiscreteTensor::signed_values({axes[0]}, sc));
    const double shift_err = max_abs_difference(s1, s2);
    r.value = std::max({r.value, chain_err, shift_err});
  }
  r.pass = r.value <= tol;
  r.seconds = timer.seconds();
  r.detail = std::to_string(tensors) + " tensors, max error " + sci(r.value);
  return r;
}

CheckResult check_ablation(std::uint64_t seed, double tol) {
  Timer timer;
  CheckResult r{"ablation identity", true, 0.0, "", 0.0};
  GridEnv env(GridSpec::default_instance());
  const auto obs = env.reset(seed);
  const ModelSpec model = env.agent_model();
  AgentConfig cfg;
  cfg.horizon = env.horizon();
  cfg.epistemic_enabled = false;
  const Belief b = observe_belief(model, initial_belief(model), obs, cfg.filter_sweeps);
  const auto planned = plan_from_belief(model, b, cfg.horizon, cfg);

  BuildOptions opts;
  opts.epistemic = false;
  auto plain = build_graph(with_initial(model, b, cfg.horizon), opts);
  const auto m = run_inference(plain.graph, cfg.vi_iterations * cfg.sweeps_per_iteration);
  std::size_t compared = 0;
  for (const auto& e : plain.graph.edge_ids()) {
    r.value = std::max(r.value, max_abs_difference(planned.marginals.edge_marginal(e),
                                                   m.edge_marginal(e)));
    ++compared;
  }
  r.pass = r.value <= tol;
  r.seconds = timer.seconds();
  r.detail = std::to_string(compared) + " edge marginals, max difference " +
             sci(r.value);
  return r;
}

CheckResult check_grid_convergence(int max_tau, double tol,
                                   const std::string& csv) {
  Timer timer;
  CheckResult r{"convergence trace", false, 0.0, "", 0.0};
  ExperimentConfig cfg;
  cfg.environment = "grid";
  cfg.agent_config.vi_iterations = max_tau;
  const auto tr = trace_inference(cfg);
  const auto& f = tr.trace.bethe_free_energy;
  int tau = -1;
  for (std::size_t i = 1; i < f.size(); ++i) {
    if (std::isfinite(f[i]) && std::abs(f[i] - f[i - 1]) < tol) {
      tau = static_cast<int>(i) + 1;
      break;
    }
  }
  if (!csv.empty()) {
    std::ofstream out(csv);
    out << "iteration,bfe\n" << std::setprecision(17);
    for (std::size_t i = 0; i < f.size(); ++i) out << i + 1 << ',' << f[i] << '\n';
  }
  r.pass = tau > 0;
  r.value = tau;
  r.seconds = timer.seconds();
  std::ostringstream os;
  os << std::setprecision(10);
  if (r.pass) {
    os << "settles at iteration " << tau << ", BFE " << f[tau - 1];
  } else {
    os << "no step below " << tol << " within " << max_tau << " iterations";
  }
  r.detail = os.str();
  return r;
}

CheckResult check_grid_chi_square(int samples, std::uint64_t seed) {
  Timer timer;
  CheckResult r{"gridworld chi-square", true, 0.0, "", 0.0};
  const auto rows = grid_chi_square(GridSpec::default_instance(), samples, seed);
  int failed = 0;
  std::string first;
  for (const auto& row : rows) {
    if (!row.pass) {
      if (failed++ == 0) {
        first = row.what + " stat " + std::to_string(row.statistic) +
                " > " + std::to_string(row.critical);
      }
    }
  }
  r.pass = failed == 0;
  r.value = failed;
  r.seconds = timer.seconds();
  r.detail = std::to_string(rows.size()) + " rows, " + std::to_string(failed) +
             " rejected" + (first.empty() ? "" : " (" + first + ")");
  return r;
}

CheckResult check_minigrid_coherence() {
  Timer timer;
  CheckResult r{"door-key coherence", true, 0.0, "", 0.0};
  const auto rep = minigrid_coherence(MiniGridSpec{});
  r.pass = rep.mismatches == 0 && rep.checked > 0;
  r.value = static_cast<double>(rep.mismatches);
  r.seconds = timer.seconds();
  r.detail = std::to_string(rep.checked) + " entries checked, " +
             std::to_string(rep.mismatches) + " mismatches";
  if (!rep.examples.empty()) r.detail += " (" + rep.examples.front() + ")";
  return r;
}

}  // namespace efe
