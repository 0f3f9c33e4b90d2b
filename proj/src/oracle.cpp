#include "efe/oracle.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "efe/epistemic.hpp"
#include "efe/error.hpp"

namespace efe {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxJointEntries = std::size_t{1} << 22;

// Dense views of the tiny model, indexed by plain integers.
struct Dense {
  std::size_t nx = 0, nu = 0;
  std::vector<std::size_t> ny;
  std::vector<double> p0, pu, pref;
  std::vector<double> B;               // [x][xp][u]
  std::vector<std::vector<double>> A;  // [n][y][x]

  double b(std::size_t x, std::size_t xp, std::size_t u) const {
    return B[(x * nx + xp) * nu + u];
  }
};

struct DenseChain {
  std::vector<double> x0;
  std::vector<std::vector<double>> u;                 // [t-1][u]
  std::vector<std::vector<double>> trans;             // [t-1][x][xp][u]
  std::vector<std::vector<std::vector<double>>> obs;  // [t-1][n][y][x]
};

std::vector<double> values(const DiscreteTensor& t,
                           const std::vector<std::string>& order) {
  const auto p = t.permuted(order);
  return {p.data().begin(), p.data().end()};
}

void check_model(const ModelSpec& m) {
  if (m.states.size() != 1 || !m.statics.empty() || m.transitions.size() != 1) {
    throw ModelValidationError(
        "oracle handles one state variable, no statics, one transition");
  }
  const std::string& x = m.states[0].name;
  const auto& tr = m.transitions[0].table;
  if (tr.axis_names() != AxisSet{x, x + "@prev", m.control.name}) {
    throw ModelValidationError("oracle transition must be over (x, x@prev, u)");
  }
  for (std::size_t n = 0; n < m.likelihoods.size(); ++n) {
    if (m.likelihoods[n].table.axis_names() !=
        AxisSet{m.likelihoods[n].child, x}) {
      throw ModelValidationError("oracle likelihoods must be over (y, x)");
    }
  }
  if (!m.preferences.count(x)) {
    throw ModelValidationError("oracle needs a terminal preference on x");
  }
}

Dense dense_model(const ModelSpec& m) {
  check_model(m);
  const std::string& x = m.states[0].name;
  const std::string xp = x + "@prev";
  const std::string& u = m.control.name;
  Dense d;
  d.nx = m.states[0].card;
  d.nu = m.control.card;
  d.p0 = values(m.initial.at(x), {x});
  d.pu = values(m.control_prior, {u});
  d.pref = values(m.preferences.at(x), {x});
  d.B = values(m.transitions[0].table, {x, xp, u});
  for (const auto& l : m.likelihoods) {
    d.ny.push_back(l.table.cardinality(l.child));
    d.A.push_back(values(l.table, {l.child, x}));
  }
  return d;
}

DenseChain dense_chain(const ModelSpec& m, const ChainPosterior& q) {
  const int T = q.horizon();
  if (T != m.horizon || static_cast<int>(q.trans.size()) != T ||
      static_cast<int>(q.obs.size()) != T) {
    throw ModelValidationError("chain posterior does not span the horizon");
  }
  const std::string& x = m.states[0].name;
  const std::string& u = m.control.name;
  DenseChain c;
  c.x0 = values(q.x0, {x});
  for (int t = 0; t < T; ++t) {
    c.u.push_back(values(q.u[t], {u}));
    c.trans.push_back(values(q.trans[t], {x, x + "@prev", u}));
    if (q.obs[t].size() != m.likelihoods.size()) {
      throw ModelValidationError("chain posterior needs one table per likelihood");
    }
    std::vector<std::vector<double>> per;
    for (std::size_t n = 0; n < m.likelihoods.size(); ++n) {
      per.push_back(values(q.obs[t][n], {m.likelihoods[n].child, x}));
    }
    c.obs.push_back(std::move(per));
  }
  return c;
}

double xlogx_ratio(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0) return kInf;
  return p * std::log(p / q);
}

// Calls fn(path, probability) for every state path x_0..x_T with positive
// probability under the chain and the action sequence u.
void for_each_path(const Dense& d, const DenseChain& c,
                   const std::vector<std::size_t>& u,
                   const std::function<void(const std::vector<std::size_t>&,
                                            double)>& fn) {
  const std::size_t T = u.size();
  std::vector<std::size_t> path(T + 1);
  std::function<void(std::size_t, double)> rec = [&](std::size_t t, double p) {
    if (t > T) {
      fn(path, p);
      return;
    }
    for (std::size_t x = 0; x < d.nx; ++x) {
      const double w = c.trans[t - 1][(x * d.nx + path[t - 1]) * d.nu + u[t - 1]];
      if (w <= 0.0) continue;
      path[t] = x;
      rec(t + 1, p * w);
    }
  };
  for (std::size_t x = 0; x < d.nx; ++x) {
    if (c.x0[x] <= 0.0) continue;
    path[0] = x;
    rec(1, c.x0[x]);
  }
}

double efe_dense(const Dense& d, const DenseChain& c,
                 const std::vector<std::size_t>& u) {
  double g = 0.0;
  for_each_path(d, c, u, [&](const std::vector<std::size_t>& x, double p) {
    double acc = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t) {
      acc += std::log(c.trans[t - 1][(x[t] * d.nx + x[t - 1]) * d.nu + u[t - 1]]);
      for (std::size_t n = 0; n < d.A.size(); ++n) {
        for (std::size_t y = 0; y < d.ny[n]; ++y) {
          const double qy = c.obs[t - 1][n][y * d.nx + x[t]];
          if (qy > 0.0) acc -= qy * std::log(qy);
        }
      }
    }
    const double pref = d.pref[x.back()];
    if (pref <= 0.0) {
      g = kInf;
      return;
    }
    g += p * (acc - std::log(pref));
  });
  return g;
}

// KL[q(x, y | u) || p(x, y | u)] by path enumeration.
double path_kl(const Dense& d, const DenseChain& c,
               const std::vector<std::size_t>& u) {
  double kl = 0.0;
  for_each_path(d, c, u, [&](const std::vector<std::size_t>& x, double p) {
    if (d.p0[x[0]] <= 0.0) {
      kl = kInf;
      return;
    }
    double acc = std::log(c.x0[x[0]] / d.p0[x[0]]);
    for (std::size_t t = 1; t < x.size(); ++t) {
      const double qt = c.trans[t - 1][(x[t] * d.nx + x[t - 1]) * d.nu + u[t - 1]];
      const double pt = d.b(x[t], x[t - 1], u[t - 1]);
      if (pt <= 0.0) {
        kl = kInf;
        return;
      }
      acc += std::log(qt / pt);
      for (std::size_t n = 0; n < d.A.size(); ++n) {
        for (std::size_t y = 0; y < d.ny[n]; ++y) {
          acc += xlogx_ratio(c.obs[t - 1][n][y * d.nx + x[t]],
                             d.A[n][y * d.nx + x[t]]);
        }
      }
    }
    kl += p * acc;
  });
  return kl;
}

std::size_t sequence_count(std::size_t actions, int T) {
  std::size_t n = 1;
  for (int t = 0; t < T; ++t) {
    n *= actions;
    if (n > kMaxSequences) {
      throw GuardExceededError("more than " + std::to_string(kMaxSequences) +
                               " action sequences");
    }
  }
  return n;
}

double log_sum_exp_values(const std::vector<double>& s) {
  double mx = -kInf;
  for (double v : s) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  return mx + std::log(z);
}

// Forward marginals q(x_t), t = 0..T.
std::vector<std::vector<double>> state_marginals(const Dense& d,
                                                 const DenseChain& c) {
  std::vector<std::vector<double>> out{c.x0};
  for (std::size_t t = 0; t < c.u.size(); ++t) {
    std::vector<double> next(d.nx, 0.0);
    for (std::size_t x = 0; x < d.nx; ++x) {
      for (std::size_t xp = 0; xp < d.nx; ++xp) {
        for (std::size_t u = 0; u < d.nu; ++u) {
          next[x] += c.trans[t][(x * d.nx + xp) * d.nu + u] * out.back()[xp] *
                     c.u[t][u];
        }
      }
    }
    out.push_back(std::move(next));
  }
  return out;
}

// Raw control scores H[x_t | x_{t-1}, u] (0 where q(u) = 0) and state scores
// -sum_n H[y_n | x] for one slice.
std::vector<double> control_scores(const Dense& d, const DenseChain& c,
                                   const std::vector<double>& qprev,
                                   std::size_t t) {
  std::vector<double> s(d.nu, 0.0);
  for (std::size_t u = 0; u < d.nu; ++u) {
    if (c.u[t][u] <= 0.0) continue;
    for (std::size_t xp = 0; xp < d.nx; ++xp) {
      double h = 0.0;
      for (std::size_t x = 0; x < d.nx; ++x) {
        const double p = c.trans[t][(x * d.nx + xp) * d.nu + u];
        if (p > 0.0) h -= p * std::log(p);
      }
      s[u] += qprev[xp] * h;
    }
  }
  return s;
}

std::vector<double> state_scores(const Dense& d, const DenseChain& c,
                                 std::size_t t) {
  std::vector<double> s(d.nx, 0.0);
  for (std::size_t x = 0; x < d.nx; ++x) {
    for (std::size_t n = 0; n < d.A.size(); ++n) {
      for (std::size_t y = 0; y < d.ny[n]; ++y) {
        const double p = c.obs[t][n][y * d.nx + x];
        if (p > 0.0) s[x] += p * std::log(p);
      }
    }
  }
  return s;
}

}  // namespace

ChainPosterior generative_chain(const ModelSpec& model) {
  check_model(model);
  ChainPosterior q;
  q.x0 = model.initial.at(model.states[0].name);
  for (int t = 0; t < model.horizon; ++t) {
    q.u.push_back(model.control_prior);
    q.trans.push_back(model.transitions[0].table);
    std::vector<DiscreteTensor> obs;
    for (const auto& l : model.likelihoods) obs.push_back(l.table);
    q.obs.push_back(std::move(obs));
  }
  return q;
}

std::vector<std::vector<std::size_t>> all_sequences(std::size_t actions, int T) {
  const std::size_t n = sequence_count(actions, T);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> s(T);
    std::size_t r = i;
    for (int t = T - 1; t >= 0; --t) {
      s[t] = r % actions;
      r /= actions;
    }
    out.push_back(std::move(s));
  }
  return out;
}

double efe_under(const ModelSpec& model, const ChainPosterior& q,
                 const std::vector<std::size_t>& u) {
  const Dense d = dense_model(model);
  const DenseChain c = dense_chain(model, q);
  if (static_cast<int>(u.size()) != model.horizon) {
    throw UsageError("action sequence length differs from the horizon");
  }
  for (auto a : u) {
    if (a >= d.nu) throw UsageError("action out of range");
  }
  return efe_dense(d, c, u);
}

double exact_efe(const ModelSpec& model, const std::vector<std::size_t>& u) {
  return efe_under(model, generative_chain(model), u);
}

ExactPolicyEvaluation evaluate_all_policies(const ModelSpec& model) {
  const Dense d = dense_model(model);
  const DenseChain c = dense_chain(model, generative_chain(model));
  ExactPolicyEvaluation out;
  out.sequences = all_sequences(d.nu, model.horizon);
  for (const auto& s : out.sequences) out.G.push_back(efe_dense(d, c, s));
  return out;
}

DiscreteTensor chain_joint(const ModelSpec& model, const ChainPosterior& q) {
  check_model(model);
  const std::string& x = model.states[0].name;
  const std::string& u = model.control.name;
  const int T = q.horizon();
  std::size_t entries = model.states[0].card;
  std::vector<DiscreteTensor> f{q.x0.renamed(x, edge_name(x, 0))};
  for (int t = 1; t <= T; ++t) {
    entries *= model.states[0].card * model.control.card;
    f.push_back(q.u[t - 1].renamed(u, edge_name(u, t)));
    f.push_back(q.trans[t - 1]
                    .renamed(x, edge_name(x, t))
                    .renamed(x + "@prev", edge_name(x, t - 1))
                    .renamed(u, edge_name(u, t)));
    for (std::size_t n = 0; n < model.likelihoods.size(); ++n) {
      const std::string& y = model.likelihoods[n].child;
      entries *= model.likelihoods[n].table.cardinality(y);
      f.push_back(q.obs[t - 1][n].renamed(y, edge_name(y, t)).renamed(
          x, edge_name(x, t)));
    }
    if (entries > kMaxJointEntries) {
      throw GuardExceededError("full joint too large to enumerate");
    }
  }
  AxisSet keep;
  for (const auto& t : f) {
    for (const auto& a : t.axes()) keep.insert(a.name);
  }
  return contract(f, keep);
}

double exact_vfe(const DiscreteTensor& joint,
                 const std::vector<DiscreteTensor>& factors) {
  const auto q = joint.canonical();
  const auto f = contract(factors, q.axis_names());
  if (f.axis_names() != q.axis_names()) {
    throw StructuralError("factors do not span the joint's axes");
  }
  double v = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) v += xlogx_ratio(q[i], f[i]);
  return v;
}

EpistemicTables chain_epistemic_priors(const ModelSpec& model,
                                       const ChainPosterior& q,
                                       double score_shift) {
  const Dense d = dense_model(model);
  const std::string& x = model.states[0].name;
  const std::string& u = model.control.name;
  const auto qx = state_marginals(d, dense_chain(model, q));
  EpistemicTables out;
  for (int t = 1; t <= q.horizon(); ++t) {
    const std::string xt = edge_name(x, t), xprev = edge_name(x, t - 1),
                      ut = edge_name(u, t);
    const auto local = contract(
        {q.trans[t - 1].renamed(x, xt).renamed(x + "@prev", xprev).renamed(u, ut),
         DiscreteTensor({{xprev, d.nx}}, qx[t - 1]),
         q.u[t - 1].renamed(u, ut)},
        {xt, xprev, ut});
    if (score_shift == 0.0) {
      out.control.push_back(control_epistemic_prior(local, ut, {xprev}));
    } else {
      const auto s = entropy_difference_score(local, {xprev}, ut);
      std::vector<double> v(s.data().begin(), s.data().end());
      for (double& e : v) e += score_shift;
      out.control.push_back(softmax(DiscreteTensor::signed_values(s.axes(), v)));
    }
    DiscreteTensor state = DiscreteTensor::filled({{xt, d.nx}}, 1.0);
    for (std::size_t n = 0; n < model.likelihoods.size(); ++n) {
      const std::string& y = model.likelihoods[n].child;
      state = multiply(state, state_epistemic_prior(
                                  q.obs[t - 1][n].renamed(x, xt), y, xt));
    }
    if (score_shift != 0.0) state = state.scaled(std::exp(score_shift));
    out.state.push_back(normalize(state));
  }
  return out;
}

std::vector<DiscreteTensor> augmented_factors(const ModelSpec& model,
                                              const EpistemicTables& priors) {
  check_model(model);
  const std::string& x = model.states[0].name;
  const std::string& u = model.control.name;
  const int T = model.horizon;
  std::vector<DiscreteTensor> f{
      model.initial.at(x).renamed(x, edge_name(x, 0)),
      model.preferences.at(x).renamed(x, edge_name(x, T))};
  for (int t = 1; t <= T; ++t) {
    f.push_back(model.control_prior.renamed(u, edge_name(u, t)));
    f.push_back(model.transitions[0]
                    .table.renamed(x, edge_name(x, t))
                    .renamed(x + "@prev", edge_name(x, t - 1))
                    .renamed(u, edge_name(u, t)));
    for (const auto& l : model.likelihoods) {
      f.push_back(l.table.renamed(l.child, edge_name(l.child, t))
                      .renamed(x, edge_name(x, t)));
    }
    if (!priors.control.empty()) f.push_back(priors.control.at(t - 1));
    if (!priors.state.empty()) f.push_back(priors.state.at(t - 1));
  }
  return f;
}

DecompositionReport verify_decomposition(const ModelSpec& model,
                                         const ChainPosterior& q,
                                         double score_shift) {
  const Dense d = dense_model(model);
  const DenseChain c = dense_chain(model, q);
  const int T = q.horizon();
  const auto sequences = all_sequences(d.nu, T);

  DecompositionReport r;
  const auto priors = chain_epistemic_priors(model, q, score_shift);
  r.lhs = exact_vfe(chain_joint(model, q), augmented_factors(model, priors));

  double kl_u = 0.0;
  for (int t = 0; t < T; ++t) {
    for (std::size_t a = 0; a < d.nu; ++a) kl_u += xlogx_ratio(c.u[t][a], d.pu[a]);
  }
  double expected_kl = 0.0;
  for (const auto& s : sequences) {
    double w = 1.0;
    for (int t = 0; t < T; ++t) w *= c.u[t][s[t]];
    if (w <= 0.0) continue;
    r.expected_efe += w * efe_dense(d, c, s);
    expected_kl += w * path_kl(d, c, s);
  }
  r.complexity = kl_u + expected_kl;
  r.rhs = r.expected_efe + r.complexity;

  const auto qx = state_marginals(d, c);
  for (int t = 0; t < T; ++t) {
    r.constant += log_sum_exp_values(control_scores(d, c, qx[t], t));
    r.constant += log_sum_exp_values(state_scores(d, c, t));
  }
  r.residual = std::abs(r.lhs - r.rhs - r.constant);
  return r;
}

}  // namespace efe
