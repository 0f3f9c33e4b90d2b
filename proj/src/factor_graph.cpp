#include "efe/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "efe/error.hpp"

namespace efe {
namespace {

constexpr std::size_t kMaxArity = 32;

// Multiplies message `in` into `acc`, rescaling so that products over
// hundreds of neighbours (static edges) do not underflow.
void multiply_in(std::vector<double>& acc, const std::vector<double>& in) {
  double mx = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i] *= in[i];
    mx = std::max(mx, acc[i]);
  }
  if (mx > 0.0 && mx < 1e-100) {
    for (double& x : acc) x /= mx;
  }
}

void normalize_in_place(std::vector<double>& v, const std::string& edge,
                        const char* what) {
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw InconsistentEvidenceError(
        edge, std::string(what) + " on edge '" + edge + "' has no support");
  }
  for (double& x : v) x /= s;
}

double entropy_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

}  // namespace

std::shared_ptr<const NodeKernel> make_node_kernel(const DiscreteTensor& table,
                                                   const std::string& child) {
  auto k = std::make_shared<NodeKernel>();
  const auto& axes = table.axes();
  const std::size_t n = axes.size();
  if (n > kMaxArity) throw StructuralError("node arity exceeds limit");
  int child_slot = -1;
  for (std::size_t j = 0; j < n; ++j) {
    k->cards.push_back(axes[j].card);
    if (!child.empty() && axes[j].name == child) child_slot = static_cast<int>(j);
  }
  if (!child.empty() && child_slot < 0) {
    throw ModelValidationError("table lacks child axis '" + child + "'");
  }
  // Row-major index over the parent axes, for the normalization check.
  std::vector<std::size_t> pstride(n, 0);
  std::size_t parent_configs = 1;
  for (std::size_t j = n; j-- > 0;) {
    if (static_cast<int>(j) == child_slot) continue;
    pstride[j] = parent_configs;
    parent_configs *= axes[j].card;
  }
  std::vector<double> sums(child_slot >= 0 ? parent_configs : 0, 0.0);
  std::vector<std::uint32_t> idx(n, 0);
  std::size_t p = 0;
  for (std::size_t f = 0; f < table.size(); ++f) {
    const double v = table[f];
    if (v != 0.0) {
      k->coords.insert(k->coords.end(), idx.begin(), idx.end());
      k->values.push_back(v);
      if (child_slot >= 0) sums[p] += v;
    }
    for (std::size_t a = n; a-- > 0;) {
      if (++idx[a] < axes[a].card) {
        p += pstride[a];
        break;
      }
      p -= pstride[a] * (axes[a].card - 1);
      idx[a] = 0;
    }
  }
  k->child_slot = child_slot;
  if (child_slot >= 0) {
    for (double s : sums) {
      if (std::abs(s - 1.0) > 1e-9) {
        throw ModelValidationError("cpt table is not normalized over '" +
                                   child + "'");
      }
    }
    // Deterministic when each parent configuration owns exactly one entry of 1.
    bool det = k->entries() == parent_configs;
    for (double v : k->values) det = det && std::abs(v - 1.0) < 1e-12;
    k->deterministic = det;
  }
  return k;
}

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kCpt:
      return "cpt";
    case NodeKind::kPrior:
      return "prior";
    case NodeKind::kEpistemicPrior:
      return "epistemic_prior";
    case NodeKind::kPreferencePrior:
      return "preference_prior";
  }
  return "?";
}

DiscreteTensor SparseJoint::to_dense() const {
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.card;
  std::vector<double> d(total, 0.0);
  const std::size_t n = axes.size();
  for (std::size_t e = 0; e < prob.size(); ++e) {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < n; ++j) {
      flat = flat * axes[j].card + kernel->coords[e * n + j];
    }
    d[flat] = prob[e];
  }
  return DiscreteTensor(axes, std::move(d)).canonical();
}

// ---------------------------------------------------------------------------
// State helpers.

std::vector<double> FactorGraph::State::to_factor(std::size_t edge,
                                                  std::size_t node) const {
  const auto& e = structure->edges[edge];
  std::vector<double> m(e.cardinality, 1.0);
  if (observed[edge]) {
    std::fill(m.begin(), m.end(), 0.0);
    m[*observed[edge]] = 1.0;
    return m;
  }
  for (const auto& [n, slot] : structure->edge_nodes[edge]) {
    if (n == node) continue;
    multiply_in(m, messages[n][slot]);
  }
  normalize_in_place(m, e.id, "variable-to-factor message");
  return m;
}

std::vector<double> FactorGraph::State::outgoing(std::size_t node,
                                                 std::size_t slot) const {
  const auto& info = structure->nodes[node];
  const auto& k = *kernels[node];
  const std::size_t n = k.arity();
  std::vector<std::vector<double>> in(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != slot) in[j] = to_factor(info.edges[j], node);
  }
  std::vector<double> out(k.cards[slot], 0.0);
  for (std::size_t e = 0; e < k.entries(); ++e) {
    const auto* c = &k.coords[e * n];
    double w = k.values[e];
    for (std::size_t j = 0; j < n && w != 0.0; ++j) {
      if (j != slot) w *= in[j][c[j]];
    }
    out[c[slot]] += w;
  }
  normalize_in_place(out, structure->edges[info.edges[slot]].id,
                     "factor-to-variable message");
  return out;
}

std::vector<double> FactorGraph::State::belief(std::size_t edge) const {
  const auto& e = structure->edges[edge];
  std::vector<double> b(e.cardinality, 1.0);
  for (const auto& [n, slot] : structure->edge_nodes[edge]) {
    const bool lazy =
        passive[n] && static_cast<int>(slot) == structure->nodes[n].child_slot;
    multiply_in(b, lazy ? outgoing(n, slot) : messages[n][slot]);
  }
  if (observed[edge]) {
    const std::size_t v = *observed[edge];
    const double keep = b[v];
    std::fill(b.begin(), b.end(), 0.0);
    b[v] = keep;
  }
  normalize_in_place(b, e.id, "belief");
  return b;
}

SparseJoint FactorGraph::State::sparse_joint(std::size_t node) const {
  const auto& info = structure->nodes[node];
  const auto& kp = kernels[node];
  const std::size_t n = kp->arity();
  std::vector<std::vector<double>> in(n);
  for (std::size_t j = 0; j < n; ++j) in[j] = to_factor(info.edges[j], node);
  SparseJoint sj;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& e = structure->edges[info.edges[j]];
    sj.axes.push_back({e.id, e.cardinality});
  }
  sj.kernel = kp;
  sj.prob.resize(kp->entries());
  double z = 0.0;
  for (std::size_t e = 0; e < kp->entries(); ++e) {
    const auto* c = &kp->coords[e * n];
    double w = kp->values[e];
    for (std::size_t j = 0; j < n && w != 0.0; ++j) w *= in[j][c[j]];
    sj.prob[e] = w;
    z += w;
  }
  if (!(z > 0.0)) {
    throw InconsistentEvidenceError(structure->edges[info.edges[0]].id,
                                    "node joint of '" + info.id +
                                        "' has no support");
  }
  for (double& p : sj.prob) p /= z;
  return sj;
}

// ---------------------------------------------------------------------------
// FactorGraph.

FactorGraph::FactorGraph() {
  state_.structure = std::make_shared<Structure>();
}

FactorGraph::Structure& FactorGraph::mutable_structure() {
  if (state_.structure.use_count() > 1) {
    state_.structure = std::make_shared<Structure>(*state_.structure);
  }
  return const_cast<Structure&>(*state_.structure);
}

std::size_t FactorGraph::edge_idx(const std::string& id) const {
  auto it = state_.structure->edge_index.find(id);
  if (it == state_.structure->edge_index.end()) {
    throw ModelValidationError("unknown edge '" + id + "'");
  }
  return it->second;
}

std::size_t FactorGraph::node_idx(const std::string& id) const {
  auto it = state_.structure->node_index.find(id);
  if (it == state_.structure->node_index.end()) {
    throw ModelValidationError("unknown node '" + id + "'");
  }
  return it->second;
}

void FactorGraph::add_edge(const std::string& id, std::size_t cardinality) {
  if (cardinality == 0) {
    throw StructuralError("edge '" + id + "' needs positive cardinality");
  }
  if (has_edge(id)) throw StructuralError("duplicate edge '" + id + "'");
  auto& s = mutable_structure();
  s.edge_index[id] = s.edges.size();
  s.edges.push_back({id, cardinality, 0, std::nullopt});
  s.edge_nodes.emplace_back();
  state_.observed.emplace_back();
}

void FactorGraph::add_node(const std::string& id, NodeKind kind,
                           DiscreteTensor table, const std::string& child,
                           std::shared_ptr<const NodeKernel> kernel) {
  if (has_node(id)) throw StructuralError("duplicate node '" + id + "'");
  NodeInfo info{id, kind, {}, -1};
  for (std::size_t j = 0; j < table.rank(); ++j) {
    const auto& ax = table.axes()[j];
    auto it = state_.structure->edge_index.find(ax.name);
    if (it == state_.structure->edge_index.end()) {
      throw ModelValidationError("node '" + id + "' references unknown edge '" +
                                 ax.name + "'");
    }
    if (state_.structure->edges[it->second].cardinality != ax.card) {
      throw StructuralError("node '" + id + "' axis '" + ax.name +
                            "' cardinality disagrees with its edge");
    }
    info.edges.push_back(it->second);
    if (ax.name == child) info.child_slot = static_cast<int>(j);
  }
  if (table.rank() == 0) {
    throw StructuralError("node '" + id + "' attaches to no edge");
  }
  if (kind == NodeKind::kCpt) {
    if (info.child_slot < 0) {
      throw ModelValidationError("cpt node '" + id + "' lacks child axis '" +
                                 child + "'");
    }
  }
  if (!kernel) {
    kernel = make_node_kernel(table, kind == NodeKind::kCpt ? child : "");
  } else if (kernel->cards.size() != table.rank() ||
             (kind == NodeKind::kCpt && kernel->child_slot != info.child_slot)) {
    throw StructuralError("kernel supplied for '" + id +
                          "' does not match its table");
  }

  auto& s = mutable_structure();
  const std::size_t n = s.nodes.size();
  s.node_index[id] = n;
  for (std::size_t j = 0; j < info.edges.size(); ++j) {
    s.edges[info.edges[j]].degree++;
    s.edge_nodes[info.edges[j]].push_back({n, j});
  }
  std::vector<std::vector<double>> msgs;
  for (std::size_t e : info.edges) {
    const std::size_t c = s.edges[e].cardinality;
    msgs.emplace_back(c, 1.0 / static_cast<double>(c));
  }
  s.nodes.push_back(std::move(info));
  state_.tables.push_back(std::move(table));
  state_.kernels.push_back(std::move(kernel));
  state_.messages.push_back(std::move(msgs));
  state_.passive.push_back(false);
  if (!custom_schedule_) schedule_.clear();
}

void FactorGraph::set_table(const std::string& node, DiscreteTensor table) {
  const std::size_t n = node_idx(node);
  const auto& old = state_.tables[n];
  if (old.axes() != table.axes()) {
    throw StructuralError("set_table: axes of '" + node + "' differ");
  }
  const auto& info = state_.structure->nodes[n];
  if (info.kind == NodeKind::kCpt) {
    throw StructuralError("set_table: cpt tables are fixed at construction");
  }
  state_.kernels[n] = make_node_kernel(table, "");
  state_.tables[n] = std::move(table);
}

void FactorGraph::observe(const std::string& edge, std::size_t value) {
  const std::size_t e = edge_idx(edge);
  if (value >= state_.structure->edges[e].cardinality) {
    throw StructuralError("observed value out of range on '" + edge + "'");
  }
  state_.observed[e] = value;
}

void FactorGraph::clear_observation(const std::string& edge) {
  state_.observed[edge_idx(edge)].reset();
}

void FactorGraph::set_schedule(std::vector<Directive> schedule) {
  for (const auto& [node, target] : schedule) {
    auto nit = state_.structure->node_index.find(node);
    auto eit = state_.structure->edge_index.find(target);
    if (nit == state_.structure->node_index.end() ||
        eit == state_.structure->edge_index.end()) {
      throw ScheduleError("schedule references unknown node or edge: (" +
                          node + ", " + target + ")");
    }
    const auto& edges = state_.structure->nodes[nit->second].edges;
    if (std::find(edges.begin(), edges.end(), eit->second) == edges.end()) {
      throw ScheduleError("node '" + node + "' is not attached to '" + target +
                          "'");
    }
  }
  schedule_ = std::move(schedule);
  custom_schedule_ = true;
}

const std::vector<Directive>& FactorGraph::schedule() const {
  if (schedule_.empty()) {
    const_cast<FactorGraph*>(this)->schedule_ = default_schedule();
  }
  return schedule_;
}

bool FactorGraph::has_edge(const std::string& id) const {
  return state_.structure->edge_index.count(id) > 0;
}

bool FactorGraph::has_node(const std::string& id) const {
  return state_.structure->node_index.count(id) > 0;
}

VariableEdge FactorGraph::edge(const std::string& id) const {
  const std::size_t e = edge_idx(id);
  VariableEdge v = state_.structure->edges[e];
  v.observed_value = state_.observed[e];
  return v;
}

FactorNode FactorGraph::node(const std::string& id) const {
  const std::size_t n = node_idx(id);
  const auto& info = state_.structure->nodes[n];
  FactorNode f;
  f.id = info.id;
  f.kind = info.kind;
  f.table = state_.tables[n];
  for (std::size_t e : info.edges) {
    f.attached_edges.push_back(state_.structure->edges[e].id);
  }
  if (info.child_slot >= 0) f.child = f.attached_edges[info.child_slot];
  return f;
}

const DiscreteTensor& FactorGraph::table(const std::string& node) const {
  return state_.tables[node_idx(node)];
}

const std::shared_ptr<const NodeKernel>& FactorGraph::kernel(
    const std::string& node) const {
  return state_.kernels[node_idx(node)];
}

std::vector<std::string> FactorGraph::edge_ids() const {
  std::vector<std::string> out;
  for (const auto& e : state_.structure->edges) out.push_back(e.id);
  return out;
}

std::vector<std::string> FactorGraph::node_ids() const {
  std::vector<std::string> out;
  for (const auto& n : state_.structure->nodes) out.push_back(n.id);
  return out;
}

std::vector<std::string> FactorGraph::neighbours(const std::string& edge) const {
  std::vector<std::string> out;
  for (const auto& [n, slot] : state_.structure->edge_nodes[edge_idx(edge)]) {
    out.push_back(state_.structure->nodes[n].id);
  }
  return out;
}

bool FactorGraph::is_tree() const {
  const auto& s = *state_.structure;
  const std::size_t ne = s.edges.size();
  std::vector<std::size_t> parent(ne + s.nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t n = 0; n < s.nodes.size(); ++n) {
    for (std::size_t e : s.nodes[n].edges) {
      const std::size_t a = find(ne + n), b = find(e);
      if (a == b) return false;
      parent[a] = b;
    }
  }
  return true;
}

std::vector<Directive> FactorGraph::default_schedule() const {
  const auto& s = *state_.structure;
  std::vector<std::size_t> order;
  if (is_tree()) {
    // Post-order over each component: leaves first, so one forward pass
    // collects and the reversed pass distributes.
    std::vector<bool> seen_node(s.nodes.size(), false);
    std::vector<bool> seen_edge(s.edges.size(), false);
    std::function<void(std::size_t)> dfs = [&](std::size_t n) {
      seen_node[n] = true;
      for (std::size_t e : s.nodes[n].edges) {
        if (seen_edge[e]) continue;
        seen_edge[e] = true;
        for (const auto& [m, slot] : s.edge_nodes[e]) {
          if (!seen_node[m]) dfs(m);
        }
      }
      order.push_back(n);
    };
    for (std::size_t n = 0; n < s.nodes.size(); ++n) {
      if (!seen_node[n]) dfs(n);
    }
  } else {
    order.resize(s.nodes.size());
    std::iota(order.begin(), order.end(), 0);
  }
  std::vector<Directive> out;
  for (std::size_t n : order) {
    for (std::size_t e : s.nodes[n].edges) {
      out.emplace_back(s.nodes[n].id, s.edges[e].id);
    }
  }
  return out;
}

void FactorGraph::update_passive() {
  const auto& s = *state_.structure;
  for (std::size_t n = 0; n < s.nodes.size(); ++n) {
    const auto& info = s.nodes[n];
    bool passive = false;
    if (info.kind == NodeKind::kCpt && info.child_slot >= 0) {
      const std::size_t c = info.edges[info.child_slot];
      passive = !state_.observed[c] && s.edges[c].degree == 1;
    }
    if (passive && !state_.passive[n]) {
      // An unobserved leaf child sends a constant message to every parent.
      for (std::size_t j = 0; j < info.edges.size(); ++j) {
        auto& m = state_.messages[n][j];
        std::fill(m.begin(), m.end(), 1.0 / static_cast<double>(m.size()));
      }
    }
    state_.passive[n] = passive;
  }
}

void FactorGraph::visit(std::size_t node, const std::vector<std::size_t>& slots) {
  if (state_.passive[node]) return;
  const auto& info = state_.structure->nodes[node];
  const auto& k = *state_.kernels[node];
  const std::size_t n = k.arity();
  std::vector<std::vector<double>> in(n);
  for (std::size_t j = 0; j < n; ++j) in[j] = state_.to_factor(info.edges[j], node);
  std::vector<std::vector<double>> out(n);
  std::vector<bool> want(n, false);
  for (std::size_t s : slots) {
    want[s] = true;
    out[s].assign(k.cards[s], 0.0);
  }
  double prefix[kMaxArity + 1];
  double suffix[kMaxArity + 1];
  for (std::size_t e = 0; e < k.entries(); ++e) {
    const auto* c = &k.coords[e * n];
    prefix[0] = k.values[e];
    for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * in[j][c[j]];
    suffix[n] = 1.0;
    for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] * in[j][c[j]];
    for (std::size_t j = 0; j < n; ++j) {
      if (want[j]) out[j][c[j]] += prefix[j] * suffix[j + 1];
    }
  }
  for (std::size_t s : slots) {
    normalize_in_place(out[s], state_.structure->edges[info.edges[s]].id,
                       "factor-to-variable message");
    auto& cur = state_.messages[node][s];
    for (std::size_t i = 0; i < cur.size(); ++i) {
      last_delta_ = std::max(last_delta_, std::abs(cur[i] - out[s][i]));
    }
    cur = std::move(out[s]);
  }
}

void FactorGraph::reset_messages() {
  for (auto& node_msgs : state_.messages) {
    for (auto& m : node_msgs) {
      std::fill(m.begin(), m.end(), 1.0 / static_cast<double>(m.size()));
    }
  }
  std::fill(state_.passive.begin(), state_.passive.end(), false);
}

nlohmann::json FactorGraph::to_json() const {
  const auto& s = *state_.structure;
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t e = 0; e < s.edges.size(); ++e) {
    nlohmann::json j = {{"id", s.edges[e].id},
                        {"cardinality", s.edges[e].cardinality},
                        {"degree", s.edges[e].degree}};
    j["observed"] = state_.observed[e] ? nlohmann::json(*state_.observed[e])
                                       : nlohmann::json(nullptr);
    nlohmann::json adj = nlohmann::json::array();
    for (const auto& [n, slot] : s.edge_nodes[e]) adj.push_back(s.nodes[n].id);
    j["nodes"] = adj;
    edges.push_back(j);
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t n = 0; n < s.nodes.size(); ++n) {
    nlohmann::json adj = nlohmann::json::array();
    for (std::size_t e : s.nodes[n].edges) adj.push_back(s.edges[e].id);
    nodes.push_back({{"id", s.nodes[n].id},
                     {"kind", efe::to_string(s.nodes[n].kind)},
                     {"edges", adj}});
  }
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& [node, target] : schedule()) sched.push_back({node, target});
  return {{"edges", edges}, {"nodes", nodes}, {"schedule", sched}};
}

FactorGraph build_graph(
    const std::vector<std::pair<std::string, DiscreteTensor>> &factors) {
  FactorGraph g;
  for (const auto& [id, table] : factors) {
    for (const auto& a : table.axes()) {
      if (!g.has_edge(a.name)) g.add_edge(a.name, a.card);
    }
    g.add_node(id, NodeKind::kPrior, table);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inference.

Marginals run_inference(FactorGraph& graph, int sweeps) {
  if (sweeps < 1) throw UsageError("run_inference needs at least one sweep");
  graph.update_passive();
  const auto& sched = graph.schedule();
  // Group consecutive directives by node.
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> groups;
  for (const auto& [node, target] : sched) {
    const std::size_t n = graph.node_idx(node);
    const std::size_t e = graph.edge_idx(target);
    const auto& edges = graph.state_.structure->nodes[n].edges;
    const std::size_t slot =
        std::find(edges.begin(), edges.end(), e) - edges.begin();
    if (groups.empty() || groups.back().first != n) groups.push_back({n, {}});
    groups.back().second.push_back(slot);
  }
  for (int s = 0; s < sweeps; ++s) {
    graph.last_delta_ = 0.0;
    for (const auto& [n, slots] : groups) graph.visit(n, slots);
    for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
      graph.visit(it->first, it->second);
    }
  }
  Marginals m;
  m.state_ = std::make_shared<const FactorGraph::State>(graph.state_);
  // Surface inconsistent evidence now rather than on first access.
  const auto& st = *m.state_;
  for (std::size_t e = 0; e < st.structure->edges.size(); ++e) {
    bool lazy_only = true;
    for (const auto& [n, slot] : st.structure->edge_nodes[e]) {
      lazy_only = lazy_only && st.passive[n] &&
                  static_cast<int>(slot) == st.structure->nodes[n].child_slot;
    }
    if (!lazy_only) st.belief(e);
  }
  return m;
}

DiscreteTensor Marginals::edge_marginal(const std::string& edge) const {
  const auto& s = *state_;
  auto it = s.structure->edge_index.find(edge);
  if (it == s.structure->edge_index.end()) {
    throw StructuralError("no edge '" + edge + "' in marginals");
  }
  const auto& e = s.structure->edges[it->second];
  return DiscreteTensor({{e.id, e.cardinality}}, s.belief(it->second));
}

bool Marginals::has_node(const std::string& node) const {
  return state_ && state_->structure->node_index.count(node) > 0;
}

SparseJoint Marginals::sparse_joint(const std::string& node) const {
  auto it = state_->structure->node_index.find(node);
  if (it == state_->structure->node_index.end()) {
    throw StructuralError("no node '" + node + "' in marginals");
  }
  return state_->sparse_joint(it->second);
}

SparseJoint Marginals::support(const std::string& node) const {
  auto it = state_->structure->node_index.find(node);
  if (it == state_->structure->node_index.end()) {
    throw StructuralError("no node '" + node + "' in marginals");
  }
  const auto& info = state_->structure->nodes[it->second];
  SparseJoint sj;
  for (std::size_t e : info.edges) {
    const auto& edge = state_->structure->edges[e];
    sj.axes.push_back({edge.id, edge.cardinality});
  }
  sj.kernel = state_->kernels[it->second];
  return sj;
}

DiscreteTensor Marginals::node_joint(const std::string& node) const {
  return sparse_joint(node).to_dense();
}

std::map<std::string, DiscreteTensor> Marginals::edge_marginals() const {
  std::map<std::string, DiscreteTensor> out;
  for (const auto& e : state_->structure->edges) {
    out.emplace(e.id, edge_marginal(e.id));
  }
  return out;
}

std::map<std::string, DiscreteTensor> Marginals::node_joints(
    std::size_t max_entries) const {
  std::map<std::string, DiscreteTensor> out;
  for (std::size_t n = 0; n < state_->structure->nodes.size(); ++n) {
    if (state_->tables[n].size() > max_entries) continue;
    out.emplace(state_->structure->nodes[n].id,
                state_->sparse_joint(n).to_dense());
  }
  return out;
}

nlohmann::json Marginals::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, t] : edge_marginals()) j[id] = efe::to_json(t);
  return j;
}

DiscreteTensor sum_product_message(
    const FactorNode& node, const std::map<std::string, DiscreteTensor>& incoming,
    const std::string& target) {
  if (std::find(node.attached_edges.begin(), node.attached_edges.end(),
                target) == node.attached_edges.end()) {
    throw ScheduleError("node '" + node.id + "' is not attached to '" + target +
                        "'");
  }
  std::vector<DiscreteTensor> factors{node.table};
  for (const auto& e : node.attached_edges) {
    if (e == target) continue;
    auto it = incoming.find(e);
    if (it == incoming.end()) {
      throw ScheduleError("missing incoming message on '" + e + "' at node '" +
                          node.id + "'");
    }
    factors.push_back(it->second);
  }
  auto msg = contract(factors, {target});
  if (!(msg.sum() > 0.0)) {
    throw InconsistentEvidenceError(target, "message to '" + target +
                                                "' has no support");
  }
  return normalize(msg);
}

double bethe_free_energy(const Marginals& m) {
  const auto& s = *m.state_;
  const auto& st = *s.structure;
  double f = 0.0;
  for (std::size_t n = 0; n < st.nodes.size(); ++n) {
    const auto& info = st.nodes[n];
    if (s.passive[n]) {
      for (std::size_t j = 0; j < info.edges.size(); ++j) {
        if (static_cast<int>(j) == info.child_slot) continue;
        f -= entropy_of(s.to_factor(info.edges[j], n));
      }
      continue;
    }
    const auto& k = *s.kernels[n];
    const std::size_t ar = k.arity();
    std::vector<std::vector<double>> in(ar);
    for (std::size_t j = 0; j < ar; ++j) in[j] = s.to_factor(info.edges[j], n);
    double z = 0.0, acc = 0.0;
    for (std::size_t e = 0; e < k.entries(); ++e) {
      const auto* c = &k.coords[e * ar];
      double w = k.values[e];
      double logmu = 0.0;
      for (std::size_t j = 0; j < ar && w != 0.0; ++j) {
        w *= in[j][c[j]];
        if (w != 0.0) logmu += std::log(in[j][c[j]]);
      }
      if (w == 0.0) continue;
      z += w;
      acc += w * logmu;
    }
    if (!(z > 0.0)) return std::numeric_limits<double>::infinity();
    f += acc / z - std::log(z);
  }
  for (std::size_t e = 0; e < st.edges.size(); ++e) {
    const auto d = st.edges[e].degree;
    if (d <= 1 || s.observed[e]) continue;
    f += static_cast<double>(d - 1) * entropy_of(s.belief(e));
  }
  return f;
}

double bethe_free_energy(const FactorGraph& graph, const Marginals& m) {
  // Dense evaluation against the graph's current tables.
  double f = 0.0;
  for (const auto& id : graph.node_ids()) {
    const auto q = m.node_joint(id);
    std::vector<std::string> order;
    for (const auto& a : q.axes()) order.push_back(a.name);
    const auto t = graph.table(id).permuted(order);
    if (t.size() != q.size()) {
      throw StructuralError("bethe_free_energy: table of '" + id +
                            "' does not match the snapshot");
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
      if (q[i] <= 0.0) continue;
      if (t[i] <= 0.0) return std::numeric_limits<double>::infinity();
      f += q[i] * std::log(q[i] / t[i]);
    }
  }
  for (const auto& e : graph.edge_ids()) {
    const auto d = graph.neighbours(e).size();
    if (d <= 1 || graph.edge(e).observed_value) continue;
    f += static_cast<double>(d - 1) * entropy(m.edge_marginal(e));
  }
  return f;
}

}  // namespace efe
