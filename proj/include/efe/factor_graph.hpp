#pragma once

// Forney-style factor graphs: factors are nodes, variables are edges. Each
// edge carries one axis, named by the edge id, in the tables of the nodes it
// attaches to.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "efe/tensor.hpp"

namespace efe {

enum class NodeKind { kCpt, kPrior, kEpistemicPrior, kPreferencePrior };

const char* to_string(NodeKind kind);

struct VariableEdge {
  std::string id;
  std::size_t cardinality = 0;
  std::size_t degree = 0;
  std::optional<std::size_t> observed_value;
};

struct FactorNode {
  std::string id;
  NodeKind kind = NodeKind::kPrior;
  DiscreteTensor table;
  std::vector<std::string> attached_edges;
  // Child edge of a cpt node; empty for other kinds.
  std::string child;
};

// Nonzero entries of a node table, coordinates in attached-edge order.
struct NodeKernel {
  std::vector<std::size_t> cards;
  std::vector<std::uint32_t> coords;  // entries x arity
  std::vector<double> values;
  int child_slot = -1;
  // cpt only: every parent configuration has a single entry equal to 1.
  bool deterministic = false;

  std::size_t arity() const { return cards.size(); }
  std::size_t entries() const { return values.size(); }
};

// Node joint in sparse form: probabilities over the kernel's support.
struct SparseJoint {
  std::vector<Axis> axes;
  std::shared_ptr<const NodeKernel> kernel;
  std::vector<double> prob;  // one per kernel entry, sums to 1

  DiscreteTensor to_dense() const;
};

// Sparse form of a table. With a child axis named, also checks that the table
// is normalized over it (ModelValidationError otherwise).
std::shared_ptr<const NodeKernel> make_node_kernel(const DiscreteTensor& table,
                                                   const std::string& child);

using Directive = std::pair<std::string, std::string>;  // (node, target edge)

class Marginals;

class FactorGraph {
 public:
  FactorGraph();

  void add_edge(const std::string& id, std::size_t cardinality);
  // The table's axes name the attached edges, in attachment order. Edges must
  // already exist.
  // A precomputed kernel for the same table may be passed to skip rebuilding
  // it; cpt nodes share one kernel across time slices this way.
  void add_node(const std::string& id, NodeKind kind, DiscreteTensor table,
                const std::string& child = "",
                std::shared_ptr<const NodeKernel> kernel = nullptr);
  // Replaces a node's table; axes must match the existing table.
  void set_table(const std::string& node, DiscreteTensor table);

  void observe(const std::string& edge, std::size_t value);
  void clear_observation(const std::string& edge);

  // Each sweep runs the directives in order, then in reverse. Consecutive
  // directives for one node are evaluated together.
  void set_schedule(std::vector<Directive> schedule);
  const std::vector<Directive>& schedule() const;

  bool has_edge(const std::string& id) const;
  bool has_node(const std::string& id) const;
  VariableEdge edge(const std::string& id) const;
  FactorNode node(const std::string& id) const;
  const DiscreteTensor& table(const std::string& node) const;
  const std::shared_ptr<const NodeKernel>& kernel(const std::string& node) const;
  std::vector<std::string> edge_ids() const;
  std::vector<std::string> node_ids() const;
  // Nodes attached to an edge, in attachment order.
  std::vector<std::string> neighbours(const std::string& edge) const;
  bool is_tree() const;

  // Resets every message to uniform.
  void reset_messages();
  // Largest elementwise message change during the most recent sweep.
  double last_sweep_delta() const { return last_delta_; }

  nlohmann::json to_json() const;

 private:
  friend Marginals run_inference(FactorGraph& graph, int sweeps);
  friend class Marginals;

  struct NodeInfo {
    std::string id;
    NodeKind kind;
    std::vector<std::size_t> edges;
    int child_slot = -1;
  };
  struct Structure {
    std::vector<VariableEdge> edges;
    std::vector<NodeInfo> nodes;
    std::unordered_map<std::string, std::size_t> edge_index;
    std::unordered_map<std::string, std::size_t> node_index;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edge_nodes;
  };
  struct State {
    std::shared_ptr<const Structure> structure;
    std::vector<DiscreteTensor> tables;
    std::vector<std::shared_ptr<const NodeKernel>> kernels;
    std::vector<std::optional<std::size_t>> observed;
    // Factor-to-variable messages, [node][slot].
    std::vector<std::vector<std::vector<double>>> messages;
    std::vector<bool> passive;

    std::vector<double> to_factor(std::size_t edge, std::size_t node) const;
    std::vector<double> belief(std::size_t edge) const;
    std::vector<double> outgoing(std::size_t node, std::size_t slot) const;
    SparseJoint sparse_joint(std::size_t node) const;
  };

  Structure& mutable_structure();
  std::size_t edge_idx(const std::string& id) const;
  std::size_t node_idx(const std::string& id) const;
  std::vector<Directive> default_schedule() const;
  void update_passive();
  void visit(std::size_t node, const std::vector<std::size_t>& slots);

  State state_;
  std::vector<Directive> schedule_;
  bool custom_schedule_ = false;
  double last_delta_ = 0.0;
};

// Builds a graph from named factors whose axes name the variables. Edges are
// created on first mention. The schedule is a tree schedule when the result
// is a forest.
FactorGraph build_graph(
    const std::vector<std::pair<std::string, DiscreteTensor>>& factors);

// Snapshot of the beliefs after inference. Stays valid if the graph changes.
class Marginals {
 public:
  Marginals() = default;

  DiscreteTensor edge_marginal(const std::string& edge) const;
  // Normalized over all of the node's axes, axes sorted by name.
  DiscreteTensor node_joint(const std::string& node) const;
  SparseJoint sparse_joint(const std::string& node) const;
  // Axes and kernel only; prob is left empty.
  SparseJoint support(const std::string& node) const;
  bool has_node(const std::string& node) const;

  std::map<std::string, DiscreteTensor> edge_marginals() const;
  // Node joints with at most max_entries dense entries.
  std::map<std::string, DiscreteTensor> node_joints(
      std::size_t max_entries = 1u << 16) const;

  nlohmann::json to_json() const;

 private:
  friend Marginals run_inference(FactorGraph& graph, int sweeps);
  friend double bethe_free_energy(const Marginals& m);
  std::shared_ptr<const FactorGraph::State> state_;
};

// Factor-to-variable sum-product message. `incoming` holds normalized
// variable-to-factor messages for every attached edge except target.
DiscreteTensor sum_product_message(
    const FactorNode& node, const std::map<std::string, DiscreteTensor>& incoming,
    const std::string& target);

Marginals run_inference(FactorGraph& graph, int sweeps);

// Sum over nodes of E_q[log q_a / f_a] plus sum over edges of
// (degree - 1) H[q_i], which equals -log Z on trees. Evaluated on the
// snapshot's own tables; +inf when a node joint puts mass where its table is
// zero.
double bethe_free_energy(const Marginals& m);
// Same functional with the node joints scored against graph's current
// tables; dense, for small graphs.
double bethe_free_energy(const FactorGraph& graph, const Marginals& m);

}  // namespace efe
