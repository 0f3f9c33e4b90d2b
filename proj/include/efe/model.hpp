#pragma once

// Declarative state-space models and their unrolled factor graphs.
//
// Template tables name their axes by variable: a state variable "x" is the
// current slice, "x@prev" the previous one, static variables and the control
// "u" are used as is, observations by their own names. Unrolling maps these to
// edge ids "x[t]", "x[t-1]", "k", "u[t]" and "y[t]".

#include <map>
#include <string>
#include <vector>

#include "efe/epistemic.hpp"
#include "efe/factor_graph.hpp"
#include "efe/tensor.hpp"

namespace efe {

struct VariableDecl {
  std::string name;
  std::size_t card = 0;
};

struct CptTemplate {
  std::string name;
  std::string child;
  DiscreteTensor table;
  // Sparse form of table; built on demand when absent.
  std::shared_ptr<const NodeKernel> kernel;
};

// Template with its kernel precomputed (and normalization checked).
CptTemplate make_template(std::string name, std::string child,
                          DiscreteTensor table);

struct ModelSpec {
  std::vector<VariableDecl> states;
  std::vector<VariableDecl> statics;
  VariableDecl control{"u", 1};
  std::vector<VariableDecl> observations;
  // Priors over every state variable at t = 0 and every static variable.
  std::map<std::string, DiscreteTensor> initial;
  DiscreteTensor control_prior;
  std::vector<CptTemplate> transitions;
  std::vector<CptTemplate> likelihoods;
  // Terminal preferences keyed by state variable.
  std::map<std::string, DiscreteTensor> preferences;
  int horizon = 1;

  // Throws ModelValidationError on dangling axes or malformed tables.
  void validate() const;
  bool is_state(const std::string& name) const;
  bool is_static(const std::string& name) const;
  std::size_t card(const std::string& name) const;
};

std::string edge_name(const std::string& var, int t);
// Edge id for a template axis at slice t.
std::string resolve_axis(const ModelSpec& model, const std::string& axis, int t);

struct BuildOptions {
  bool preferences = true;
  bool epistemic = true;
  bool control_prior = true;
  // Number of slices; negative means model.horizon. Zero builds only the
  // initial slice, with likelihoods attached to it when
  // observe_initial_slice is set.
  int horizon = -1;
  bool observe_initial_slice = false;
};

struct ModelGraph {
  FactorGraph graph;
  std::vector<EpistemicPriorSpec> epistemic;
  std::vector<std::string> preference_nodes;
  int horizon = 0;
};

ModelGraph build_graph(const ModelSpec& model, const BuildOptions& opts = {});

// The same model with its initial priors replaced.
ModelSpec with_initial(const ModelSpec& model,
                       std::map<std::string, DiscreteTensor> initial,
                       int horizon);

}  // namespace efe
