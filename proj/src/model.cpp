#include "efe/model.hpp"

#include <set>

#include "efe/error.hpp"

namespace efe {
namespace {

constexpr const char* kPrevSuffix = "@prev";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string base_name(const std::string& axis) {
  return ends_with(axis, kPrevSuffix)
             ? axis.substr(0, axis.size() - std::string(kPrevSuffix).size())
             : axis;
}

DiscreteTensor unroll(const ModelSpec& model, const DiscreteTensor& table,
                      int t) {
  DiscreteTensor out = table;
  for (const auto& a : table.axes()) {
    out = out.renamed(a.name, resolve_axis(model, a.name, t));
  }
  return out;
}

void check_single_axis(const DiscreteTensor& t, const std::string& name,
                       std::size_t card, const std::string& what) {
  if (t.rank() != 1 || t.axes()[0].name != name || t.axes()[0].card != card) {
    throw ModelValidationError(what + " must be a table over '" + name + "'");
  }
}

}  // namespace

bool ModelSpec::is_state(const std::string& name) const {
  for (const auto& v : states) {
    if (v.name == name) return true;
  }
  return false;
}

bool ModelSpec::is_static(const std::string& name) const {
  for (const auto& v : statics) {
    if (v.name == name) return true;
  }
  return false;
}

std::size_t ModelSpec::card(const std::string& name) const {
  for (const auto* group : {&states, &statics, &observations}) {
    for (const auto& v : *group) {
      if (v.name == name) return v.card;
    }
  }
  if (name == control.name) return control.card;
  throw ModelValidationError("unknown variable '" + name + "'");
}

void ModelSpec::validate() const {
  if (horizon < 1) throw ModelValidationError("horizon must be at least 1");
  std::set<std::string> names;
  auto declare = [&](const VariableDecl& v) {
    if (v.name.empty() || v.name.find_first_of("@[]") != std::string::npos) {
      throw ModelValidationError("invalid variable name '" + v.name + "'");
    }
    if (v.card == 0) {
      throw ModelValidationError("variable '" + v.name + "' has cardinality 0");
    }
    if (!names.insert(v.name).second) {
      throw ModelValidationError("duplicate variable '" + v.name + "'");
    }
  };
  for (const auto& v : states) declare(v);
  for (const auto& v : statics) declare(v);
  for (const auto& v : observations) declare(v);
  declare(control);
  if (states.empty()) throw ModelValidationError("model has no state variable");

  for (const auto* group : {&states, &statics}) {
    for (const auto& v : *group) {
      auto it = initial.find(v.name);
      if (it == initial.end()) {
        throw ModelValidationError("missing initial prior for '" + v.name + "'");
      }
      check_single_axis(it->second, v.name, v.card, "initial prior");
    }
  }
  check_single_axis(control_prior, control.name, control.card, "control prior");

  auto check_template = [&](const CptTemplate& c, bool transition) {
    for (const auto& a : c.table.axes()) {
      const std::string base = base_name(a.name);
      const bool prev = base != a.name;
      bool ok = false;
      if (prev) {
        ok = transition && is_state(base);
      } else if (is_state(a.name) || is_static(a.name)) {
        ok = true;
      } else if (a.name == control.name) {
        ok = transition;
      } else {
        ok = a.name == c.child && !transition;
      }
      if (!ok) {
        throw ModelValidationError("template '" + c.name +
                                   "' has dangling axis '" + a.name + "'");
      }
      if (card(base) != a.card) {
        throw ModelValidationError("template '" + c.name + "' axis '" + a.name +
                                   "' has the wrong cardinality");
      }
    }
    if (!c.table.has_axis(c.child)) {
      throw ModelValidationError("template '" + c.name + "' lacks its child");
    }
  };
  std::map<std::string, int> produced;
  for (const auto& c : transitions) {
    if (!is_state(c.child)) {
      throw ModelValidationError("transition '" + c.name +
                                 "' must produce a state variable");
    }
    check_template(c, true);
    produced[c.child]++;
  }
  for (const auto& v : states) {
    if (produced[v.name] != 1) {
      throw ModelValidationError("state '" + v.name +
                                 "' needs exactly one transition");
    }
  }
  for (const auto& c : likelihoods) {
    bool is_obs = false;
    for (const auto& o : observations) is_obs = is_obs || o.name == c.child;
    if (!is_obs) {
      throw ModelValidationError("likelihood '" + c.name +
                                 "' must produce an observation");
    }
    check_template(c, false);
    produced[c.child]++;
  }
  for (const auto& o : observations) {
    if (produced[o.name] != 1) {
      throw ModelValidationError("observation '" + o.name +
                                 "' needs exactly one likelihood");
    }
  }
  for (const auto& [name, p] : preferences) {
    if (!is_state(name)) {
      throw ModelValidationError("preference on non-state '" + name + "'");
    }
    check_single_axis(p, name, card(name), "preference");
  }
}

CptTemplate make_template(std::string name, std::string child,
                          DiscreteTensor table) {
  auto kernel = make_node_kernel(table, child);
  return {std::move(name), std::move(child), std::move(table),
          std::move(kernel)};
}

std::string edge_name(const std::string& var, int t) {
  return var + "[" + std::to_string(t) + "]";
}

std::string resolve_axis(const ModelSpec& model, const std::string& axis,
                         int t) {
  const std::string base = base_name(axis);
  if (base != axis) {
    if (!model.is_state(base)) {
      throw ModelValidationError("dangling axis '" + axis + "'");
    }
    return edge_name(base, t - 1);
  }
  if (model.is_state(axis)) return edge_name(axis, t);
  if (model.is_static(axis)) return axis;
  if (axis == model.control.name) return edge_name(axis, t);
  for (const auto& o : model.observations) {
    if (o.name == axis) return edge_name(axis, t);
  }
  throw ModelValidationError("dangling axis '" + axis + "'");
}

ModelGraph build_graph(const ModelSpec& model, const BuildOptions& opts) {
  model.validate();
  const int horizon = opts.horizon < 0 ? model.horizon : opts.horizon;
  ModelGraph mg;
  mg.horizon = horizon;
  auto& g = mg.graph;

  for (int t = 0; t <= horizon; ++t) {
    for (const auto& v : model.states) g.add_edge(edge_name(v.name, t), v.card);
  }
  for (const auto& v : model.statics) g.add_edge(v.name, v.card);
  for (int t = 1; t <= horizon; ++t) {
    g.add_edge(edge_name(model.control.name, t), model.control.card);
    for (const auto& o : model.observations) {
      g.add_edge(edge_name(o.name, t), o.card);
    }
  }
  if (opts.observe_initial_slice) {
    for (const auto& o : model.observations) {
      g.add_edge(edge_name(o.name, 0), o.card);
    }
  }

  std::vector<std::string> order;
  auto add = [&](const std::string& id, NodeKind kind, DiscreteTensor table,
                 const std::string& child = "",
                 std::shared_ptr<const NodeKernel> kernel = nullptr) {
    g.add_node(id, kind, std::move(table), child, std::move(kernel));
    order.push_back(id);
  };
  std::map<std::string, std::shared_ptr<const NodeKernel>> kernels;
  auto kernel_of = [&](const CptTemplate& c) {
    if (c.kernel) return c.kernel;
    auto& k = kernels[c.name];
    if (!k) k = make_node_kernel(c.table, c.child);
    return k;
  };

  for (const auto& v : model.states) {
    const auto e = edge_name(v.name, 0);
    add("p:" + e, NodeKind::kPrior, model.initial.at(v.name).renamed(v.name, e));
  }
  for (const auto& v : model.statics) {
    add("p:" + v.name, NodeKind::kPrior, model.initial.at(v.name));
  }
  if (opts.epistemic) {
    for (const auto& v : model.statics) {
      const std::string node = "ep:" + v.name;
      add(node, NodeKind::kEpistemicPrior,
          DiscreteTensor::uniform({{v.name, v.card}}));
      EpistemicPriorSpec spec{v.name, node, EpistemicKind::kState, {}};
      for (int t = 1; t <= horizon; ++t) {
        for (const auto& c : model.likelihoods) {
          if (!c.table.has_axis(v.name)) continue;
          EpistemicTerm term{edge_name(c.name, t), -1, {}, v.name};
          for (const auto& a : c.table.axes()) {
            if (a.name != c.child && a.name != v.name) {
              term.subset_axes.insert(resolve_axis(model, a.name, t));
            }
          }
          spec.terms.push_back(std::move(term));
        }
      }
      mg.epistemic.push_back(std::move(spec));
    }
  }
  if (opts.observe_initial_slice) {
    for (const auto& c : model.likelihoods) {
      add(edge_name(c.name, 0), NodeKind::kCpt, unroll(model, c.table, 0),
          edge_name(c.child, 0), kernel_of(c));
    }
  }

  for (int t = 1; t <= horizon; ++t) {
    const auto u = edge_name(model.control.name, t);
    if (opts.control_prior) {
      add(edge_name("pu", t), NodeKind::kPrior,
          model.control_prior.renamed(model.control.name, u));
    }
    if (opts.epistemic) {
      const std::string node = "ep:" + u;
      add(node, NodeKind::kEpistemicPrior,
          DiscreteTensor::uniform({{u, model.control.card}}));
      EpistemicPriorSpec spec{u, node, EpistemicKind::kControl, {}};
      for (const auto& c : model.transitions) {
        if (!c.table.has_axis(model.control.name)) continue;
        EpistemicTerm term{edge_name(c.name, t), 1, {}, u};
        for (const auto& a : c.table.axes()) {
          if (a.name != c.child && a.name != model.control.name) {
            term.subset_axes.insert(resolve_axis(model, a.name, t));
          }
        }
        spec.terms.push_back(std::move(term));
      }
      mg.epistemic.push_back(std::move(spec));
    }
    for (const auto& c : model.transitions) {
      add(edge_name(c.name, t), NodeKind::kCpt, unroll(model, c.table, t),
          edge_name(c.child, t), kernel_of(c));
    }
    if (opts.preferences) {
      for (const auto& [name, p] : model.preferences) {
        const auto e = edge_name(name, t);
        const std::string node = "pref:" + e;
        add(node, NodeKind::kPreferencePrior,
            t == horizon ? p.renamed(name, e)
                         : DiscreteTensor::filled({{e, model.card(name)}}, 1.0));
        mg.preference_nodes.push_back(node);
      }
    }
    if (opts.epistemic) {
      for (const auto& v : model.states) {
        const auto e = edge_name(v.name, t);
        const std::string node = "ep:" + e;
        add(node, NodeKind::kEpistemicPrior,
            DiscreteTensor::uniform({{e, v.card}}));
        EpistemicPriorSpec spec{e, node, EpistemicKind::kState, {}};
        for (const auto& c : model.likelihoods) {
          if (!c.table.has_axis(v.name)) continue;
          EpistemicTerm term{edge_name(c.name, t), -1, {}, e};
          for (const auto& a : c.table.axes()) {
            if (a.name != c.child && a.name != v.name) {
              term.subset_axes.insert(resolve_axis(model, a.name, t));
            }
          }
          spec.terms.push_back(std::move(term));
        }
        mg.epistemic.push_back(std::move(spec));
      }
    }
    for (const auto& c : model.likelihoods) {
      add(edge_name(c.name, t), NodeKind::kCpt, unroll(model, c.table, t),
          edge_name(c.child, t), kernel_of(c));
    }
  }

  std::vector<Directive> schedule;
  for (const auto& id : order) {
    for (const auto& e : g.node(id).attached_edges) schedule.emplace_back(id, e);
  }
  g.set_schedule(std::move(schedule));
  return mg;
}

ModelSpec with_initial(const ModelSpec& model,
                       std::map<std::string, DiscreteTensor> initial,
                       int horizon) {
  ModelSpec m = model;
  m.initial = std::move(initial);
  m.horizon = horizon;
  return m;
}

}  // namespace efe
