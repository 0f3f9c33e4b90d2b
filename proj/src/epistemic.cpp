#include "efe/epistemic.hpp"

#include <cmath>

#include "efe/error.hpp"

namespace efe {
namespace {

// Score over the nonzero entries of a joint given as coordinates plus
// probabilities: for each c, E_{q(a|c)}[-log q(rest | subset, c)].
DiscreteTensor score_entries(const std::vector<Axis>& axes,
                             std::span<const std::uint32_t> coords,
                             std::span<const double> prob,
                             const AxisSet& subset, const std::string& cond) {
  const std::size_t n = axes.size();
  int cond_slot = -1;
  for (std::size_t j = 0; j < n; ++j) {
    if (axes[j].name == cond) cond_slot = static_cast<int>(j);
  }
  if (cond_slot < 0) {
    throw StructuralError("entropy score: joint lacks conditioning axis '" +
                          cond + "'");
  }
  if (subset.count(cond)) {
    throw StructuralError("entropy score: conditioning axis is in the subset");
  }
  std::vector<std::size_t> stride(n, 0);
  std::size_t groups = 1;
  std::size_t found = 0;
  for (std::size_t j = n; j-- > 0;) {
    if (subset.count(axes[j].name) || static_cast<int>(j) == cond_slot) {
      stride[j] = groups;
      groups *= axes[j].card;
      if (subset.count(axes[j].name)) ++found;
    }
  }
  if (found != subset.size()) {
    throw StructuralError("entropy score: subset names an axis not in the joint");
  }
  const std::size_t entries = prob.size();
  std::vector<double> m(groups, 0.0);
  std::vector<std::size_t> key(entries);
  for (std::size_t e = 0; e < entries; ++e) {
    std::size_t g = 0;
    for (std::size_t j = 0; j < n; ++j) g += stride[j] * coords[e * n + j];
    key[e] = g;
    m[g] += prob[e];
  }
  const std::size_t cc = axes[cond_slot].card;
  std::vector<double> mass(cc, 0.0), acc(cc, 0.0);
  for (std::size_t e = 0; e < entries; ++e) {
    const double p = prob[e];
    if (p <= 0.0) continue;
    const std::size_t c = coords[e * n + cond_slot];
    mass[c] += p;
    acc[c] -= p * std::log(p / m[key[e]]);
  }
  std::vector<double> out(cc, 0.0);
  for (std::size_t c = 0; c < cc; ++c) {
    if (mass[c] > 0.0) out[c] = acc[c] / mass[c];
  }
  return DiscreteTensor::signed_values({axes[cond_slot]}, std::move(out));
}

// A term vanishes exactly when it scores a deterministic cpt's child given
// all of its parents.
bool vanishes(const SparseJoint& joint, const EpistemicTerm& term) {
  const auto& k = *joint.kernel;
  if (!k.deterministic || k.child_slot < 0) return false;
  for (std::size_t j = 0; j < joint.axes.size(); ++j) {
    const auto& name = joint.axes[j].name;
    const bool covered =
        term.subset_axes.count(name) || name == term.conditioning_axis;
    if (static_cast<int>(j) == k.child_slot ? covered : !covered) return false;
  }
  return true;
}

}  // namespace

DiscreteTensor entropy_difference_score(const DiscreteTensor& joint,
                                        const AxisSet& subset_axes,
                                        const std::string& cond) {
  if (std::abs(joint.sum() - 1.0) > 1e-9) {
    throw ContractViolation("entropy score: joint is not normalized");
  }
  const auto& axes = joint.axes();
  const std::size_t n = axes.size();
  std::vector<std::uint32_t> coords;
  std::vector<double> prob;
  std::vector<std::uint32_t> idx(n, 0);
  for (std::size_t f = 0; f < joint.size(); ++f) {
    if (joint[f] > 0.0) {
      coords.insert(coords.end(), idx.begin(), idx.end());
      prob.push_back(joint[f]);
    }
    for (std::size_t a = n; a-- > 0;) {
      if (++idx[a] < axes[a].card) break;
      idx[a] = 0;
    }
  }
  return score_entries(axes, coords, prob, subset_axes, cond);
}

DiscreteTensor entropy_difference_score(const SparseJoint& joint,
                                        const AxisSet& subset_axes,
                                        const std::string& cond) {
  return score_entries(joint.axes, joint.kernel->coords, joint.prob,
                       subset_axes, cond);
}

DiscreteTensor control_epistemic_prior(const DiscreteTensor& node_joint_q,
                                       const std::string& control_axis,
                                       const AxisSet& previous_axes) {
  return softmax(
      entropy_difference_score(node_joint_q, previous_axes, control_axis));
}

DiscreteTensor state_epistemic_prior(const DiscreteTensor& obs_conditional,
                                     const std::string& obs_axis,
                                     const std::string& state_axis) {
  if (obs_conditional.rank() != 2 || !obs_conditional.has_axis(obs_axis) ||
      !obs_conditional.has_axis(state_axis)) {
    throw StructuralError("state prior expects a table over (obs, state)");
  }
  const auto t = obs_conditional.permuted({state_axis, obs_axis});
  const std::size_t nx = t.cardinality(state_axis);
  const std::size_t ny = t.cardinality(obs_axis);
  std::vector<double> score(nx, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    double s = 0.0, h = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      const double p = t[x * ny + y];
      s += p;
      if (p > 0.0) h -= p * std::log(p);
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw ContractViolation("state prior: column is not normalized over '" +
                              obs_axis + "'");
    }
    score[x] = -h;
  }
  return softmax(DiscreteTensor::signed_values(
      {{state_axis, nx}}, std::move(score)));
}

DiscreteTensor epistemic_scores(const EpistemicPriorSpec& spec,
                                const Marginals& m) {
  std::size_t card = m.edge_marginal(spec.target_edge).size();
  std::vector<double> total(card, 0.0);
  for (const auto& term : spec.terms) {
    if (term.conditioning_axis != spec.target_edge) {
      throw StructuralError("epistemic term conditions on '" +
                            term.conditioning_axis + "', not the target '" +
                            spec.target_edge + "'");
    }
    if (!m.has_node(term.source_node)) {
      throw StructuralError("epistemic term source '" + term.source_node +
                            "' has no node joint");
    }
    if (vanishes(m.support(term.source_node), term)) continue;
    const auto s = entropy_difference_score(m.sparse_joint(term.source_node), term.subset_axes,
                                            term.conditioning_axis);
    for (std::size_t c = 0; c < card; ++c) total[c] += term.entropy_sign * s[c];
  }
  return DiscreteTensor::signed_values({{spec.target_edge, card}},
                                       std::move(total));
}

DiscreteTensor factored_epistemic_prior(const EpistemicPriorSpec& spec,
                                        const Marginals& m,
                                        double score_scale) {
  const auto s = epistemic_scores(spec, m);
  std::vector<double> scaled(s.data().begin(), s.data().end());
  for (double& v : scaled) v *= score_scale;
  return softmax(DiscreteTensor::signed_values(s.axes(), std::move(scaled)));
}

nlohmann::json epistemic_breakdown(const EpistemicPriorSpec& spec,
                                   const Marginals& m) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& term : spec.terms) {
    const auto joint = m.sparse_joint(term.source_node);
    const auto s = entropy_difference_score(joint, term.subset_axes,
                                            term.conditioning_axis);
    terms.push_back({{"source", term.source_node},
                     {"sign", term.entropy_sign},
                     {"scores", std::vector<double>(s.data().begin(),
                                                    s.data().end())}});
  }
  return {{"target", spec.target_edge},
          {"kind", spec.kind == EpistemicKind::kControl ? "control" : "state"},
          {"terms", terms}};
}

DiscreteTensor preference_prior(const DiscreteTensor& goal, double epsilon) {
  const double s = goal.sum();
  if (!(s > 0.0)) {
    throw ModelValidationError("preference goal is the zero vector");
  }
  std::vector<double> p(goal.data().begin(), goal.data().end());
  double z = 0.0;
  for (double& v : p) {
    v = std::max(v / s, epsilon);
    z += v;
  }
  for (double& v : p) v /= z;
  return DiscreteTensor(goal.axes(), std::move(p)).canonical();
}

}  // namespace efe
