#pragma once

// Epistemic and preference prior tables computed from posterior node joints.

#include <string>
#include <vector>

#include <json.hpp>

#include "efe/factor_graph.hpp"
#include "efe/tensor.hpp"

namespace efe {

// One signed entropy-difference contribution to an epistemic prior. Axes are
// edge ids of the source node's table.
struct EpistemicTerm {
  std::string source_node;
  int entropy_sign = 1;
  AxisSet subset_axes;
  std::string conditioning_axis;
};

enum class EpistemicKind { kControl, kState };

struct EpistemicPriorSpec {
  std::string target_edge;
  std::string node;  // the epistemic prior node carrying the table
  EpistemicKind kind = EpistemicKind::kControl;
  std::vector<EpistemicTerm> terms;
};

// For every value c of `cond`: H[q(all but cond | c)] - H[q(subset | c)].
// Zero-probability conditioning values score 0.
DiscreteTensor entropy_difference_score(const DiscreteTensor& joint,
                                        const AxisSet& subset_axes,
                                        const std::string& cond);
// Same score evaluated on a sparse node joint.
DiscreteTensor entropy_difference_score(const SparseJoint& joint,
                                        const AxisSet& subset_axes,
                                        const std::string& cond);

// softmax over u of H[q(x_t, x_{t-1} | u)] - H[q(x_{t-1} | u)].
DiscreteTensor control_epistemic_prior(const DiscreteTensor& node_joint_q,
                                       const std::string& control_axis,
                                       const AxisSet& previous_axes);

// softmax over x of -H[q(y | x)] for a conditional normalized over y.
DiscreteTensor state_epistemic_prior(const DiscreteTensor& obs_conditional,
                                     const std::string& obs_axis,
                                     const std::string& state_axis);

// Summed signed scores of every term, over the target edge.
DiscreteTensor epistemic_scores(const EpistemicPriorSpec& spec,
                                const Marginals& m);
DiscreteTensor factored_epistemic_prior(const EpistemicPriorSpec& spec,
                                        const Marginals& m,
                                        double score_scale = 1.0);
// Per-term score breakdown for diagnostics.
nlohmann::json epistemic_breakdown(const EpistemicPriorSpec& spec,
                                   const Marginals& m);

// Normalizes goal, floors every entry at epsilon and renormalizes.
DiscreteTensor preference_prior(const DiscreteTensor& goal,
                                double epsilon = 1e-4);

}  // namespace efe
