#pragma once

// Brute-force references for tiny single-state models: expected free energy
// per action sequence, variational free energy of a full joint, and the
// free-energy decomposition with epistemic priors. Used by tests and the
// verify command only; nothing here touches the factor graph.

#include <cstdint>
#include <vector>

#include "efe/model.hpp"
#include "efe/tensor.hpp"

namespace efe {

// Refuse to enumerate more action sequences than this.
inline constexpr std::size_t kMaxSequences = 4096;  // 4^6

// q(x_0) prod_t q(u_t) q(x_t | x_{t-1}, u_t) prod_n q(y_n,t | x_t).
// Template axis names as in ModelSpec: "x", "x@prev", "u", observation names.
struct ChainPosterior {
  DiscreteTensor x0;
  std::vector<DiscreteTensor> u;      // q(u_t), t = 1..T
  std::vector<DiscreteTensor> trans;  // q(x_t | x_{t-1}, u_t)
  // q(y | x_t) per slice, one table per likelihood of the model.
  std::vector<std::vector<DiscreteTensor>> obs;

  int horizon() const { return static_cast<int>(u.size()); }
};

// The generative model itself as a chain with q(u_t) = p(u_t).
ChainPosterior generative_chain(const ModelSpec& model);

// Every action sequence of length T, lexicographic, last step fastest.
std::vector<std::vector<std::size_t>> all_sequences(std::size_t actions, int T);

// G(u) = E[log q(x_1:T | x_0, u) - log p^(x_T) - log q(y | x)] under q.
double efe_under(const ModelSpec& model, const ChainPosterior& q,
                 const std::vector<std::size_t>& u);
// G(u) with q the generative model.
double exact_efe(const ModelSpec& model, const std::vector<std::size_t>& u);

struct ExactPolicyEvaluation {
  std::vector<std::vector<std::size_t>> sequences;
  std::vector<double> G;
};
ExactPolicyEvaluation evaluate_all_policies(const ModelSpec& model);

// Full joint of a chain posterior over edge ids x[t], u[t], y[t].
DiscreteTensor chain_joint(const ModelSpec& model, const ChainPosterior& q);

// sum q log(q / prod f) over the joint's support; +inf when q puts mass where
// the factor product is zero.
double exact_vfe(const DiscreteTensor& joint,
                 const std::vector<DiscreteTensor>& factors);

struct EpistemicTables {
  std::vector<DiscreteTensor> control;  // p~(u_t) over u[t]
  std::vector<DiscreteTensor> state;    // p~(x_t) over x[t]
};

// Epistemic priors computed from the chain's own local joints.
EpistemicTables chain_epistemic_priors(const ModelSpec& model,
                                       const ChainPosterior& q,
                                       double score_shift = 0.0);

// Generative factors over edge ids, with the terminal preference and the
// given epistemic priors.
std::vector<DiscreteTensor> augmented_factors(const ModelSpec& model,
                                              const EpistemicTables& priors);

struct DecompositionReport {
  double lhs = 0.0;       // F[q]
  double rhs = 0.0;       // E_q(u)[G(u)] + complexity
  double expected_efe = 0.0;
  double complexity = 0.0;
  double constant = 0.0;  // sum over t of c_x + c_y
  double residual = 0.0;  // |lhs - rhs - constant|
};

// score_shift is added to every raw score before the softmax; the priors and
// hence the residual must not move.
DecompositionReport verify_decomposition(const ModelSpec& model,
                                         const ChainPosterior& q,
                                         double score_shift = 0.0);

}  // namespace efe
