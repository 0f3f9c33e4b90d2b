#pragma once

// Randomized reference checks shared by the test suite, the verify command
// and the acceptance runner. Generators are hand-rolled on mt19937_64 so a
// failing case can be replayed from its seed.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "efe/model.hpp"
#include "efe/oracle.hpp"
#include "efe/tensor.hpp"

namespace efe {

struct CheckResult {
  std::string name;
  bool pass = false;
  // Worst error seen, or the observed metric.
  double value = 0.0;
  std::string detail;
  double seconds = 0.0;
};

// Entries uniform in (0, 1]; each zeroed with zero_prob.
DiscreteTensor random_tensor(std::mt19937_64& rng, std::vector<Axis> axes,
                             double zero_prob = 0.0);
// Normalized over `child` for every parent configuration; zeroed entries never
// empty a column.
DiscreteTensor random_conditional(std::mt19937_64& rng, std::vector<Axis> axes,
                                  const std::string& child,
                                  double zero_prob = 0.0);
DiscreteTensor random_distribution(std::mt19937_64& rng, Axis axis,
                                   double zero_prob = 0.0);

// Factors forming a tree-shaped factor graph over at most max_vars variables
// named v0, v1, ...; cardinalities 2..max_card.
std::vector<std::pair<std::string, DiscreteTensor>> random_tree_factors(
    std::mt19937_64& rng, int max_vars = 8, std::size_t max_card = 4);

// Single-state model over x with 2..3 states, `controls` actions, one or two
// observations and horizon 1..max_T, all tables strictly positive.
ModelSpec random_chain_model(std::mt19937_64& rng, std::size_t controls = 2,
                             int max_T = 3);
// Arbitrary chain posterior for the model, with some zero entries.
ChainPosterior random_chain_posterior(std::mt19937_64& rng,
                                      const ModelSpec& model);

// Marginals and Bethe free energy against enumeration on random trees.
CheckResult check_tree_inference(int models, std::uint64_t seed,
                                 double tol = 1e-10);
// Free-energy decomposition residual on random tiny chains.
CheckResult check_decomposition(int models, std::uint64_t seed,
                                double tol = 1e-8);
// Chain rule H[a, b] = H[a] + H[b | a] and softmax shift invariance.
CheckResult check_entropy_identities(int tensors, std::uint64_t seed,
                                     double tol = 1e-10);
// Planner with epistemic priors off against the graph built without them.
CheckResult check_ablation(std::uint64_t seed, double tol = 1e-10);
// First iteration whose Bethe free energy moves less than tol, searched up to
// max_tau, on the default gridworld start; writes the trace when csv is set.
CheckResult check_grid_convergence(int max_tau, double tol,
                                   const std::string& csv = "");
CheckResult check_grid_chi_square(int samples, std::uint64_t seed);
CheckResult check_minigrid_coherence();

}  // namespace efe
