#include <doctest.h>

#include <cmath>
#include <random>

#include "efe/checks.hpp"
#include "efe/epistemic.hpp"
#include "efe/error.hpp"
#include "efe/grid_env.hpp"
#include "efe/minigrid_env.hpp"
#include "efe/planner.hpp"

using namespace efe;

namespace {

// q(x_t, x_prev, u) = q(u) q(x_prev) B(x_t | x_prev, u)
DiscreteTensor local_joint(const DiscreteTensor& B, const DiscreteTensor& q_prev,
                           const DiscreteTensor& q_u) {
  return normalize(contract({B, q_prev, q_u}, B.axis_names()));
}

}  // namespace

TEST_CASE("deterministic transitions score zero for every control") {
  // u=0 keeps x, u=1 flips it.
  const DiscreteTensor B({{"x", 2}, {"xp", 2}, {"u", 2}},
                         {1, 0, 0, 1, 0, 1, 1, 0});
  const auto j = local_joint(B, DiscreteTensor::uniform({{"xp", 2}}),
                             DiscreteTensor::uniform({{"u", 2}}));
  const auto s = entropy_difference_score(j, {"xp"}, "u");
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 0.0);
  const auto p = control_epistemic_prior(j, "u", {"xp"});
  CHECK(p[0] == doctest::Approx(0.5));
}

TEST_CASE("deterministic versus uniform control scores") {
  // u=0 identity, u=1 uniform over x.
  const DiscreteTensor B({{"x", 2}, {"xp", 2}, {"u", 2}},
                         {1, 0.5, 0, 0.5, 0, 0.5, 1, 0.5});
  const auto j = local_joint(B, DiscreteTensor::uniform({{"xp", 2}}),
                             DiscreteTensor::uniform({{"u", 2}}));
  const auto s = entropy_difference_score(j, {"xp"}, "u");
  CHECK(std::abs(s[0]) < 1e-15);
  CHECK(s[1] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const auto p = control_epistemic_prior(j, "u", {"xp"});
  CHECK(p[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(2.0 / 3).epsilon(1e-14));
}

TEST_CASE("identical dynamics give a uniform control prior") {
  std::mt19937_64 rng(2);
  const auto b = random_conditional(rng, {{"x", 3}, {"xp", 3}}, "x");
  const auto B = multiply(b, DiscreteTensor::filled({{"u", 4}}, 1.0));
  const auto j = local_joint(B, random_distribution(rng, {"xp", 3}),
                             random_distribution(rng, {"u", 4}));
  const auto p = control_epistemic_prior(j, "u", {"xp"});
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("state prior examples") {
  const DiscreteTensor eye({{"y", 3}, {"x", 3}}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto u = state_epistemic_prior(eye, "y", "x");
  for (std::size_t i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3));

  // x=0 noiseless, x=1 uniform over two symbols.
  const DiscreteTensor A({{"y", 2}, {"x", 2}}, {1, 0.5, 0, 0.5});
  const auto p = state_epistemic_prior(A, "y", "x");
  CHECK(p[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  CHECK_THROWS_AS(state_epistemic_prior(DiscreteTensor({{"y", 2}, {"x", 1}}, {0.5, 0.6}),
                                        "y", "x"),
                  ContractViolation);
}

TEST_CASE("preference prior with floor") {
  const double e = 1e-4;
  const auto p = preference_prior(DiscreteTensor({{"s", 3}}, {0, 0, 1}), e);
  CHECK(p[0] == doctest::Approx(e / (1 + 2 * e)).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(1 / (1 + 2 * e)).epsilon(1e-14));
  const auto flat = preference_prior(DiscreteTensor::filled({{"s", 4}}, 1.0), e);
  for (std::size_t i = 0; i < 4; ++i) CHECK(flat[i] == doctest::Approx(0.25));
  CHECK_THROWS_AS(preference_prior(DiscreteTensor::filled({{"s", 2}}, 0.0)),
                  ModelValidationError);
}

TEST_CASE("entering a slip cell scores higher than a deterministic move") {
  const auto spec = GridSpec::default_instance();
  const auto t = build_tensors(spec);
  const int here = spec.cell(2, 2);  // right of it is the first slip cell
  REQUIRE(spec.slip_cells.count(spec.cell(2, 3)));
  const auto q_prev = DiscreteTensor::one_hot({"x@prev", static_cast<std::size_t>(spec.cells())},
                                              static_cast<std::size_t>(here));
  const auto j = local_joint(t.B, q_prev, DiscreteTensor::uniform({{"u", 4}}));
  const auto p = control_epistemic_prior(j, "u", {"x@prev"});
  CHECK(p[kRight] > p[kUp]);
  CHECK(p[kRight] > p[kLeft]);
  CHECK(p[kUp] == doctest::Approx(p[kLeft]));
}

TEST_CASE("key prior is uniform when the key is never in view") {
  // Every candidate term is deterministic, so all scores vanish.
  MiniGridEnv env;
  env.reset(3);
  auto model = env.agent_model();
  model.horizon = 2;
  auto mg = build_graph(model);
  const auto m = run_inference(mg.graph, 1);
  for (const auto& spec : mg.epistemic) {
    const auto p = factored_epistemic_prior(spec, m);
    for (std::size_t i = 1; i < p.size(); ++i) {
      CHECK(p[i] == doctest::Approx(p[0]).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: score equals expected conditional entropy") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 300; ++i) {
    const std::size_t nx = 2 + rng() % 3, nu = 2 + rng() % 2;
    const auto B = random_conditional(rng, {{"x", nx}, {"xp", nx}, {"u", nu}}, "x", 0.3);
    const auto j = local_joint(B, random_distribution(rng, {"xp", nx}, 0.3),
                               random_distribution(rng, {"u", nu}, 0.3));
    const auto s = entropy_difference_score(j, {"xp"}, "u");
    const auto ju = j.permuted({"u", "xp", "x"});
    for (std::size_t u = 0; u < nu; ++u) {
      double mass = 0.0, expect = 0.0;
      for (std::size_t a = 0; a < nx; ++a) {
        double col = 0.0, h = 0.0;
        for (std::size_t b = 0; b < nx; ++b) col += ju[(u * nx + a) * nx + b];
        for (std::size_t b = 0; b < nx; ++b) {
          const double p = ju[(u * nx + a) * nx + b];
          if (p > 0.0) h -= p / col * std::log(p / col);
        }
        mass += col;
        expect += col * h;
      }
      const double ref = mass > 0.0 ? expect / mass : 0.0;
      CHECK(std::abs(s[u] - ref) < 1e-12);
      CHECK(s[u] >= 0.0);
    }
  }
}

TEST_CASE("property: sparse and dense scores agree on planner joints") {
  const auto spec = GridSpec::default_instance();
  auto model = grid_model(spec);
  model.horizon = 4;
  auto mg = build_graph(model);
  const auto m = run_inference(mg.graph, 2);
  for (const auto& p : mg.epistemic) {
    std::vector<double> dense(m.edge_marginal(p.target_edge).size(), 0.0);
    for (const auto& term : p.terms) {
      const auto s = entropy_difference_score(m.node_joint(term.source_node),
                                              term.subset_axes, term.conditioning_axis);
      for (std::size_t c = 0; c < dense.size(); ++c) dense[c] += term.entropy_sign * s[c];
    }
    const auto sparse = epistemic_scores(p, m);
    for (std::size_t c = 0; c < dense.size(); ++c) {
      CHECK(std::abs(sparse[c] - dense[c]) < 1e-12);
    }
  }
}

TEST_CASE("property: adding a constant to scores leaves the prior unchanged") {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s(2 + rng() % 5);
    for (double& v : s) v = std::normal_distribution<double>(0, 3)(rng);
    auto shifted = s;
    const double c = std::normal_distribution<double>(0, 100)(rng);
    for (double& v : shifted) v += c;
    const Axis a{"u", s.size()};
    CHECK(max_abs_difference(softmax(DiscreteTensor::signed_values({a}, s)),
                             softmax(DiscreteTensor::signed_values({a}, shifted))) <
          1e-12);
  }
}
