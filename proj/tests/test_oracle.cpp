#include <doctest.h>

#include <cmath>
#include <random>

#include "efe/checks.hpp"
#include "efe/epistemic.hpp"
#include "efe/error.hpp"
#include "efe/harness.hpp"
#include "efe/oracle.hpp"

using namespace efe;

namespace {

// Two states, two actions; u=0 stays, u=1 flips; observations copy x.
ModelSpec deterministic_model(const DiscreteTensor& pref, int T) {
  ModelSpec m;
  m.states = {{"x", 2}};
  m.control = {"u", 2};
  m.observations = {{"y", 2}};
  m.initial["x"] = DiscreteTensor({{"x", 2}}, {1.0, 0.0});
  m.control_prior = DiscreteTensor::uniform({{"u", 2}});
  m.transitions.push_back(make_template(
      "B", "x", DiscreteTensor({{"x", 2}, {"x@prev", 2}, {"u", 2}},
                               {1, 0, 0, 1, 0, 1, 1, 0})));
  m.likelihoods.push_back(
      make_template("A", "y", DiscreteTensor({{"y", 2}, {"x", 2}}, {1, 0, 0, 1})));
  m.preferences["x"] = pref;
  m.horizon = T;
  return m;
}

// State 0 start, 1 goal, 2 trap. u=0 moves to the goal safely with
// probability 0.5 (else stays), u=1 reaches the goal with 0.9 but may fall in
// the trap. Observations are noiseless.
ModelSpec slip_model() {
  ModelSpec m;
  m.states = {{"x", 3}};
  m.control = {"u", 2};
  m.observations = {{"y", 3}};
  m.initial["x"] = DiscreteTensor::one_hot({"x", 3}, 0);
  m.control_prior = DiscreteTensor::uniform({{"u", 2}});
  std::vector<double> b(18, 0.0);
  auto set = [&](std::size_t x, std::size_t xp, std::size_t u, double p) {
    b[(x * 3 + xp) * 2 + u] = p;
  };
  set(0, 0, 0, 0.5);
  set(1, 0, 0, 0.5);
  set(1, 0, 1, 0.9);
  set(2, 0, 1, 0.1);
  for (std::size_t u = 0; u < 2; ++u) {
    set(1, 1, u, 1.0);
    set(2, 2, u, 1.0);
  }
  m.transitions.push_back(
      make_template("B", "x", DiscreteTensor({{"x", 3}, {"x@prev", 3}, {"u", 2}}, b)));
  m.likelihoods.push_back(make_template(
      "A", "y", DiscreteTensor({{"y", 3}, {"x", 3}}, {1, 0, 0, 0, 1, 0, 0, 0, 1})));
  m.preferences["x"] = preference_prior(DiscreteTensor::one_hot({"x", 3}, 1), 1e-4);
  m.horizon = 1;
  return m;
}

}  // namespace

TEST_CASE("noiseless model with the reached state preferred has zero G") {
  const auto m = deterministic_model(DiscreteTensor::one_hot({"x", 2}, 1), 2);
  CHECK(exact_efe(m, {1, 0}) == 0.0);
  CHECK(exact_efe(m, {0, 1}) == 0.0);
}

TEST_CASE("noiseless model with another state preferred pays the floor") {
  const double eps = 1e-4;
  const auto pref = preference_prior(DiscreteTensor::one_hot({"x", 2}, 0), eps);
  const auto m = deterministic_model(pref, 2);
  // Ends in state 1, whose preference is eps / (1 + eps).
  CHECK(exact_efe(m, {1, 0}) == doctest::Approx(-std::log(eps / (1 + eps))).epsilon(1e-12));
  CHECK(exact_efe(m, {0, 0}) == doctest::Approx(std::log1p(eps)).epsilon(1e-12));
}

TEST_CASE("risky sequence costs more than the safe one") {
  const auto m = slip_model();
  const double safe = exact_efe(m, {0});
  const double risky = exact_efe(m, {1});
  // Hand evaluation of both sums.
  const double pg = 1 / (1 + 2e-4), pe = 1e-4 / (1 + 2e-4);
  const double ref_safe = 0.5 * (std::log(0.5) - std::log(pe)) +
                          0.5 * (std::log(0.5) - std::log(pg));
  const double ref_risky = 0.9 * (std::log(0.9) - std::log(pg)) +
                           0.1 * (std::log(0.1) - std::log(pe));
  CHECK(safe == doctest::Approx(ref_safe).epsilon(1e-12));
  CHECK(risky == doctest::Approx(ref_risky).epsilon(1e-12));
  CHECK(safe > risky);  // with T=1 the safe move rarely arrives
  auto m2 = m;
  m2.horizon = 3;
  const auto all = evaluate_all_policies(m2);
  REQUIRE(all.sequences.size() == 8);
  // Three safe tries reach the goal with 7/8; one risky try with 0.9. Under a
  // strong goal preference the trap dominates the cost.
  CHECK(all.G[0] < all.G[7]);
}

TEST_CASE("sequence enumeration order and guard") {
  const auto s = all_sequences(2, 3);
  REQUIRE(s.size() == 8);
  CHECK(s[0] == std::vector<std::size_t>{0, 0, 0});
  CHECK(s[1] == std::vector<std::size_t>{0, 0, 1});
  CHECK(s[7] == std::vector<std::size_t>{1, 1, 1});
  CHECK(all_sequences(4, 6).size() == 4096);
  CHECK_THROWS_AS(all_sequences(4, 7), GuardExceededError);
  CHECK_THROWS_AS(exact_efe(slip_model(), {0, 0}), UsageError);
}

TEST_CASE("vfe at the exact posterior is minus log evidence") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_chain_model(rng, 2, 2);
    std::vector<DiscreteTensor> f;
    const auto gq = generative_chain(m);
    const auto joint = chain_joint(m, gq);
    // Generative factors only, with y clamped to an arbitrary observation.
    for (const auto& t : augmented_factors(m, {})) f.push_back(t);
    f.erase(f.begin() + 1);  // drop the preference
    AxisSet hidden;
    for (const auto& a : joint.axes()) {
      if (a.name[0] == 'y') {
        f.push_back(DiscreteTensor::one_hot(a, rng() % a.card));
      } else {
        hidden.insert(a.name);
      }
    }
    const auto post = contract(f, hidden);
    const double evidence = post.sum();
    const auto q = post.scaled(1.0 / evidence);
    // Factors over the hidden axes: the clamped generative product.
    CHECK(exact_vfe(q, {post}) == doctest::Approx(-std::log(evidence)).epsilon(1e-12));
    CHECK(exact_vfe(q, f) == doctest::Approx(-std::log(evidence)).epsilon(1e-12));
  }
}

TEST_CASE("vfe is infinite on a support violation") {
  const DiscreteTensor q({{"a", 2}}, {0.5, 0.5});
  CHECK(std::isinf(exact_vfe(q, {DiscreteTensor({{"a", 2}}, {1.0, 0.0})})));
  CHECK_THROWS_AS(exact_vfe(q, {DiscreteTensor({{"b", 2}}, {1.0, 1.0})}),
                  StructuralError);
}

TEST_CASE("oracle vfe equals bethe free energy at the planner fixed point") {
  // A flat preference keeps q(u_t) independent of the state path, so the
  // posterior lies in the chain family.
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = random_chain_model(rng, 2, 3);
    model.preferences["x"] = DiscreteTensor::uniform({{"x", model.states[0].card}});
    auto mg = build_graph(model);
    const auto m = run_inference(mg.graph, 2);
    const auto q = chain_from_marginals(model, m);
    std::vector<DiscreteTensor> tables;
    for (const auto& id : mg.graph.node_ids()) tables.push_back(mg.graph.table(id));
    const double vfe = exact_vfe(chain_joint(model, q), tables);
    CHECK(vfe == doctest::Approx(bethe_free_energy(m)).epsilon(1e-10));
    CHECK(approx_equal(chain_joint(model, q), bethe_joint(mg.graph, m), 1e-12));
  }
}

TEST_CASE("bethe joint is the exact joint on trees") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto model = random_chain_model(rng, 2, 3);
    auto mg = build_graph(model);
    const auto m = run_inference(mg.graph, 2);
    std::vector<DiscreteTensor> tables;
    AxisSet all;
    for (const auto& id : mg.graph.node_ids()) tables.push_back(mg.graph.table(id));
    for (const auto& e : mg.graph.edge_ids()) all.insert(e);
    const auto p = normalize(contract(tables, all));
    CHECK(max_abs_difference(p, bethe_joint(mg.graph, m)) < 1e-12);
  }
}

TEST_CASE("property: decomposition residual vanishes on random chains") {
  const auto r = check_decomposition(200, 7);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("property: decomposition detects tampered priors") {
  std::mt19937_64 rng(9);
  int detected = 0;
  for (int i = 0; i < 50; ++i) {
    const auto model = random_chain_model(rng);
    const auto q = random_chain_posterior(rng, model);
    const auto rep = verify_decomposition(model, q);
    auto priors = chain_epistemic_priors(model, q);
    priors.control[0] = random_distribution(rng, priors.control[0].axes()[0]);
    const double lhs = exact_vfe(chain_joint(model, q), augmented_factors(model, priors));
    detected += std::abs(lhs - rep.rhs - rep.constant) > 1e-6 ? 1 : 0;
  }
  CHECK(detected >= 45);
}

TEST_CASE("generative chain reproduces the model") {
  std::mt19937_64 rng(11);
  const auto m = random_chain_model(rng);
  const auto q = generative_chain(m);
  CHECK(q.horizon() == m.horizon);
  CHECK(approx_equal(q.trans[0], m.transitions[0].table, 0.0));
  // E_q[G] with q = p has zero path KL: complexity is the control KL only.
  const auto rep = verify_decomposition(m, q);
  CHECK(rep.residual < 1e-9);
}
