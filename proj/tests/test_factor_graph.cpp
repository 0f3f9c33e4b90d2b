#include <doctest.h>

#include <cmath>
#include <random>

#include "efe/checks.hpp"
#include "efe/error.hpp"
#include "efe/factor_graph.hpp"
#include "efe/grid_env.hpp"

using namespace efe;

namespace {

// f(s1..s4) = fa(s1) fb(s1,s2) fc(s3) fd(s2,s3,s4)
std::vector<std::pair<std::string, DiscreteTensor>> four_factor_model(
    std::mt19937_64& rng) {
  return {{"fa", random_tensor(rng, {{"s1", 3}})},
          {"fb", random_tensor(rng, {{"s1", 3}, {"s2", 2}})},
          {"fc", random_tensor(rng, {{"s3", 2}})},
          {"fd", random_tensor(rng, {{"s2", 2}, {"s3", 2}, {"s4", 4}})}};
}

}  // namespace

TEST_CASE("four-factor graph adjacency") {
  std::mt19937_64 rng(1);
  auto g = build_graph(four_factor_model(rng));
  CHECK(g.node_ids().size() == 4);
  CHECK(g.edge_ids().size() == 4);
  CHECK(g.neighbours("s1") == std::vector<std::string>{"fa", "fb"});
  CHECK(g.neighbours("s2") == std::vector<std::string>{"fb", "fd"});
  CHECK(g.neighbours("s3") == std::vector<std::string>{"fc", "fd"});
  CHECK(g.neighbours("s4") == std::vector<std::string>{"fd"});
  CHECK(g.is_tree());
}

TEST_CASE("four-factor graph marginal of s2 by hand") {
  std::mt19937_64 rng(2);
  const auto f = four_factor_model(rng);
  auto g = build_graph(f);
  const auto m = run_inference(g, 1);
  // Forward message into s2 and backward message from fd, written out.
  const auto& fa = f[0].second;
  const auto& fb = f[1].second;
  const auto& fc = f[2].second;
  const auto& fd = f[3].second;
  std::vector<double> p(2, 0.0);
  for (std::size_t s2 = 0; s2 < 2; ++s2) {
    double fwd = 0.0, bwd = 0.0;
    for (std::size_t s1 = 0; s1 < 3; ++s1) {
      const std::size_t i[] = {s1}, j[] = {s1, s2};
      fwd += fa.at(i) * fb.at(j);
    }
    for (std::size_t s3 = 0; s3 < 2; ++s3) {
      for (std::size_t s4 = 0; s4 < 4; ++s4) {
        const std::size_t i[] = {s3}, j[] = {s2, s3, s4};
        bwd += fc.at(i) * fd.at(j);
      }
    }
    p[s2] = fwd * bwd;
  }
  const double z = p[0] + p[1];
  const auto q = m.edge_marginal("s2");
  CHECK(q[0] == doctest::Approx(p[0] / z).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(p[1] / z).epsilon(1e-12));
  CHECK(bethe_free_energy(m) == doctest::Approx(-std::log(contract(
                                    {fa, fb, fc, fd}, {}).sum())).epsilon(1e-12));
}

TEST_CASE("sum-product message examples") {
  FactorNode n{"f", NodeKind::kPrior,
               DiscreteTensor::filled({{"a", 2}, {"b", 3}}, 1.0), {"a", "b"}, ""};
  const auto msg = sum_product_message(
      n, {{"a", DiscreteTensor::uniform({{"a", 2}})}}, "b");
  for (std::size_t i = 0; i < 3; ++i) CHECK(msg[i] == doctest::Approx(1.0 / 3));

  std::mt19937_64 rng(5);
  const auto t = random_tensor(rng, {{"a", 2}, {"b", 3}});
  FactorNode m{"g", NodeKind::kPrior, t, {"a", "b"}, ""};
  const auto in = random_distribution(rng, {"a", 2});
  const auto out = sum_product_message(m, {{"a", in}}, "b");
  CHECK(approx_equal(out, normalize(contract({t, in}, {"b"})), 1e-14));
  CHECK_THROWS(sum_product_message(m, {}, "b"));
}

TEST_CASE("bethe free energy of a single normalized prior is zero") {
  auto g = build_graph({{"p", DiscreteTensor({{"x", 3}}, {0.2, 0.3, 0.5})}});
  CHECK(std::abs(bethe_free_energy(run_inference(g, 1))) < 1e-15);
}

TEST_CASE("fully observed chain gives one-hot beliefs") {
  std::mt19937_64 rng(8);
  auto g = build_graph({{"p", random_distribution(rng, {"a", 3})},
                        {"t1", random_conditional(rng, {{"b", 3}, {"a", 3}}, "b")},
                        {"t2", random_conditional(rng, {{"c", 3}, {"b", 3}}, "c")}});
  g.observe("a", 1);
  g.observe("b", 2);
  g.observe("c", 0);
  const auto m = run_inference(g, 1);
  CHECK(m.edge_marginal("a")[1] == 1.0);
  CHECK(m.edge_marginal("b")[2] == 1.0);
  CHECK(m.edge_marginal("c")[0] == 1.0);
  g.clear_observation("c");
  const auto m2 = run_inference(g, 1);
  CHECK(m2.edge_marginal("c")[0] < 1.0);
}

TEST_CASE("contradictory evidence names the edge") {
  auto g = build_graph({{"p", DiscreteTensor({{"a", 2}}, {1.0, 0.0})},
                        {"q", DiscreteTensor({{"a", 2}, {"b", 2}}, {1, 0, 0, 1})}});
  g.observe("b", 1);
  try {
    run_inference(g, 1);
    FAIL("expected InconsistentEvidenceError");
  } catch (const InconsistentEvidenceError& e) {
    CHECK((e.edge() == "a" || e.edge() == "b"));
  }
}

TEST_CASE("support violation gives infinite bethe free energy") {
  auto g = build_graph({{"p", DiscreteTensor({{"a", 2}}, {0.5, 0.5})}});
  const auto m = run_inference(g, 1);
  g.set_table("p", DiscreteTensor({{"a", 2}}, {1.0, 0.0}));
  CHECK(std::isinf(bethe_free_energy(g, m)));
}

TEST_CASE("dense and message-based bethe free energy agree") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 50; ++i) {
    auto g = build_graph(random_tree_factors(rng));
    try {
      const auto m = run_inference(g, 2);
      CHECK(bethe_free_energy(g, m) == doctest::Approx(bethe_free_energy(m)).epsilon(1e-10));
    } catch (const InconsistentEvidenceError&) {
    }
  }
}

TEST_CASE("graph structure errors") {
  FactorGraph g;
  g.add_edge("a", 2);
  CHECK_THROWS_AS(g.add_edge("a", 2), StructuralError);
  CHECK_THROWS(g.add_node("f", NodeKind::kPrior, DiscreteTensor::uniform({{"b", 2}})));
  CHECK_THROWS(g.add_node("f", NodeKind::kPrior, DiscreteTensor::uniform({{"a", 3}})));
  CHECK_THROWS(g.observe("a", 5));
  CHECK_THROWS(g.set_schedule({{"nope", "a"}}));
}

TEST_CASE("a cycle is not a tree") {
  auto g = build_graph({{"f", DiscreteTensor::filled({{"a", 2}, {"b", 2}}, 1.0)},
                        {"h", DiscreteTensor::filled({{"a", 2}, {"b", 2}}, 1.0)}});
  CHECK_FALSE(g.is_tree());
}

TEST_CASE("property: exact marginals and bethe free energy on random trees") {
  const auto r = check_tree_inference(300, 17);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("property: local consistency of node joints and edge marginals") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    const auto f = random_tree_factors(rng);
    auto g = build_graph(f);
    std::vector<DiscreteTensor> ts;
    for (const auto& [id, t] : f) ts.push_back(t);
    if (!(contract(ts, {}).sum() > 0.0)) continue;
    const auto m = run_inference(g, 1);
    for (const auto& e : g.edge_ids()) {
      for (const auto& n : g.neighbours(e)) {
        CHECK(max_abs_difference(marginal(m.node_joint(n), {e}), m.edge_marginal(e)) <
              1e-8);
      }
    }
  }
}

TEST_CASE("property: chain messages reach a fixed point after two sweeps") {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::pair<std::string, DiscreteTensor>> f{
        {"p0", random_distribution(rng, {"x0", 3})}};
    for (int t = 1; t <= 6; ++t) {
      const std::string x = "x" + std::to_string(t), xp = "x" + std::to_string(t - 1);
      f.emplace_back("b" + std::to_string(t),
                     random_conditional(rng, {{x, 3}, {xp, 3}}, x));
      f.emplace_back("o" + std::to_string(t), random_tensor(rng, {{x, 3}}));
    }
    auto g = build_graph(f);
    run_inference(g, 2);
    CHECK(g.last_sweep_delta() < 1e-10);
  }
}

TEST_CASE("graph dump lists nodes and edges") {
  auto g = build_graph(grid_model(GridSpec::default_instance()));
  const auto j = g.graph.to_json();
  CHECK(j.dump().find("B[1]") != std::string::npos);
}
