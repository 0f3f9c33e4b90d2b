#include <doctest.h>

#include <algorithm>
#include <random>

#include "efe/checks.hpp"
#include "efe/error.hpp"
#include "efe/grid_env.hpp"
#include "efe/minigrid_env.hpp"
#include "efe/model.hpp"

using namespace efe;

namespace {

int count_kind(const FactorGraph& g, NodeKind kind) {
  int n = 0;
  for (const auto& id : g.node_ids()) n += g.node(id).kind == kind ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("gridworld graph at T=2") {
  auto model = grid_model(GridSpec::default_instance());
  model.horizon = 2;
  const auto mg = build_graph(model);
  const auto& g = mg.graph;
  CHECK(count_kind(g, NodeKind::kCpt) == 4);  // 2 transitions, 2 observations
  CHECK(count_kind(g, NodeKind::kPrior) == 3);  // x0 and two control priors
  CHECK(count_kind(g, NodeKind::kPreferencePrior) == 2);
  CHECK(count_kind(g, NodeKind::kEpistemicPrior) == 4);
  CHECK(mg.epistemic.size() == 4);
  auto edges = g.edge_ids();
  std::sort(edges.begin(), edges.end());
  CHECK(edges == std::vector<std::string>{"u[1]", "u[2]", "x[0]", "x[1]", "x[2]",
                                          "y[1]", "y[2]"});
  CHECK(g.is_tree());
}

TEST_CASE("single-slice model") {
  auto model = grid_model(GridSpec::default_instance());
  model.horizon = 1;
  const auto mg = build_graph(model);
  CHECK(mg.graph.has_node("B[1]"));
  CHECK_FALSE(mg.graph.has_node("B[2]"));
}

TEST_CASE("build options drop node families") {
  auto model = grid_model(GridSpec::default_instance());
  model.horizon = 3;
  BuildOptions o;
  o.epistemic = false;
  o.preferences = false;
  o.control_prior = false;
  const auto mg = build_graph(model, o);
  CHECK(count_kind(mg.graph, NodeKind::kEpistemicPrior) == 0);
  CHECK(count_kind(mg.graph, NodeKind::kPreferencePrior) == 0);
  CHECK(count_kind(mg.graph, NodeKind::kPrior) == 1);
  CHECK(mg.epistemic.empty());
}

TEST_CASE("door-key graph has one edge per state factor per slice") {
  MiniGridEnv env;
  env.reset(1);
  auto model = env.agent_model();
  model.horizon = 2;
  const auto mg = build_graph(model);
  for (const char* e : {"l[0]", "o[0]", "s[0]", "l[2]", "o[2]", "s[2]", "k", "d", "u[2]"}) {
    CHECK(mg.graph.has_edge(e));
  }
  CHECK(mg.graph.has_edge("y48[2]"));
  CHECK_FALSE(mg.graph.has_edge("k[1]"));
}

TEST_CASE("validation catches malformed models") {
  std::mt19937_64 rng(1);
  const auto good = random_chain_model(rng);
  CHECK_NOTHROW(good.validate());

  auto m = good;
  m.transitions[0].table = m.transitions[0].table.renamed("x@prev", "z@prev");
  CHECK_THROWS_AS(m.validate(), ModelValidationError);

  m = good;
  m.initial.clear();
  CHECK_THROWS_AS(m.validate(), ModelValidationError);

  m = good;
  m.horizon = 0;
  CHECK_THROWS_AS(m.validate(), ModelValidationError);

  m = good;
  m.transitions.push_back(m.transitions[0]);
  CHECK_THROWS_AS(m.validate(), ModelValidationError);

  m = good;
  m.likelihoods[0].table = m.likelihoods[0].table.renamed("x", "w");
  CHECK_THROWS_AS(m.validate(), ModelValidationError);

  m = good;
  m.preferences["u"] = m.control_prior;
  CHECK_THROWS_AS(m.validate(), ModelValidationError);

  CHECK_THROWS_AS(make_template("B", "x",
                                DiscreteTensor::filled({{"x", 2}, {"x@prev", 2}}, 1.0)),
                  ModelValidationError);
}

TEST_CASE("edge names") {
  CHECK(edge_name("x", 3) == "x[3]");
  const auto model = grid_model(GridSpec::default_instance());
  CHECK(resolve_axis(model, "x@prev", 2) == "x[1]");
  CHECK(resolve_axis(model, "u", 2) == "u[2]");
}

TEST_CASE("with_initial replaces priors and horizon") {
  const auto model = grid_model(GridSpec::default_instance());
  const auto p = DiscreteTensor::one_hot({"x", 45}, 7);
  const auto m = with_initial(model, {{"x", p}}, 3);
  CHECK(m.horizon == 3);
  CHECK(m.initial.at("x")[7] == 1.0);
}
