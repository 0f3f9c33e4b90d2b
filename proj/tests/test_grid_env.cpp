#include <doctest.h>

#include <cmath>

#include "efe/error.hpp"
#include "efe/grid_env.hpp"
#include "efe/harness.hpp"

using namespace efe;

TEST_CASE("default instance") {
  const auto s = GridSpec::default_instance();
  CHECK_NOTHROW(s.validate());
  CHECK(s.cells() == 45);
  CHECK(s.shortest_path(false) == 8);
  CHECK(s.shortest_path(true) > 8);
  for (const auto& [c, p] : s.slip_cells) CHECK(s.sink_cells.count(s.slip_target(c)));
}

TEST_CASE("config parser") {
  const auto s = parse_grid_config(
      "# small\nwidth = 4\nheight = 3\nstart = 0,0\ngoal = 0,3  # corner\n"
      "sinks = 1,1 1,2\nslips = 0,1:0.25 0,2:0.5\nobs_noise = 0\nhorizon = 6\n");
  CHECK(s.width == 4);
  CHECK(s.goal == 3);
  CHECK(s.sink_cells == std::set<int>{5, 6});
  CHECK(s.slip_cells.at(1) == 0.25);
  CHECK(s.slip_target(1) == 5);
  CHECK(s.horizon == 6);
  CHECK(s.cell_noise.empty());

  // Round trip.
  const auto r = parse_grid_config(s.to_config());
  CHECK(r.to_config() == s.to_config());

  // Overrides on the default layout keep its shape.
  const auto d = parse_grid_config("horizon = 20\n");
  CHECK(d.horizon == 20);
  CHECK(d.sink_cells == GridSpec::default_instance().sink_cells);
}

TEST_CASE("config parser errors") {
  CHECK_THROWS_AS(parse_grid_config("colour = red\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_grid_config("width 4\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_grid_config("start = 9,9\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_grid_config("obs_noise = lots\n"), ConfigurationError);
  CHECK_THROWS_AS(parse_grid_config("slips = 0,0:0.5\n"), ConfigurationError);  // no sink
  CHECK_THROWS_AS(parse_grid_config("goal = 2,0\n"), ConfigurationError);  // = start
  CHECK_THROWS_AS(load_grid_config("/nonexistent/grid.cfg"), ConfigurationError);
}

TEST_CASE("noiseless observation model is the identity") {
  auto s = GridSpec::default_instance();
  s.obs_noise = 0.0;
  s.cell_noise.clear();
  const auto t = build_tensors(s);
  const auto A = t.A.permuted({"y", "x"});
  for (int y = 0; y < 45; ++y) {
    for (int x = 0; x < 45; ++x) CHECK(A[y * 45 + x] == (x == y ? 1.0 : 0.0));
  }
}

TEST_CASE("tensor tables are normalized") {
  const auto t = build_tensors(GridSpec::default_instance());
  CHECK(normalize(t.B, {"x"}).size() == t.B.size());
  CHECK(max_abs_difference(normalize(t.B, {"x"}), t.B) < 1e-15);
  CHECK(max_abs_difference(normalize(t.A, {"y"}), t.A) < 1e-15);
  CHECK(t.prior.is_normalized());
  CHECK(t.preference.is_normalized());
}

TEST_CASE("slip and wall transitions") {
  const auto s = GridSpec::default_instance();
  // Entering the first slip cell.
  const auto p = grid_transition(s, s.cell(2, 2), kRight);
  CHECK(p[s.cell(2, 3)] == doctest::Approx(0.5));
  CHECK(p[s.slip_target(s.cell(2, 3))] == doctest::Approx(0.5));
  // Forward into the outer wall stays put.
  CHECK(grid_transition(s, s.cell(0, 0), kUp)[s.cell(0, 0)] == 1.0);
  // Absorbing cells stay.
  CHECK(grid_transition(s, s.goal, kLeft)[s.goal] == 1.0);
}

TEST_CASE("rewards and termination") {
  const auto s = GridSpec::default_instance();
  GridEnv env(s);
  env.reset(0);
  env.set_cell(s.cell(2, 7));
  auto r = env.step(kRight);
  CHECK(r.reward == 1.0);
  CHECK(r.done);
  CHECK(env.success());
  CHECK_THROWS_AS(env.step(kLeft), UsageError);

  env.set_cell(s.cell(0, 4));
  r = env.step(kDown);
  CHECK(r.reward == -1.0);
  CHECK(r.done);
  CHECK_FALSE(env.success());

  env.reset(0);
  for (int t = 0; t < s.horizon; ++t) {
    REQUIRE_FALSE(env.done());
    env.step(kUp);
  }
  CHECK(env.done());
}

TEST_CASE("same seed, same observations") {
  GridEnv a(GridSpec::default_instance()), b(GridSpec::default_instance());
  CHECK(a.reset(5) == b.reset(5));
  for (std::size_t act : {kUp, kRight, kRight, kDown, kRight}) {
    const auto ra = a.step(act);
    const auto rb = b.step(act);
    CHECK(ra.observation == rb.observation);
    CHECK(a.cell() == b.cell());
    if (ra.done) break;
  }
}

TEST_CASE("rendering") {
  GridEnv env(GridSpec::default_instance());
  env.reset(0);
  const auto frame = env.render();
  CHECK(frame == ".........\n...###...\nA..~~~..G\n...###...\n...###...\n");
  CHECK(env.render_state({1}).find('S') != std::string::npos);
}

TEST_CASE("simulator matches the model tables (reduced samples)") {
  const auto rows = grid_chi_square(GridSpec::default_instance(), 20000, 3);
  int failed = 0;
  for (const auto& r : rows) failed += r.pass ? 0 : 1;
  CHECK(failed == 0);
}

TEST_CASE("chi-square detects a wrong table") {
  // Simulate one instance, score against another.
  auto other = GridSpec::default_instance();
  for (auto& [c, p] : other.slip_cells) p = 0.3;
  GridEnv env(GridSpec::default_instance());
  env.reset(1);
  std::vector<long> counts(45, 0);
  const int n = 20000, from = other.cell(2, 2);
  for (int i = 0; i < n; ++i) {
    env.set_cell(from);
    env.step(kRight);
    ++counts[static_cast<std::size_t>(env.cell())];
  }
  const auto expected = grid_transition(other, from, kRight);
  double stat = 0.0;
  for (std::size_t i = 0; i < 45; ++i) {
    if (expected[i] > 0) {
      const double e = expected[i] * n;
      stat += (counts[i] - e) * (counts[i] - e) / e;
    }
  }
  CHECK(stat > chi_square_critical(1));
}
