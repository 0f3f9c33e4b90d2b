#include "efe/minigrid_env.hpp"

#include <deque>
#include <set>

#include "efe/epistemic.hpp"
#include "efe/error.hpp"

namespace efe {
namespace {

constexpr int kDr[4] = {-1, 0, 1, 0};
constexpr int kDc[4] = {0, 1, 0, -1};

enum class Cell { kFloor, kWall, kClosedDoor, kOpenDoor, kKey, kGoal };

Cell cell_at(const MiniGridSpec& g, const MiniState& st, int r, int c) {
  if (r < 0 || r >= g.size || c < 0 || c >= g.size) return Cell::kWall;
  if (c == g.wall_col) {
    if (r != st.d) return Cell::kWall;
    return st.s >= 2 ? Cell::kOpenDoor : Cell::kClosedDoor;
  }
  const int idx = r * g.size + c;
  if (idx == g.goal()) return Cell::kGoal;
  if (st.s == 0 && idx == g.key_cell(st.k)) return Cell::kKey;
  return Cell::kFloor;
}

bool passable(Cell c) {
  return c == Cell::kFloor || c == Cell::kOpenDoor || c == Cell::kGoal;
}

bool opaque(Cell c) { return c == Cell::kWall || c == Cell::kClosedDoor; }

std::size_t symbol(Cell c) {
  switch (c) {
    case Cell::kFloor:
    case Cell::kOpenDoor:
      return kSymFloor;
    case Cell::kWall:
      return kSymWall;
    case Cell::kKey:
      return kSymKey;
    case Cell::kClosedDoor:
    case Cell::kGoal:
      return kSymTarget;
  }
  return kSymUnseen;
}

std::uint64_t draw(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

}  // namespace

void MiniGridSpec::validate() const {
  if (size < 3) throw ModelValidationError("room side must be at least 3");
  if (wall_col < 1 || wall_col > size - 2) {
    throw ModelValidationError("wall column must leave room on both sides");
  }
  if (goal_row < 0 || goal_row >= size || goal_col <= wall_col ||
      goal_col >= size) {
    throw ModelValidationError("goal must lie right of the wall");
  }
  if (view < 3 || view % 2 == 0) throw ModelValidationError("view must be odd");
  if (horizon < 1) throw ModelValidationError("horizon must be positive");
  if (!(preference_floor > 0.0 && preference_floor < 1.0)) {
    throw ModelValidationError("preference floor must be in (0,1)");
  }
}

MiniState minigrid_successor(const MiniGridSpec& g, const MiniState& st,
                             std::size_t action) {
  MiniState n = st;
  const int r = st.l / g.size, c = st.l % g.size;
  const int fr = r + kDr[st.o], fc = c + kDc[st.o];
  const int front = fr * g.size + fc;
  const Cell ahead = cell_at(g, st, fr, fc);
  switch (action) {
    case kTurnLeft:
      n.o = (st.o + 3) % 4;
      break;
    case kTurnRight:
      n.o = (st.o + 1) % 4;
      break;
    case kForward:
      // The goal ends the episode, so the model keeps the agent there.
      if (st.l != g.goal() && passable(ahead)) n.l = front;
      break;
    case kPickup:
      if (st.s == 0 && ahead == Cell::kKey) n.s = 1;
      break;
    case kToggle:
      if (st.s == 1 && ahead == Cell::kClosedDoor) n.s = 2;
      break;
    default:
      throw UsageError("door-key action out of range");
  }
  return n;
}

Observation minigrid_render(const MiniGridSpec& g, const MiniState& st) {
  const int v = g.view, half = v / 2;
  const int r0 = st.l / g.size, c0 = st.l % g.size;
  const int right = (st.o + 1) % 4;
  std::vector<Cell> cells(g.view_cells());
  for (int j = 0; j < v; ++j) {
    for (int i = 0; i < v; ++i) {
      const int fwd = v - 1 - j, lat = i - half;
      const int r = r0 + fwd * kDr[st.o] + lat * kDr[right];
      const int c = c0 + fwd * kDc[st.o] + lat * kDc[right];
      cells[j * v + i] = cell_at(g, st, r, c);
    }
  }
  // The agent's own cell reads as empty floor.
  cells[(v - 1) * v + half] = Cell::kFloor;

  // Line-of-sight propagation from the agent, row by row away from it.
  std::vector<char> mask(cells.size(), 0);
  mask[(v - 1) * v + half] = 1;
  auto at = [&](int i, int j) -> char& { return mask[j * v + i]; };
  for (int j = v - 1; j >= 0; --j) {
    for (int i = 0; i < v - 1; ++i) {
      if (!at(i, j) || opaque(cells[j * v + i])) continue;
      at(i + 1, j) = 1;
      if (j > 0) {
        at(i + 1, j - 1) = 1;
        at(i, j - 1) = 1;
      }
    }
    for (int i = v - 1; i > 0; --i) {
      if (!at(i, j) || opaque(cells[j * v + i])) continue;
      at(i - 1, j) = 1;
      if (j > 0) {
        at(i - 1, j - 1) = 1;
        at(i, j - 1) = 1;
      }
    }
  }
  Observation obs(cells.size());
  for (std::size_t n = 0; n < cells.size(); ++n) {
    obs[n] = mask[n] ? symbol(cells[n]) : kSymUnseen;
  }
  return obs;
}

int minigrid_solution_length(const MiniGridSpec& g, const MiniState& st) {
  auto code = [&](const MiniState& x) { return (x.l * 4 + x.o) * 3 + x.s; };
  std::vector<int> dist(g.locations() * 12, -1);
  std::deque<MiniState> q{st};
  dist[code(st)] = 0;
  while (!q.empty()) {
    const MiniState x = q.front();
    q.pop_front();
    if (x.l == g.goal()) return dist[code(x)];
    for (std::size_t a = 0; a < 5; ++a) {
      const MiniState y = minigrid_successor(g, x, a);
      if (dist[code(y)] >= 0) continue;
      dist[code(y)] = dist[code(x)] + 1;
      q.push_back(y);
    }
  }
  return -1;
}

std::string view_obs_name(std::size_t cell) { return "y" + std::to_string(cell); }

MiniGridTensors build_minigrid_tensors(const MiniGridSpec& g) {
  g.validate();
  const std::size_t L = g.locations(), K = g.key_candidates(), D = g.doors();
  const std::size_t O = 4, S = 3, U = 5, Y = 5, N = g.view_cells();

  std::vector<double> bl(L * L * O * S * K * D * U, 0.0);
  std::vector<double> bo(O * O * U, 0.0);
  std::vector<double> bs(S * S * L * O * K * D * U, 0.0);
  std::vector<std::vector<double>> a(N, std::vector<double>(Y * L * O * K * D * S, 0.0));

  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < K; ++k) {
          for (std::size_t d = 0; d < D; ++d) {
            const MiniState st{static_cast<int>(l), static_cast<int>(o),
                               static_cast<int>(s), static_cast<int>(k),
                               static_cast<int>(d)};
            for (std::size_t u = 0; u < U; ++u) {
              const MiniState nx = minigrid_successor(g, st, u);
              const auto nl = static_cast<std::size_t>(nx.l);
              const auto ns = static_cast<std::size_t>(nx.s);
              // l | l@prev, o@prev, s@prev, k, d, u
              bl[(((((nl * L + l) * O + o) * S + s) * K + k) * D + d) * U + u] = 1.0;
              // s | s@prev, l@prev, o@prev, k, d, u
              bs[(((((ns * S + s) * L + l) * O + o) * K + k) * D + d) * U + u] = 1.0;
            }
            const Observation obs = minigrid_render(g, st);
            for (std::size_t n = 0; n < N; ++n) {
              // y | l, o, k, d, s
              a[n][(((obs[n] * L + l) * O + o) * K + k) * D * S + d * S + s] = 1.0;
            }
          }
        }
      }
    }
  }
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t u = 0; u < U; ++u) {
      const MiniState nx = minigrid_successor(g, {0, static_cast<int>(o), 0, 0, 0}, u);
      bo[(static_cast<std::size_t>(nx.o) * O + o) * U + u] = 1.0;
    }
  }

  MiniGridTensors t;
  t.Bl = make_template(
      "Bl", "l",
      DiscreteTensor({{"l", L}, {"l@prev", L}, {"o@prev", O}, {"s@prev", S},
                      {"k", K}, {"d", D}, {"u", U}},
                     std::move(bl)));
  t.Bo = make_template("Bo", "o",
                       DiscreteTensor({{"o", O}, {"o@prev", O}, {"u", U}},
                                      std::move(bo)));
  t.Bs = make_template(
      "Bs", "s",
      DiscreteTensor({{"s", S}, {"s@prev", S}, {"l@prev", L}, {"o@prev", O},
                      {"k", K}, {"d", D}, {"u", U}},
                     std::move(bs)));
  for (std::size_t n = 0; n < N; ++n) {
    const std::string y = view_obs_name(n);
    t.A.push_back(make_template(
        "A" + std::to_string(n), y,
        DiscreteTensor({{y, Y}, {"l", L}, {"o", O}, {"k", K}, {"d", D}, {"s", S}},
                       std::move(a[n]))));
  }
  t.pref_l = preference_prior(
      DiscreteTensor::one_hot({"l", L}, static_cast<std::size_t>(g.goal())),
      g.preference_floor);
  t.pref_s = preference_prior(DiscreteTensor::one_hot({"s", S}, 2),
                              g.preference_floor);
  return t;
}

ModelSpec minigrid_model(const MiniGridSpec& g, const MiniGridTensors& t,
                         int start_l, int start_o) {
  const std::size_t L = g.locations(), K = g.key_candidates(), D = g.doors();
  ModelSpec m;
  m.states = {{"l", L}, {"o", 4}, {"s", 3}};
  m.statics = {{"k", K}, {"d", D}};
  m.control = {"u", 5};
  for (std::size_t n = 0; n < g.view_cells(); ++n) {
    m.observations.push_back({view_obs_name(n), 5});
  }
  m.initial.emplace("l", DiscreteTensor::one_hot({"l", L},
                                                 static_cast<std::size_t>(start_l)));
  m.initial.emplace("o", DiscreteTensor::one_hot({"o", 4},
                                                 static_cast<std::size_t>(start_o)));
  m.initial.emplace("s", DiscreteTensor::one_hot({"s", 3}, 0));
  // The key cannot lie under the agent.
  std::vector<double> pk(K, 1.0);
  for (std::size_t k = 0; k < K; ++k) {
    if (g.key_cell(static_cast<int>(k)) == start_l) pk[k] = 0.0;
  }
  m.initial.emplace("k", normalize(DiscreteTensor({{"k", K}}, std::move(pk))));
  m.initial.emplace("d", DiscreteTensor::uniform({{"d", D}}));
  m.control_prior = DiscreteTensor::uniform({{"u", 5}});
  m.transitions = {t.Bl, t.Bo, t.Bs};
  m.likelihoods = t.A;
  m.preferences.emplace("l", t.pref_l);
  m.preferences.emplace("s", t.pref_s);
  m.horizon = g.horizon;
  m.validate();
  return m;
}

MiniGridEnv::MiniGridEnv(MiniGridSpec spec)
    : spec_(spec), tensors_(build_minigrid_tensors(spec_)) {}

Observation MiniGridEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto K = spec_.key_candidates();
  // Resample until the layout is solvable within the horizon.
  for (;;) {
    MiniState st;
    st.k = static_cast<int>(draw(rng, K));
    st.d = static_cast<int>(draw(rng, spec_.doors()));
    int start;
    do {
      start = spec_.key_cell(static_cast<int>(draw(rng, K)));
    } while (start == spec_.key_cell(st.k));
    st.l = start;
    st.o = static_cast<int>(draw(rng, 4));
    st.s = 0;
    const int len = minigrid_solution_length(spec_, st);
    if (len >= 0 && len <= spec_.horizon) return set_state(st);
  }
}

Observation MiniGridEnv::set_state(const MiniState& st) {
  state_ = st;
  start_ = st;
  t_ = 0;
  done_ = st.l == spec_.goal();
  return minigrid_render(spec_, state_);
}

StepResult MiniGridEnv::step(std::size_t action) {
  if (done_) throw UsageError("step after the episode ended");
  if (action >= 5) throw UsageError("door-key action out of range");
  state_ = minigrid_successor(spec_, state_, action);
  ++t_;
  StepResult r;
  if (state_.l == spec_.goal()) {
    r.reward = 1.0 - 0.9 * static_cast<double>(t_) / spec_.horizon;
    done_ = true;
  }
  if (t_ >= spec_.horizon) done_ = true;
  r.done = done_;
  r.observation = minigrid_render(spec_, state_);
  return r;
}

std::vector<std::size_t> MiniGridEnv::observation_alphabets() const {
  return std::vector<std::size_t>(spec_.view_cells(), 5);
}

ModelSpec MiniGridEnv::agent_model() const {
  return minigrid_model(spec_, tensors_, start_.l, start_.o);
}

std::vector<int> MiniGridEnv::state_vector() const {
  return {state_.l, state_.o, state_.s, state_.k, state_.d};
}

std::string MiniGridEnv::render_state(const std::vector<int>& v) const {
  if (v.size() != 5) throw UsageError("door-key state needs 5 entries");
  const MiniState st{v[0], v[1], v[2], v[3], v[4]};
  static const char kArrow[4] = {'^', '>', 'v', '<'};
  std::string out;
  for (int r = -1; r <= spec_.size; ++r) {
    for (int c = -1; c <= spec_.size; ++c) {
      char ch = '.';
      switch (cell_at(spec_, st, r, c)) {
        case Cell::kWall: ch = '#'; break;
        case Cell::kClosedDoor: ch = 'D'; break;
        case Cell::kOpenDoor: ch = '/'; break;
        case Cell::kKey: ch = 'K'; break;
        case Cell::kGoal: ch = 'G'; break;
        case Cell::kFloor: break;
      }
      if (r * spec_.size + c == st.l && r >= 0 && c >= 0 && r < spec_.size &&
          c < spec_.size) {
        ch = kArrow[st.o];
      }
      out += ch;
    }
    out += '\n';
  }
  return out;
}

std::optional<int> MiniGridEnv::key_visibility_step(
    const EpisodeRecord& record) const {
  for (std::size_t i = 0; i < record.observations.size(); ++i) {
    for (auto sym : record.observations[i]) {
      if (sym == kSymKey) return static_cast<int>(i);
    }
  }
  return std::nullopt;
}

}  // namespace efe
