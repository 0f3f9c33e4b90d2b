#include "efe/grid_env.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "efe/epistemic.hpp"
#include "efe/error.hpp"

namespace efe {
namespace {

constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};

// Neighbour in direction a, or -1 off the grid.
int neighbour(const GridSpec& s, int cell, std::size_t a) {
  const int r = s.row(cell) + kDr[a], c = s.col(cell) + kDc[a];
  if (r < 0 || r >= s.height || c < 0 || c >= s.width) return -1;
  return s.cell(r, c);
}

bool absorbing(const GridSpec& s, int cell) {
  return cell == s.goal || s.sink_cells.count(cell) > 0;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

int parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigurationError("bad integer '" + s + "' for " + key);
  }
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigurationError("bad number '" + s + "' for " + key);
  }
}

std::pair<int, int> parse_rc(const std::string& s, const std::string& key) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) {
    throw ConfigurationError("expected row,col for " + key + ", got '" + s + "'");
  }
  return {parse_int(s.substr(0, comma), key), parse_int(s.substr(comma + 1), key)};
}

std::string rc(const GridSpec& s, int cell) {
  return std::to_string(s.row(cell)) + "," + std::to_string(s.col(cell));
}

}  // namespace

GridSpec GridSpec::default_instance() {
  GridSpec s;
  s.width = 9;
  s.height = 5;
  s.start = s.cell(2, 0);
  s.goal = s.cell(2, 8);
  for (int r : {1, 3, 4}) {
    for (int c = 3; c <= 5; ++c) s.sink_cells.insert(s.cell(r, c));
  }
  for (int c = 3; c <= 5; ++c) {
    s.slip_cells[s.cell(2, c)] = 0.5;
    s.cell_noise[s.cell(2, c)] = 0.5;
  }
  s.obs_noise = 0.1;
  s.horizon = 12;
  s.preference_floor = 1e-4;
  return s;
}

double GridSpec::noise_at(int c) const {
  const auto it = cell_noise.find(c);
  return it == cell_noise.end() ? obs_noise : it->second;
}

int GridSpec::slip_target(int c) const {
  for (std::size_t a : {kDown, kUp, kLeft, kRight}) {
    const int n = neighbour(*this, c, a);
    if (n >= 0 && sink_cells.count(n)) return n;
  }
  return -1;
}

void GridSpec::validate() const {
  if (width < 1 || height < 1) throw ModelValidationError("empty grid");
  auto in = [&](int c) { return c >= 0 && c < cells(); };
  if (!in(start) || !in(goal)) {
    throw ModelValidationError("start or goal outside the grid");
  }
  if (start == goal) throw ModelValidationError("start equals goal");
  for (int c : sink_cells) {
    if (!in(c)) throw ModelValidationError("sink outside the grid");
    if (c == start || c == goal) {
      throw ModelValidationError("start and goal cannot be sinks");
    }
  }
  for (const auto& [c, p] : slip_cells) {
    if (!in(c)) throw ModelValidationError("slip cell outside the grid");
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ModelValidationError("slip probability outside [0,1]");
    }
    if (sink_cells.count(c) || c == goal) {
      throw ModelValidationError("slip cell " + rc(*this, c) + " is absorbing");
    }
    if (slip_target(c) < 0) {
      throw ModelValidationError("slip cell " + rc(*this, c) +
                                 " has no adjacent sink");
    }
  }
  auto check_noise = [](double n) {
    if (!(n >= 0.0 && n <= 1.0)) {
      throw ModelValidationError("observation noise outside [0,1]");
    }
  };
  check_noise(obs_noise);
  for (const auto& [c, n] : cell_noise) {
    if (!in(c)) throw ModelValidationError("noise cell outside the grid");
    check_noise(n);
  }
  if (horizon < 1) throw ModelValidationError("horizon must be positive");
  if (!(preference_floor > 0.0 && preference_floor < 1.0)) {
    throw ModelValidationError("preference floor must be in (0,1)");
  }
  if (shortest_path(false) < 0) {
    throw ModelValidationError("goal unreachable from start");
  }
}

int GridSpec::shortest_path(bool avoid_slips) const {
  std::vector<int> dist(cells(), -1);
  std::deque<int> q{start};
  dist[start] = 0;
  while (!q.empty()) {
    const int c = q.front();
    q.pop_front();
    if (c == goal) return dist[c];
    for (std::size_t a = 0; a < 4; ++a) {
      const int n = neighbour(*this, c, a);
      if (n < 0 || dist[n] >= 0 || sink_cells.count(n)) continue;
      if (avoid_slips && slip_cells.count(n)) continue;
      dist[n] = dist[c] + 1;
      q.push_back(n);
    }
  }
  return -1;
}

std::string GridSpec::to_config() const {
  std::ostringstream os;
  os << "width = " << width << "\nheight = " << height << "\nstart = "
     << rc(*this, start) << "\ngoal = " << rc(*this, goal) << "\nsinks =";
  for (int c : sink_cells) os << ' ' << rc(*this, c);
  os << "\nslips =";
  for (const auto& [c, p] : slip_cells) os << ' ' << rc(*this, c) << ':' << p;
  os << "\nobs_noise = " << obs_noise << "\ncell_noise =";
  for (const auto& [c, n] : cell_noise) os << ' ' << rc(*this, c) << ':' << n;
  os << "\nhorizon = " << horizon << "\npreference_floor = " << preference_floor
     << '\n';
  return os.str();
}

GridSpec parse_grid_config(const std::string& text) {
  GridSpec s = GridSpec::default_instance();
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  int lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigurationError("line " + std::to_string(lineno) +
                               ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  // Dimensions first so cells can be resolved.
  if (kv.count("width") || kv.count("height")) {
    // Cell indices of the default layout mean nothing on another shape.
    s.sink_cells.clear();
    s.slip_cells.clear();
    s.cell_noise.clear();
    if (kv.count("width")) s.width = parse_int(kv["width"], "width");
    if (kv.count("height")) s.height = parse_int(kv["height"], "height");
  }
  auto cell_of = [&](const std::string& v, const std::string& key) {
    const auto [r, c] = parse_rc(v, key);
    if (r < 0 || r >= s.height || c < 0 || c >= s.width) {
      throw ConfigurationError(key + " cell " + v + " outside the grid");
    }
    return s.cell(r, c);
  };
  auto cell_values = [&](const std::string& v, const std::string& key) {
    std::map<int, double> out;
    for (const auto& w : split_ws(v)) {
      const auto colon = w.find(':');
      if (colon == std::string::npos) {
        throw ConfigurationError("expected row,col:value in " + key);
      }
      out[cell_of(w.substr(0, colon), key)] =
          parse_double(w.substr(colon + 1), key);
    }
    return out;
  };
  for (const auto& [k, v] : kv) {
    if (k == "width" || k == "height") continue;
    if (k == "start") {
      s.start = cell_of(v, k);
    } else if (k == "goal") {
      s.goal = cell_of(v, k);
    } else if (k == "sinks") {
      s.sink_cells.clear();
      for (const auto& w : split_ws(v)) s.sink_cells.insert(cell_of(w, k));
    } else if (k == "slips") {
      s.slip_cells = cell_values(v, k);
    } else if (k == "obs_noise") {
      s.obs_noise = parse_double(v, k);
    } else if (k == "cell_noise") {
      s.cell_noise = cell_values(v, k);
    } else if (k == "horizon") {
      s.horizon = parse_int(v, k);
    } else if (k == "preference_floor") {
      s.preference_floor = parse_double(v, k);
    } else {
      throw ConfigurationError("unknown grid key '" + k + "'");
    }
  }
  try {
    s.validate();
  } catch (const ModelValidationError& e) {
    throw ConfigurationError(e.what());
  }
  return s;
}

GridSpec load_grid_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid_config(ss.str());
}

std::vector<double> grid_transition(const GridSpec& s, int cell,
                                    std::size_t action) {
  std::vector<double> p(s.cells(), 0.0);
  if (absorbing(s, cell)) {
    p[cell] = 1.0;
    return p;
  }
  int next = neighbour(s, cell, action);
  if (next < 0) next = cell;
  const auto slip = s.slip_cells.find(next);
  if (slip != s.slip_cells.end() && next != cell) {
    p[next] += 1.0 - slip->second;
    p[s.slip_target(next)] += slip->second;
  } else {
    p[next] = 1.0;
  }
  return p;
}

std::vector<double> grid_observation(const GridSpec& s, int cell) {
  std::vector<double> p(s.cells(), 0.0);
  std::vector<int> nb{cell};
  for (std::size_t a = 0; a < 4; ++a) {
    const int n = neighbour(s, cell, a);
    if (n >= 0) nb.push_back(n);
  }
  const double noise = s.noise_at(cell);
  p[cell] += 1.0 - noise;
  for (int n : nb) p[n] += noise / static_cast<double>(nb.size());
  return p;
}

GridModelTensors build_tensors(const GridSpec& s) {
  s.validate();
  const auto n = static_cast<std::size_t>(s.cells());
  std::vector<double> a(n * n), b(n * n * 4);
  for (std::size_t x = 0; x < n; ++x) {
    const auto obs = grid_observation(s, static_cast<int>(x));
    for (std::size_t y = 0; y < n; ++y) a[y * n + x] = obs[y];
    for (std::size_t u = 0; u < 4; ++u) {
      const auto next = grid_transition(s, static_cast<int>(x), u);
      for (std::size_t x2 = 0; x2 < n; ++x2) b[(x2 * n + x) * 4 + u] = next[x2];
    }
  }
  GridModelTensors t{
      DiscreteTensor({{"y", n}, {"x", n}}, std::move(a)),
      DiscreteTensor({{"x", n}, {"x@prev", n}, {"u", 4}}, std::move(b)),
      DiscreteTensor::one_hot({"x", n}, static_cast<std::size_t>(s.start)),
      preference_prior(
          DiscreteTensor::one_hot({"x", n}, static_cast<std::size_t>(s.goal)),
          s.preference_floor)};
  return t;
}

ModelSpec grid_model(const GridSpec& s) {
  auto t = build_tensors(s);
  const auto n = static_cast<std::size_t>(s.cells());
  ModelSpec m;
  m.states = {{"x", n}};
  m.control = {"u", 4};
  m.observations = {{"y", n}};
  m.initial.emplace("x", t.prior);
  m.control_prior = DiscreteTensor::uniform({{"u", 4}});
  m.transitions.push_back(make_template("B", "x", t.B));
  m.likelihoods.push_back(make_template("A", "y", t.A));
  m.preferences.emplace("x", t.preference);
  m.horizon = s.horizon;
  m.validate();
  return m;
}

GridEnv::GridEnv(GridSpec spec) : spec_(std::move(spec)), model_(grid_model(spec_)) {}

std::size_t GridEnv::sample(const std::vector<double>& p) {
  // 53-bit uniform so draws do not depend on the standard library's
  // distribution implementations.
  const double r = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (r < acc) return i;
  }
  return last;
}

Observation GridEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  cell_ = spec_.start;
  t_ = 0;
  done_ = false;
  return {sample(grid_observation(spec_, cell_))};
}

void GridEnv::set_cell(int cell) {
  if (cell < 0 || cell >= spec_.cells()) throw UsageError("cell outside the grid");
  cell_ = cell;
  t_ = 0;
  done_ = absorbing(spec_, cell);
}

StepResult GridEnv::step(std::size_t action) {
  if (done_) throw UsageError("step after the episode ended");
  if (action >= 4) throw UsageError("grid action out of range");
  cell_ = static_cast<int>(sample(grid_transition(spec_, cell_, action)));
  ++t_;
  StepResult r;
  if (cell_ == spec_.goal) {
    r.reward = 1.0;
    done_ = true;
  } else if (spec_.sink_cells.count(cell_)) {
    r.reward = -1.0;
    done_ = true;
  }
  if (t_ >= spec_.horizon) done_ = true;
  r.done = done_;
  r.observation = {sample(grid_observation(spec_, cell_))};
  return r;
}

std::vector<std::size_t> GridEnv::observation_alphabets() const {
  return {static_cast<std::size_t>(spec_.cells())};
}

std::string GridEnv::render_state(const std::vector<int>& state) const {
  const int agent = state.empty() ? -1 : state[0];
  std::string out;
  for (int r = 0; r < spec_.height; ++r) {
    for (int c = 0; c < spec_.width; ++c) {
      const int cell = spec_.cell(r, c);
      char ch = '.';
      if (spec_.sink_cells.count(cell)) ch = '#';
      if (spec_.slip_cells.count(cell)) ch = '~';
      if (cell == spec_.start) ch = 'S';
      if (cell == spec_.goal) ch = 'G';
      if (cell == agent) ch = 'A';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace efe
