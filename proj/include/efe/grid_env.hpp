#pragma once

// Stochastic gridworld: slip cells can drop the agent into an absorbing sink,
// observations are the true cell blurred over its neighbourhood.

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "efe/env.hpp"
#include "efe/model.hpp"
#include "efe/tensor.hpp"

namespace efe {

// Actions.
inline constexpr std::size_t kUp = 0;
inline constexpr std::size_t kDown = 1;
inline constexpr std::size_t kLeft = 2;
inline constexpr std::size_t kRight = 3;

struct GridSpec {
  int width = 9;
  int height = 5;
  int start = 0;  // cell index row * width + col
  int goal = 0;
  std::set<int> sink_cells;
  // Entering a slip cell lands in its adjacent sink with this probability.
  std::map<int, double> slip_cells;
  // Probability the observation is spread uniformly over the cell and its
  // in-bounds 4-neighbours instead of reporting the true cell.
  double obs_noise = 0.1;
  // Per-cell overrides of obs_noise.
  std::map<int, double> cell_noise;
  int horizon = 12;
  double preference_floor = 1e-4;

  static GridSpec default_instance();

  int cells() const { return width * height; }
  int cell(int row, int col) const { return row * width + col; }
  int row(int cell) const { return cell / width; }
  int col(int cell) const { return cell % width; }
  double noise_at(int cell) const;
  // The sink a slip cell drops into: the first sink among its down, up,
  // left and right neighbours.
  int slip_target(int cell) const;
  // Throws ModelValidationError.
  void validate() const;
  // Shortest start-to-goal path lengths, with and without slip cells allowed.
  int shortest_path(bool avoid_slips) const;

  std::string to_config() const;
};

// key = value lines overriding the default instance; '#' starts a comment.
// Cells are written "row,col". Giving width or height drops the default
// sinks, slips and noise overrides.
GridSpec parse_grid_config(const std::string& text);
GridSpec load_grid_config(const std::string& path);

struct GridModelTensors {
  DiscreteTensor A;           // over (y, x), normalized over y
  DiscreteTensor B;           // over (x, x@prev, u), normalized over x
  DiscreteTensor prior;       // over x
  DiscreteTensor preference;  // over x
};

// Next-cell distribution; the simulator samples from the same table.
std::vector<double> grid_transition(const GridSpec& spec, int cell,
                                    std::size_t action);
std::vector<double> grid_observation(const GridSpec& spec, int cell);

GridModelTensors build_tensors(const GridSpec& spec);
ModelSpec grid_model(const GridSpec& spec);

class GridEnv : public Environment {
 public:
  explicit GridEnv(GridSpec spec);

  std::string name() const override { return "grid"; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  bool done() const override { return done_; }
  bool success() const override { return cell_ == spec_.goal; }
  int time() const override { return t_; }
  int horizon() const override { return spec_.horizon; }
  std::size_t num_actions() const override { return 4; }
  std::vector<std::size_t> observation_alphabets() const override;
  ModelSpec agent_model() const override { return model_; }
  std::vector<int> state_vector() const override { return {cell_}; }
  std::string render() const override { return render_state({cell_}); }
  std::string render_state(const std::vector<int>& state) const override;

  // Places the agent on a cell; the episode restarts at t = 0 with the RNG
  // untouched.
  void set_cell(int cell);
  const GridSpec& spec() const { return spec_; }
  int cell() const { return cell_; }

 private:
  std::size_t sample(const std::vector<double>& p);

  GridSpec spec_;
  ModelSpec model_;
  std::mt19937_64 rng_;
  int cell_ = 0;
  int t_ = 0;
  bool done_ = true;
};

}  // namespace efe
