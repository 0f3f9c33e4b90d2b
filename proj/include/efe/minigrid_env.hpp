#pragma once

// Door-key world: a square room split by a wall column with one locked door.
// The agent must find the key, unlock the door and reach the goal corner,
// seeing only an egocentric window with line-of-sight occlusion.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "efe/env.hpp"
#include "efe/model.hpp"

namespace efe {

// Actions.
inline constexpr std::size_t kTurnLeft = 0;
inline constexpr std::size_t kTurnRight = 1;
inline constexpr std::size_t kForward = 2;
inline constexpr std::size_t kPickup = 3;
inline constexpr std::size_t kToggle = 4;

// Observation symbols.
inline constexpr std::size_t kSymUnseen = 0;
inline constexpr std::size_t kSymFloor = 1;  // also an open door
inline constexpr std::size_t kSymWall = 2;   // also outside the map
inline constexpr std::size_t kSymKey = 3;
inline constexpr std::size_t kSymTarget = 4;  // closed door or goal

// Orientation: 0 north, 1 east, 2 south, 3 west.
// Inventory/door phase s: 0 no key, 1 holding key, 2 door open.
struct MiniGridSpec {
  int size = 4;  // interior side; the outer wall ring is implicit
  int wall_col = 2;
  int goal_row = 3;
  int goal_col = 3;
  int view = 7;  // odd
  int horizon = 25;
  double preference_floor = 1e-4;

  std::size_t locations() const { return static_cast<std::size_t>(size * size); }
  std::size_t doors() const { return static_cast<std::size_t>(size); }
  // Key positions: every cell left of the wall column.
  std::size_t key_candidates() const {
    return static_cast<std::size_t>(size * wall_col);
  }
  int goal() const { return goal_row * size + goal_col; }
  int key_cell(int k) const { return (k / wall_col) * size + k % wall_col; }
  int door_cell(int d) const { return d * size + wall_col; }
  std::size_t view_cells() const { return static_cast<std::size_t>(view * view); }

  // Throws ModelValidationError.
  void validate() const;
};

struct MiniState {
  int l = 0;
  int o = 0;
  int s = 0;
  int k = 0;
  int d = 0;
  bool operator==(const MiniState&) const = default;
};

MiniState minigrid_successor(const MiniGridSpec& spec, const MiniState& st,
                             std::size_t action);
// view*view symbols, row-major with the agent at the bottom centre facing up.
Observation minigrid_render(const MiniGridSpec& spec, const MiniState& st);
// Fewest actions to the goal, or -1.
int minigrid_solution_length(const MiniGridSpec& spec, const MiniState& st);

struct MiniGridTensors {
  CptTemplate Bl;  // l | l@prev, o@prev, s@prev, k, d, u
  CptTemplate Bo;  // o | o@prev, u
  CptTemplate Bs;  // s | s@prev, l@prev, o@prev, k, d, u
  std::vector<CptTemplate> A;  // one per view cell: y | l, o, k, d, s
  DiscreteTensor pref_l;
  DiscreteTensor pref_s;
};

MiniGridTensors build_minigrid_tensors(const MiniGridSpec& spec);
std::string view_obs_name(std::size_t cell);

// Agent model given the known start pose; key and door stay uncertain.
ModelSpec minigrid_model(const MiniGridSpec& spec, const MiniGridTensors& t,
                         int start_l, int start_o);

class MiniGridEnv : public Environment {
 public:
  explicit MiniGridEnv(MiniGridSpec spec = {});

  std::string name() const override { return "minigrid"; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(std::size_t action) override;
  bool done() const override { return done_; }
  bool success() const override { return state_.l == spec_.goal(); }
  int time() const override { return t_; }
  int horizon() const override { return spec_.horizon; }
  std::size_t num_actions() const override { return 5; }
  std::vector<std::size_t> observation_alphabets() const override;
  ModelSpec agent_model() const override;
  std::vector<int> state_vector() const override;
  std::string render() const override { return render_state(state_vector()); }
  std::string render_state(const std::vector<int>& state) const override;
  // First observation index that shows the key, if any.
  std::optional<int> key_visibility_step(
      const EpisodeRecord& record) const override;

  // Places the world in an arbitrary state; the episode restarts at t = 0.
  Observation set_state(const MiniState& st);
  const MiniState& state() const { return state_; }
  const MiniGridSpec& spec() const { return spec_; }
  const MiniGridTensors& tensors() const { return tensors_; }

 private:
  MiniGridSpec spec_;
  MiniGridTensors tensors_;
  MiniState state_;
  MiniState start_;
  int t_ = 0;
  bool done_ = true;
};

}  // namespace efe
