#ifndef HCMARL_ENVS_HPP_
#define HCMARL_ENVS_HPP_

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hcmarl/rng.hpp"
#include "hcmarl/tensor.hpp"

namespace hcmarl {

enum class TaskKind { kPredatorPrey, kRendezvous, kNavigation, kBandit };

TaskKind parse_task(const std::string& name);
std::string to_string(TaskKind task);

// Discrete action set shared by the kinematic tasks.
enum Action : int { kStay = 0, kPlusX, kMinusX, kPlusY, kMinusY };
inline constexpr int kActionCount = 5;

struct EnvConfig {
  TaskKind task = TaskKind::kRendezvous;
  int agents = 3;
  double arena = 2.0;  // L, arena is [0, L]^2
  int step_limit = 200;
  double speed_cap = 0.1;  // per step
  double sensing_radius = 1.0;
  int nearest = 3;  // neighbor slots per observation
  double min_separation = 0.3;
  int placement_retries = 1000;
  double success_bonus = 10.0;

  double gather_radius = 0.2;   // rendezvous: all pairwise distances below
  double capture_radius = 0.2;  // predator-prey
  double prey_speed_factor = 1.2;
  int prey_turn_interval = 10;
  double goal_radius = 0.1;       // navigation
  double obstacle_radius = 0.3;
  double agent_radius = 0.05;
  double collision_penalty = 1.0;

  void validate() const;
};

struct WorldState {
  std::vector<RowVector> position;  // [x y] per agent
  std::vector<RowVector> velocity;
  RowVector prey_position;
  RowVector prey_velocity;
  std::vector<RowVector> goals;      // navigation, one per agent
  std::vector<RowVector> obstacles;  // navigation obstacle centers
  int context = 0;                   // bandit
  int timestep = 0;
  // Drives the scripted prey and the bandit context. Part of the state so a
  // copied world evolves identically.
  Rng rng;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool success = false;    // the task predicate holds after this step
  bool truncated = false;  // step limit reached without success
  int collisions = 0;
};

struct EpisodeResult {
  bool success = false;
  int steps_to_complete = 0;
  double total_reward = 0.0;
};

// Offsets of the observation blocks. Own state is absolute (position / L,
// velocity / speed cap); task and neighbor blocks are relative vectors / L.
struct ObservationLayout {
  int own = 4;
  int task = 0;
  int neighbors = 0;
  int size() const { return own + task + neighbors; }
};

ObservationLayout observation_layout(const EnvConfig& cfg);
int observation_dim(const EnvConfig& cfg);
int state_dim(const EnvConfig& cfg);

// Agents placed uniformly with pairwise distance >= min_separation. Throws
// std::runtime_error when placement keeps failing.
WorldState reset(const EnvConfig& cfg, Rng& rng);

// Advances the world in place. Throws std::invalid_argument for a joint
// action of the wrong length or an action outside [0, kActionCount).
StepResult step(const EnvConfig& cfg, WorldState& state,
                const std::vector<int>& joint_action);

// o_i = Z_i(s): own state, task-relative vectors, then the `nearest` closest
// neighbors within the sensing radius (distance ascending, ties by index),
// zero-filled.
RowVector observe(const EnvConfig& cfg, const WorldState& state, int agent);

// Full state for the centralized critic.
RowVector global_state(const EnvConfig& cfg, const WorldState& state);

bool task_success(const EnvConfig& cfg, const WorldState& state);
// Per-step reward range over all reachable states.
std::pair<double, double> reward_bounds(const EnvConfig& cfg);

// Best action for the bandit task given its context.
int bandit_optimal_action(int context);

// success_flags[k]: predicate on the state after k steps (index 0 = reset).
EpisodeResult episode_metrics(const std::vector<bool>& success_flags,
                              const std::vector<double>& rewards,
                              int step_limit);

struct TrajectoryRecord {
  WorldState state;  // state before the action
  std::vector<int> joint_action;
  double reward = 0.0;
};

// One line per step; the first line carries the format version.
void dump_trajectory(std::ostream& out, const EnvConfig& cfg,
                     const std::vector<TrajectoryRecord>& records);

}  // namespace hcmarl

#endif  // HCMARL_ENVS_HPP_
