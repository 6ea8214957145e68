#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crowdnav/core.hpp"
#include "crowdnav/nlp.hpp"
#include "crowdnav/prediction.hpp"

namespace crowdnav {

// Per-human simulation attributes; none of these are observable to the robot.
struct HumanAttributes {
  double radius{0.3};
  double radius_buffer{0.0};      // unobservable inflation used by the human's own avoidance
  double orca_time_horizon{2.0};  // s
  double obstacle_time_horizon{1.0};
  Vec2 goal;
  double max_speed{1.2};
  double preferred_speed{1.2};
};

struct ScenarioConfig {
  double corridor_width{1.75};
  double corridor_length{9.0};
  std::vector<Segment> walls;
  RobotState robot_start;
  double robot_radius{0.3};
  Vec2 robot_goal;
  std::vector<Vec2> human_starts;
  std::vector<HumanAttributes> human_attributes;
  std::uint64_t seed{0};
  double timeout{30.0};
};

struct WorldState {
  RobotState robot;
  double robot_radius{0.3};
  std::vector<HumanState> humans;
  std::vector<HumanAttributes> attributes;
  std::vector<Segment> walls;
  double time{0.0};
};

struct StepRecord {
  double time{0.0};
  RobotState robot;
  std::vector<HumanState> humans;
  RobotAction action;
  SolveStatus solver_status{SolveStatus::converged};
  bool fallback{false};
  double solve_time_ms{0.0};
  bool collision{false};
  bool frozen{false};
};

struct EpisodeResult {
  std::uint64_t seed{0};
  bool success{false};
  double navigation_time{0.0};
  int collision_steps{0};
  int frozen_steps{0};
  int total_steps{0};
  std::vector<StepRecord> trace;
};

struct Metrics {
  double success_rate{0.0};
  double avg_nav_time{0.0};  // successes only; timeout sentinel when none succeeded
  double collision_freq{0.0};
  double frozen_freq{0.0};
  bool any_success{false};
};

// Randomized corridor scenario: two walls, robot end to end, humans on either
// end walking to the opposite end, attributes sampled per the simulator's
// randomization. Deterministic given the seed.
ScenarioConfig generate_corridor(std::uint64_t seed, int num_humans);

WorldState make_world(const ScenarioConfig& scenario);

// Advance the world one step: the robot follows the commanded action, every
// human solves its own ORCA problem against the other humans, the observed
// robot state, and the walls, then integrates. Serial and OpenMP paths are
// bitwise identical.
void step_world(WorldState& world, const RobotAction& robot_action, double dt,
                Execution exec = Execution::parallel);

struct ControlOutput {
  RobotAction action;
  SolveStatus status{SolveStatus::converged};
  bool fallback{false};
  double solve_time_ms{0.0};
  double kkt_residual{0.0};
};
using ControlCallback = std::function<ControlOutput(const SystemState&, const SampleSet&)>;
using PredictCallback = std::function<SampleSet(const HistoryWindow&)>;

// Closed loop at fixed dt: predict, control, step, detect collisions and
// freezes, until the goal (within 0.3 m) or the timeout. A stale predictor
// (StaleSampleError) reuses the previous sample set.
EpisodeResult run_episode(const ScenarioConfig& scenario, const ControlCallback& controller,
                          const PredictCallback& predictor, double dt = 0.25);

Metrics aggregate_metrics(const std::vector<EpisodeResult>& results);

}  // namespace crowdnav
