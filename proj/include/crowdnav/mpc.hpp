#pragma once

#include <memory>
#include <vector>

#include "crowdnav/core.hpp"
#include "crowdnav/nlp.hpp"
#include "crowdnav/orca.hpp"
#include "crowdnav/prediction.hpp"
#include "crowdnav/refine.hpp"

namespace crowdnav {

struct MpcConfig {
  int horizon_steps{8};
  double dt{0.25};
  Vec2 goal{0.0, 0.0};
  double q_px{1.0};  // diagonal position-error weights (1/m^2)
  double q_py{1.0};
  double r_linear{0.1};  // diagonal action effort weights
  double r_angular{0.05};
  double terminal_scale{10.0};  // beta >= 1
  ActuationLimits limits;
  double robot_radius{0.3};
  double human_radius{0.3};
  std::vector<Segment> obstacles;
  double separation_margin{0.05};  // added to the radii in the collision constraints
  OrcaParams orca;
  RefineConfig refine;
  SolverSettings solver;
  RobotAction previous_action{0.0, 0.0};  // u_{-1} for the first rate constraint

  double human_separation() const { return robot_radius + human_radius + separation_margin; }
  double wall_separation() const { return robot_radius + separation_margin; }
  void validate() const;
};

enum class PredictionMode { bilevel, frozen_predictions };

// Quadratic stage cost: goal-position error plus control effort. Human states
// and weights carry zero cost weight.
double stage_cost(const SystemState& state, const RobotAction& action, const MpcConfig& config);

// Terminal penalty: beta times the stage position term.
double terminal_cost(const SystemState& state, const MpcConfig& config);

// Collision residuals (>= 0 feasible): squared robot-human separations minus
// d_j^2, then squared robot-segment clearances minus d_l^2.
Eigen::VectorXd collision_constraints(const SystemState& state, const MpcConfig& config);

struct MpcSolutionBundle {
  RobotAction action;                               // u_0 to execute
  std::vector<RobotState> robot_plan;               // x_0..x_T
  std::vector<std::vector<HumanState>> human_plan;  // [t][j], refined, t = 0..T
  std::vector<WeightVector> weight_plan;            // w_0..w_{T-1}
  Eigen::VectorXd lower_level_duals;                // stacked lambda/mu per human-step
  SolveStatus status{SolveStatus::numerical_failure};
  double kkt_residual{0.0};
  double objective{0.0};
  int iterations{0};
  double solve_time_ms{0.0};
  bool fallback{false};
};

namespace detail {
class MpcAssembly;
}

// The single-level reformulation of the bilevel MPC: robot plan and actions,
// refined human trajectories, the lower-level ORCA KKT systems (stationarity,
// primal feasibility with slacks, dual bounds, relaxed complementarity), and
// the importance-weight dynamics, over one horizon.
class MpcProblem {
 public:
  const NlpProblem& nlp() const { return nlp_; }
  int num_vars() const { return nlp_.num_vars; }

  // Initial guess by forward rollout: the robot plan follows the action guess
  // (zeros when empty), each human follows exact lower-level QP solves, and
  // the weights follow the smooth in-horizon update.
  Eigen::VectorXd rollout_guess(const std::vector<RobotAction>& actions_guess = {}) const;

  MpcSolutionBundle extract(const NlpSolution& solution) const;

 private:
  friend MpcProblem assemble(const SystemState&, const SampleSet&, const MpcConfig&, PredictionMode);
  std::shared_ptr<const detail::MpcAssembly> assembly_;
  NlpProblem nlp_;
};

MpcProblem assemble(const SystemState& state_init, const SampleSet& samples, const MpcConfig& config,
                    PredictionMode mode);

struct ControlDiagnostics {
  SolveStatus status{SolveStatus::numerical_failure};
  double solve_time_ms{0.0};
  double kkt_residual{0.0};
  int iterations{0};
  bool fallback{false};
  double weight_entropy{0.0};
  double min_predicted_clearance{0.0};
};

// Receding-horizon controller: re-initializes weights from the fresh sample
// set, warm-starts from the shifted previous plan, and falls back to a
// rate-limited braking action when no feasible iterate is available.
class Controller {
 public:
  Controller(MpcConfig config, PredictionMode mode);

  MpcSolutionBundle control_step(const SystemState& measured, const SampleSet& samples);
  void reset();

  const MpcConfig& config() const { return config_; }
  const RobotAction& last_action() const { return prev_action_; }

 private:
  MpcConfig config_;
  PredictionMode mode_;
  RobotAction prev_action_{0.0, 0.0};
  std::vector<RobotAction> prev_plan_;
  bool has_prev_{false};
};

}  // namespace crowdnav
