#include <algorithm>
#include <cmath>

#include "crowdnav/mpc.hpp"

namespace crowdnav {

Controller::Controller(MpcConfig config, PredictionMode mode)
    : config_(std::move(config)), mode_(mode) {
  config_.validate();
}

void Controller::reset() {
  prev_action_ = {0.0, 0.0};
  prev_plan_.clear();
  has_prev_ = false;
}

MpcSolutionBundle Controller::control_step(const SystemState& measured, const SampleSet& samples) {
  const int S = measured.humans.empty() ? 1 : samples.num_samples();

  SystemState state = measured;
  if (!measured.humans.empty() && S >= 2) {
    state.weights = kde_init_weights(samples);
  } else {
    state.weights = WeightVector::uniform(static_cast<std::size_t>(std::max(1, S)));
  }

  MpcConfig cfg = config_;
  cfg.previous_action = prev_action_;
  // With a shifted near-optimal warm start the complementarity homotopy can
  // start much closer to its target.
  if (has_prev_) {
    cfg.solver.rho_init = std::min(cfg.solver.rho_init, 100.0 * cfg.solver.rho_min);
  }

  MpcSolutionBundle bundle;
  bool solved_ok = false;
  try {
    const MpcProblem problem = assemble(state, samples, cfg, mode_);

    // Candidate warm starts: shifted previous plan, goal-seeking rollouts at
    // two speeds, and braking. Scored by objective plus a stiff penalty on
    // constraint violation so the solver starts from a near-feasible plan.
    auto goal_seek = [&](double speed_cap_far) {
      std::vector<RobotAction> actions;
      RobotState sim = measured.robot;
      RobotAction u = prev_action_;
      for (int t = 0; t < cfg.horizon_steps; ++t) {
        const Vec2 to_goal = cfg.goal - sim.position;
        const double dist = norm(to_goal);
        const double desired_heading = dist > 1e-9 ? std::atan2(to_goal.y, to_goal.x) : sim.heading;
        const double err = wrap_angle(desired_heading - sim.heading);
        double ang = std::clamp(err / cfg.dt, cfg.limits.action_min.angular, cfg.limits.action_max.angular);
        ang = std::clamp(ang, u.angular + cfg.limits.rate_min.angular, u.angular + cfg.limits.rate_max.angular);
        const double speed_cap = std::abs(err) > 1.0 ? std::min(0.3, speed_cap_far) : speed_cap_far;
        double lin = std::clamp(std::min(speed_cap, dist / cfg.dt), cfg.limits.action_min.linear,
                                cfg.limits.action_max.linear);
        lin = std::clamp(lin, u.linear + cfg.limits.rate_min.linear, u.linear + cfg.limits.rate_max.linear);
        u = {lin, ang};
        actions.push_back(u);
        sim = unicycle_step(sim, u, cfg.dt);
      }
      return actions;
    };
    auto brake = [&]() {
      std::vector<RobotAction> actions;
      RobotAction u = prev_action_;
      for (int t = 0; t < cfg.horizon_steps; ++t) {
        u.linear = u.linear > 0.0 ? std::max(0.0, u.linear + cfg.limits.rate_min.linear)
                                  : std::min(0.0, u.linear + cfg.limits.rate_max.linear);
        u.angular = u.angular > 0.0 ? std::max(0.0, u.angular + cfg.limits.rate_min.angular)
                                    : std::min(0.0, u.angular + cfg.limits.rate_max.angular);
        actions.push_back(u);
      }
      return actions;
    };

    std::vector<std::vector<RobotAction>> candidates;
    if (has_prev_ && static_cast<int>(prev_plan_.size()) == cfg.horizon_steps) {
      std::vector<RobotAction> shifted(prev_plan_.begin() + 1, prev_plan_.end());
      shifted.push_back(prev_plan_.back());
      candidates.push_back(std::move(shifted));
    }
    candidates.push_back(goal_seek(cfg.limits.action_max.linear));
    candidates.push_back(goal_seek(0.5));
    candidates.push_back(brake());

    Eigen::VectorXd x0;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& cand : candidates) {
      const Eigen::VectorXd xc = problem.rollout_guess(cand);
      const auto& nlp = problem.nlp();
      double score = nlp.objective(xc);
      if (nlp.num_eq > 0) score += 1e3 * nlp.eq(xc).cwiseAbs().sum();
      if (nlp.num_ineq > 0) score += 1e3 * (-nlp.ineq(xc).cwiseMin(0.0)).sum();
      if (score < best_score) {
        best_score = score;
        x0 = xc;
      }
    }

    const SqpSolver solver(cfg.solver);
    const NlpSolution sol = solver.solve(problem.nlp(), x0);
    bundle = problem.extract(sol);
    solved_ok = sol.status == SolveStatus::converged ||
                sol.constraint_violation <= 10.0 * cfg.solver.kkt_tolerance;
  } catch (const DimensionError&) {
    throw;  // configuration bugs propagate
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    solved_ok = false;  // numerical trouble never aborts the control loop
  }

  if (!solved_ok) {
    // Brake toward zero within the rate limits.
    bundle.fallback = true;
    bundle.status = bundle.robot_plan.empty() ? SolveStatus::numerical_failure : bundle.status;
    RobotAction brake;
    if (prev_action_.linear > 0.0) {
      brake.linear = std::max(0.0, prev_action_.linear + config_.limits.rate_min.linear);
    } else {
      brake.linear = std::min(0.0, prev_action_.linear + config_.limits.rate_max.linear);
    }
    if (prev_action_.angular > 0.0) {
      brake.angular = std::max(0.0, prev_action_.angular + config_.limits.rate_min.angular);
    } else {
      brake.angular = std::min(0.0, prev_action_.angular + config_.limits.rate_max.angular);
    }
    bundle.action = brake;
    if (bundle.robot_plan.empty()) bundle.robot_plan.push_back(measured.robot);
  }

  // The executed action always honors the rate and actuation limits relative
  // to the previously executed action, converged or not.
  bundle.action.linear =
      std::clamp(bundle.action.linear, prev_action_.linear + config_.limits.rate_min.linear,
                 prev_action_.linear + config_.limits.rate_max.linear);
  bundle.action.angular =
      std::clamp(bundle.action.angular, prev_action_.angular + config_.limits.rate_min.angular,
                 prev_action_.angular + config_.limits.rate_max.angular);
  bundle.action.linear =
      std::clamp(bundle.action.linear, config_.limits.action_min.linear, config_.limits.action_max.linear);
  bundle.action.angular = std::clamp(bundle.action.angular, config_.limits.action_min.angular,
                                     config_.limits.action_max.angular);

  prev_action_ = bundle.action;
  prev_plan_.clear();
  if (!bundle.fallback) {
    // keep the executed action consistent with the stored plan head
    for (std::size_t t = 1; t < bundle.robot_plan.size(); ++t) {
      // reconstruct actions from the plan: linear = stored speed, angular from heading delta
      const double ang = wrap_angle(bundle.robot_plan[t].heading - bundle.robot_plan[t - 1].heading) / config_.dt;
      prev_plan_.push_back({bundle.robot_plan[t].speed, ang});
    }
    has_prev_ = static_cast<int>(prev_plan_.size()) == config_.horizon_steps;
  } else {
    has_prev_ = false;
  }
  return bundle;
}

}  // namespace crowdnav
