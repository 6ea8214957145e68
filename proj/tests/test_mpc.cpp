#include <cmath>
#include <random>

#include <doctest.h>

#include "crowdnav/mpc.hpp"

using namespace crowdnav;

namespace {

MpcConfig corridor_config(int horizon = 4) {
  MpcConfig cfg;
  cfg.horizon_steps = horizon;
  cfg.dt = 0.25;
  cfg.goal = {4.0, 0.0};
  cfg.obstacles = {Segment{{-1.0, 0.875}, {9.0, 0.875}}, Segment{{-1.0, -0.875}, {9.0, -0.875}}};
  cfg.orca.max_speed = 1.4;
  cfg.solver.max_iterations = 60;
  return cfg;
}

SystemState make_state(const RobotState& robot, std::vector<HumanState> humans, int num_samples) {
  SystemState st;
  st.robot = robot;
  st.humans = std::move(humans);
  st.weights = WeightVector::uniform(static_cast<std::size_t>(num_samples));
  return st;
}

SampleSet straight_samples(const std::vector<HumanState>& humans, int horizon, int num_samples,
                           double dt = 0.25) {
  SampleSet set;
  set.dt = dt;
  TrajectorySample sample(static_cast<int>(humans.size()), horizon);
  for (std::size_t j = 0; j < humans.size(); ++j) {
    for (int k = 0; k < horizon; ++k) {
      sample.at(static_cast<int>(j), k) = humans[j].position + humans[j].velocity * (dt * (k + 1));
    }
  }
  set.samples.assign(static_cast<std::size_t>(num_samples), sample);
  return set;
}

}  // namespace

TEST_CASE("stage and terminal cost") {
  MpcConfig cfg = corridor_config();
  cfg.goal = {1.0, 0.0};
  SystemState at_goal = make_state(RobotState({1.0, 0.0}, 0.0, 0.0), {}, 1);
  CHECK(stage_cost(at_goal, {0.0, 0.0}, cfg) == doctest::Approx(0.0));
  CHECK(terminal_cost(at_goal, cfg) == doctest::Approx(0.0));

  SystemState off = make_state(RobotState({0.0, 0.0}, 0.0, 0.0), {}, 1);
  CHECK(stage_cost(off, {0.0, 0.0}, cfg) == doctest::Approx(1.0));
  cfg.terminal_scale = 10.0;
  CHECK(terminal_cost(off, cfg) == doctest::Approx(10.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const SystemState s = make_state(RobotState({u(rng), u(rng)}, 0.2, 0.1), {}, 1);
    const RobotAction a{u(rng), u(rng)};
    const double ex = s.robot.position.x - cfg.goal.x;
    const double ey = s.robot.position.y - cfg.goal.y;
    const double oracle = cfg.q_px * ex * ex + cfg.q_py * ey * ey + cfg.r_linear * a.linear * a.linear +
                          cfg.r_angular * a.angular * a.angular;
    CHECK(stage_cost(s, a, cfg) == doctest::Approx(oracle).epsilon(1e-13));
    CHECK(terminal_cost(s, cfg) ==
          doctest::Approx(cfg.terminal_scale * (cfg.q_px * ex * ex + cfg.q_py * ey * ey)).epsilon(1e-13));
  }
}

TEST_CASE("collision_constraints signs") {
  MpcConfig cfg = corridor_config();
  SUBCASE("boundary is zero") {
    const double d = cfg.human_separation();
    SystemState s = make_state(RobotState({0.0, 0.0}, 0.0, 0.0),
                               {HumanState{{d, 0.0}, {0.0, 0.0}}}, 1);
    const Eigen::VectorXd r = collision_constraints(s, cfg);
    CHECK(r(0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("overlap is negative") {
    SystemState s = make_state(RobotState({0.0, 0.0}, 0.0, 0.0),
                               {HumanState{{0.1, 0.0}, {0.0, 0.0}}}, 1);
    CHECK(collision_constraints(s, cfg)(0) < 0.0);
  }
  SUBCASE("random scenes match an independent distance computation") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
      SystemState s = make_state(RobotState({u(rng), u(rng)}, 0.0, 0.0),
                                 {HumanState{{u(rng), u(rng)}, {0.0, 0.0}}}, 1);
      const Eigen::VectorXd r = collision_constraints(s, cfg);
      const double dist = norm(s.robot.position - s.humans[0].position);
      CHECK((r(0) >= 0.0) == (dist >= cfg.human_separation()));
      for (std::size_t m = 0; m < cfg.obstacles.size(); ++m) {
        const double wd = point_segment_distance(s.robot.position, cfg.obstacles[m]);
        CHECK((r(1 + static_cast<int>(m)) >= 0.0) == (wd >= cfg.wall_separation()));
      }
    }
  }
}

TEST_CASE("assemble with no humans reduces to unicycle point stabilization") {
  MpcConfig cfg = corridor_config(6);
  cfg.goal = {2.0, 0.0};
  SystemState st = make_state(RobotState({0.0, 0.0}, 0.0, 0.0), {}, 1);
  SampleSet set;
  set.dt = cfg.dt;
  set.samples.assign(1, TrajectorySample(0, cfg.horizon_steps));

  const MpcProblem p = assemble(st, set, cfg, PredictionMode::bilevel);
  CHECK(p.num_vars() == 6 * cfg.horizon_steps);
  CHECK(p.nlp().num_eq == 4 * cfg.horizon_steps);

  const SqpSolver solver(cfg.solver);
  const NlpSolution sol = solver.solve(p.nlp(), p.rollout_guess());
  CHECK(sol.status == SolveStatus::converged);
  const MpcSolutionBundle b = p.extract(sol);
  CHECK(b.action.linear > 0.05);  // drives toward the goal
  CHECK(b.robot_plan.back().position.x > 0.9);
}

TEST_CASE("feasible straight-line prediction is reproduced by the bilevel solution") {
  MpcConfig cfg = corridor_config(4);
  cfg.goal = {3.0, 0.0};
  cfg.solver.kkt_tolerance = 1e-8;  // the identity is checked to 1e-6
  // human walking away from the robot's path, nothing active
  std::vector<HumanState> humans{HumanState{{1.0, -3.0}, {0.0, -0.5}}};
  SystemState st = make_state(RobotState({0.0, 0.0}, 0.0, 0.0), humans, 1);
  // keep the human far from the corridor walls for this test
  cfg.obstacles.clear();
  const SampleSet set = straight_samples(humans, cfg.horizon_steps, 1);

  const MpcProblem p = assemble(st, set, cfg, PredictionMode::bilevel);
  const SqpSolver solver(cfg.solver);
  const NlpSolution sol = solver.solve(p.nlp(), p.rollout_guess());
  REQUIRE(sol.status == SolveStatus::converged);
  const MpcSolutionBundle b = p.extract(sol);

  // oracle: forward lower-level solves, which reduce to the intent itself
  for (int t = 1; t <= cfg.horizon_steps; ++t) {
    const Vec2 expected = set.samples[0].at(0, t - 1);
    CHECK(norm(b.human_plan[static_cast<std::size_t>(t)][0].position - expected) <= 1e-6);
  }
}

TEST_CASE("assembled jacobians match finite differences") {
  MpcConfig cfg = corridor_config(3);
  cfg.goal = {3.0, 0.2};
  std::vector<HumanState> humans{HumanState{{1.6, 0.2}, {-0.6, 0.05}},
                                 HumanState{{2.2, -0.3}, {-0.5, -0.1}}};
  SystemState st = make_state(RobotState({0.2, 0.0}, 0.1, 0.4), humans, 3);

  // three distinct samples so the weight machinery is exercised
  SampleSet set = straight_samples(humans, cfg.horizon_steps, 3);
  for (int s = 0; s < 3; ++s) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < cfg.horizon_steps; ++k) {
        set.samples[static_cast<std::size_t>(s)].at(j, k) += Vec2{0.05 * s, -0.08 * s + 0.02 * k};
      }
    }
  }

  const MpcProblem p = assemble(st, set, cfg, PredictionMode::bilevel);
  const Eigen::VectorXd x0 = p.rollout_guess();

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x = x0;
    for (int i = 0; i < x.size(); ++i) x(i) += 0.02 * g(rng);
    const double err = check_gradients(p.nlp(), x, 1e-6);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("frozen-predictions mode drops the lower level but keeps (1b)-(1f)") {
  MpcConfig cfg = corridor_config(4);
  cfg.goal = {3.0, 0.0};
  std::vector<HumanState> humans{HumanState{{2.0, 0.3}, {-0.8, 0.0}}};
  SystemState st = make_state(RobotState({0.0, 0.0}, 0.0, 0.2), humans, 1);
  const SampleSet set = straight_samples(humans, cfg.horizon_steps, 1);

  const MpcProblem frozen = assemble(st, set, cfg, PredictionMode::frozen_predictions);
  const MpcProblem bilevel = assemble(st, set, cfg, PredictionMode::bilevel);
  CHECK(frozen.num_vars() < bilevel.num_vars());
  CHECK(frozen.num_vars() == 6 * cfg.horizon_steps);

  const SqpSolver solver(cfg.solver);
  const NlpSolution sol = solver.solve(frozen.nlp(), frozen.rollout_guess());
  CHECK(sol.status == SolveStatus::converged);
  const MpcSolutionBundle b = frozen.extract(sol);
  // the executed plan satisfies the collision constraints against the rollout
  for (int t = 1; t <= cfg.horizon_steps; ++t) {
    const Vec2 ph = set.samples[0].at(0, t - 1);
    CHECK(norm(b.robot_plan[static_cast<std::size_t>(t)].position - ph) >=
          cfg.human_separation() - 1e-5);
  }
}

TEST_CASE("control_step at the goal with no humans holds still") {
  MpcConfig cfg = corridor_config(8);
  cfg.goal = {0.0, 0.0};
  Controller controller(cfg, PredictionMode::bilevel);
  SystemState st = make_state(RobotState({0.0, 0.0}, 0.0, 0.0), {}, 1);
  SampleSet set;
  set.dt = cfg.dt;
  set.samples.assign(1, TrajectorySample(0, cfg.horizon_steps));
  const MpcSolutionBundle b = controller.control_step(st, set);
  CHECK(b.status == SolveStatus::converged);
  CHECK(std::abs(b.action.linear) <= 1e-4);
  CHECK(std::abs(b.action.angular) <= 1e-4);
}

TEST_CASE("closed-loop: obstacle-free straight line reaches the goal") {
  MpcConfig cfg = corridor_config(8);
  cfg.obstacles.clear();
  cfg.goal = {4.0, 0.0};
  Controller controller(cfg, PredictionMode::bilevel);
  SystemState st = make_state(RobotState({0.0, 0.0}, 0.0, 0.0), {}, 1);
  SampleSet set;
  set.dt = cfg.dt;
  set.samples.assign(1, TrajectorySample(0, cfg.horizon_steps));

  double reached_at = -1.0;
  for (int k = 0; k < 32; ++k) {  // 8 seconds
    const MpcSolutionBundle b = controller.control_step(st, set);
    st.robot = unicycle_step(st.robot, b.action, cfg.dt);
    if (norm(st.robot.position - cfg.goal) <= 0.3) {
      reached_at = (k + 1) * cfg.dt;
      break;
    }
  }
  CHECK(reached_at > 0.0);
  CHECK(reached_at <= 8.0);
}

TEST_CASE("executed actions always respect the rate limits") {
  MpcConfig cfg = corridor_config(4);
  cfg.goal = {5.0, 0.0};
  Controller controller(cfg, PredictionMode::bilevel);
  SystemState st = make_state(RobotState({0.0, 0.0}, 0.0, 0.0), {}, 1);
  SampleSet set;
  set.dt = cfg.dt;
  set.samples.assign(1, TrajectorySample(0, cfg.horizon_steps));

  RobotAction prev{0.0, 0.0};
  for (int k = 0; k < 12; ++k) {
    const MpcSolutionBundle b = controller.control_step(st, set);
    CHECK(b.action.linear - prev.linear <= cfg.limits.rate_max.linear + 1e-9);
    CHECK(b.action.linear - prev.linear >= cfg.limits.rate_min.linear - 1e-9);
    CHECK(b.action.angular - prev.angular <= cfg.limits.rate_max.angular + 1e-9);
    CHECK(b.action.angular - prev.angular >= cfg.limits.rate_min.angular - 1e-9);
    prev = b.action;
    st.robot = unicycle_step(st.robot, b.action, cfg.dt);
  }
}
