#include "crowdnav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "crowdnav/orca.hpp"

namespace crowdnav {

namespace {

constexpr double kGoalRadius = 0.3;
constexpr double kFreezeSpeed = 0.05;
constexpr double kHumanRadius = 0.3;

}  // namespace

ScenarioConfig generate_corridor(std::uint64_t seed, int num_humans) {
  if (num_humans < 0) throw ConfigError("generate_corridor: negative human count");
  ScenarioConfig sc;
  sc.seed = seed;
  const double half_w = sc.corridor_width / 2.0;
  const double len = sc.corridor_length;
  sc.walls = {Segment{{-0.5, half_w}, {len + 0.5, half_w}},
              Segment{{-0.5, -half_w}, {len + 0.5, -half_w}}};
  sc.robot_start = RobotState({0.5, 0.0}, 0.0, 0.0);
  sc.robot_goal = {len - 0.5, 0.0};

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int j = 0; j < num_humans; ++j) {
    HumanAttributes attr;
    attr.radius = kHumanRadius;
    attr.radius_buffer = 0.1 * unif(rng);
    attr.orca_time_horizon = 1.0 + 4.0 * unif(rng);
    attr.max_speed = 0.8 + 0.6 * unif(rng);
    attr.preferred_speed = attr.max_speed;

    const double clearance = attr.radius + attr.radius_buffer + 0.02;
    const double y_span = half_w - clearance;

    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const bool left_end = unif(rng) < 0.5;
      const double x = left_end ? 0.6 + 1.8 * unif(rng) : len - 0.6 - 1.8 * unif(rng);
      const double y = -y_span + 2.0 * y_span * unif(rng);
      const Vec2 start{x, y};
      bool ok = norm(start - sc.robot_start.position) >= attr.radius + sc.robot_radius + 0.1;
      for (std::size_t o = 0; o < sc.human_starts.size() && ok; ++o) {
        const double min_sep = attr.radius + sc.human_attributes[o].radius + 0.1;
        if (norm(start - sc.human_starts[o]) < min_sep) ok = false;
      }
      if (!ok) continue;

      const double goal_x = left_end ? len - 0.4 : 0.4;
      const double jitter = -0.4 + 0.8 * unif(rng);
      attr.goal = {goal_x, std::clamp(y + jitter, -y_span, y_span)};
      sc.human_starts.push_back(start);
      sc.human_attributes.push_back(attr);
      placed = true;
    }
    if (!placed) throw SeedInfeasibleError("generate_corridor: could not place all humans");
  }
  return sc;
}

WorldState make_world(const ScenarioConfig& scenario) {
  WorldState w;
  w.robot = scenario.robot_start;
  w.robot_radius = scenario.robot_radius;
  w.walls = scenario.walls;
  w.attributes = scenario.human_attributes;
  for (const auto& p : scenario.human_starts) w.humans.push_back(HumanState{p, {0.0, 0.0}});
  return w;
}

void step_world(WorldState& world, const RobotAction& robot_action, double dt, Execution exec) {
  if (!(dt > 0.0)) throw InvalidStateError("step_world: dt must be positive");
  const int n = static_cast<int>(world.humans.size());
  std::vector<Vec2> new_vel(static_cast<std::size_t>(n));
  const Vec2 robot_vel = world.robot.velocity();

  // Each human plans against the pre-step snapshot; updates are simultaneous.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (exec == Execution::parallel && n > 1)
#endif
  for (int j = 0; j < n; ++j) {
    const auto& attr = world.attributes[static_cast<std::size_t>(j)];
    const auto& self = world.humans[static_cast<std::size_t>(j)];
    const double own_radius = attr.radius + attr.radius_buffer;

    std::vector<OrcaConstraint> cons;
    cons.reserve(static_cast<std::size_t>(n + 1 + static_cast<int>(world.walls.size())));
    for (int l = 0; l < n; ++l) {
      if (l == j) continue;
      const auto& other = world.humans[static_cast<std::size_t>(l)];
      cons.push_back({agent_halfplane(self.position, self.velocity, other.position, other.velocity,
                                      own_radius + world.attributes[static_cast<std::size_t>(l)].radius,
                                      attr.orca_time_horizon, 0.5, dt),
                      true});
    }
    cons.push_back({agent_halfplane(self.position, self.velocity, world.robot.position, robot_vel,
                                    own_radius + world.robot_radius, attr.orca_time_horizon, 0.5, dt),
                    true});
    for (const auto& wall : world.walls) {
      const auto planes = obstacle_halfplane(self.position, wall, own_radius, attr.obstacle_time_horizon);
      cons.push_back({planes[0], false});
    }

    const Vec2 to_goal = attr.goal - self.position;
    const double dist = norm(to_goal);
    Vec2 v_pref{0.0, 0.0};
    if (dist > 1e-9) v_pref = to_goal * (std::min(attr.preferred_speed, dist / dt) / dist);

    OrcaParams params;
    params.time_horizon_agents = attr.orca_time_horizon;
    params.time_horizon_obstacles = attr.obstacle_time_horizon;
    params.max_speed = attr.max_speed;
    OrcaSolution sol;
    try {
      sol = solve_orca_qp(cons, v_pref, params);
    } catch (const InfeasibleGeometryError&) {
      sol.velocity = {0.0, 0.0};  // pinned against a wall: stop
    }
    new_vel[static_cast<std::size_t>(j)] = sol.velocity;
  }

  for (int j = 0; j < n; ++j) {
    world.humans[static_cast<std::size_t>(j)] =
        integrator_step(world.humans[static_cast<std::size_t>(j)], new_vel[static_cast<std::size_t>(j)], dt);
  }
  world.robot = unicycle_step(world.robot, robot_action, dt);
  world.time += dt;
}

EpisodeResult run_episode(const ScenarioConfig& scenario, const ControlCallback& controller,
                          const PredictCallback& predictor, double dt) {
  WorldState world = make_world(scenario);
  const int n = static_cast<int>(world.humans.size());
  EpisodeResult result;
  result.seed = scenario.seed;

  HistoryWindow history;
  history.dt = dt;
  history.push_robot(0.0, world.robot.position, world.robot.heading);
  for (int j = 0; j < n; ++j) history.push_human(j, 0.0, world.humans[static_cast<std::size_t>(j)].position);

  SampleSet samples;
  bool have_samples = false;
  const int max_steps = static_cast<int>(std::ceil(scenario.timeout / dt));

  for (int step = 0; step < max_steps; ++step) {
    try {
      samples = predictor(history);
      samples.stale = false;
      have_samples = true;
    } catch (const StaleSampleError&) {
      if (!have_samples) throw;
      samples.stale = true;  // reuse the previous set
    }

    SystemState state;
    state.robot = world.robot;
    state.humans = world.humans;
    state.weights = WeightVector::uniform(static_cast<std::size_t>(std::max(1, samples.num_samples())));

    const ControlOutput out = controller(state, samples);
    step_world(world, out.action, dt);

    StepRecord rec;
    rec.time = world.time;
    rec.robot = world.robot;
    rec.humans = world.humans;
    rec.action = out.action;
    rec.solver_status = out.status;
    rec.fallback = out.fallback;
    rec.solve_time_ms = out.solve_time_ms;

    for (int j = 0; j < n; ++j) {
      const double sep = world.robot_radius + world.attributes[static_cast<std::size_t>(j)].radius;
      if (norm(world.robot.position - world.humans[static_cast<std::size_t>(j)].position) < sep) {
        rec.collision = true;
      }
    }
    for (const auto& wall : world.walls) {
      if (point_segment_distance(world.robot.position, wall) < world.robot_radius) rec.collision = true;
    }
    const double goal_dist = norm(world.robot.position - scenario.robot_goal);
    rec.frozen = std::abs(world.robot.speed) < kFreezeSpeed && goal_dist > kGoalRadius;

    result.collision_steps += rec.collision ? 1 : 0;
    result.frozen_steps += rec.frozen ? 1 : 0;
    result.total_steps += 1;
    result.trace.push_back(std::move(rec));

    history.push_robot(world.time, world.robot.position, world.robot.heading);
    for (int j = 0; j < n; ++j) {
      history.push_human(j, world.time, world.humans[static_cast<std::size_t>(j)].position);
    }

    if (goal_dist <= kGoalRadius) {
      result.success = true;
      result.navigation_time = world.time;
      break;
    }
  }
  if (!result.success) result.navigation_time = scenario.timeout;
  return result;
}

Metrics aggregate_metrics(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw DimensionError("aggregate_metrics: no results");
  Metrics m;
  double nav_sum = 0.0;
  int successes = 0;
  long collision_steps = 0;
  long frozen_steps = 0;
  double total_seconds = 0.0;
  double dt_sum = 0.0;
  for (const auto& r : results) {
    if (r.success) {
      ++successes;
      nav_sum += r.navigation_time;
    }
    collision_steps += r.collision_steps;
    frozen_steps += r.frozen_steps;
    if (r.total_steps > 0) {
      const double dt = r.trace.empty() ? 0.25 : r.trace.front().time;
      total_seconds += r.total_steps * dt;
      dt_sum += dt;
    }
  }
  m.success_rate = static_cast<double>(successes) / static_cast<double>(results.size());
  m.any_success = successes > 0;
  if (successes > 0) {
    m.avg_nav_time = nav_sum / successes;
  } else {
    // timeout sentinel
    m.avg_nav_time = 0.0;
    for (const auto& r : results) m.avg_nav_time = std::max(m.avg_nav_time, r.navigation_time);
  }
  m.collision_freq = total_seconds > 0.0 ? static_cast<double>(collision_steps) / total_seconds : 0.0;
  m.frozen_freq = total_seconds > 0.0 ? static_cast<double>(frozen_steps) / total_seconds : 0.0;
  return m;
}

}  // namespace crowdnav
