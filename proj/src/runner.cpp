#include "crowdnav/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

namespace crowdnav {

using nlohmann::json;
namespace fs = std::filesystem;

ControllerVariant parse_controller(const std::string& name) {
  if (name == "sicnav-cvg") return ControllerVariant::sicnav_cvg;
  if (name == "sicnav-samples") return ControllerVariant::sicnav_samples;
  if (name == "mpc-cvmm") return ControllerVariant::mpc_cvmm;
  throw ConfigError("unknown controller variant: " + name);
}

PredictorKind parse_predictor(const std::string& name) {
  if (name == "cvg") return PredictorKind::cvg;
  if (name == "cvmm") return PredictorKind::cvmm;
  if (name == "mixture") return PredictorKind::mixture;
  if (name == "external") return PredictorKind::external;
  throw ConfigError("unknown predictor: " + name);
}

const char* to_string(ControllerVariant variant) {
  switch (variant) {
    case ControllerVariant::sicnav_cvg: return "sicnav-cvg";
    case ControllerVariant::sicnav_samples: return "sicnav-samples";
    case ControllerVariant::mpc_cvmm: return "mpc-cvmm";
  }
  return "unknown";
}

const char* to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::cvg: return "cvg";
    case PredictorKind::cvmm: return "cvmm";
    case PredictorKind::mixture: return "mixture";
    case PredictorKind::external: return "external";
  }
  return "unknown";
}

void RunSpec::resolve_and_validate() {
  if (!predictor_given) {
    switch (controller) {
      case ControllerVariant::sicnav_cvg: predictor = PredictorKind::cvg; break;
      case ControllerVariant::sicnav_samples: predictor = PredictorKind::mixture; break;
      case ControllerVariant::mpc_cvmm: predictor = PredictorKind::cvmm; break;
    }
  }
  switch (controller) {
    case ControllerVariant::sicnav_cvg:
      if (predictor != PredictorKind::cvg) {
        throw ConfigError("sicnav-cvg pairs with the cvg predictor");
      }
      break;
    case ControllerVariant::mpc_cvmm:
      if (predictor != PredictorKind::cvmm) {
        throw ConfigError("mpc-cvmm forces the cvmm predictor");
      }
      break;
    case ControllerVariant::sicnav_samples:
      if (predictor != PredictorKind::mixture && predictor != PredictorKind::external) {
        throw ConfigError("sicnav-samples pairs with the mixture or external predictor");
      }
      break;
  }
  if (predictor == PredictorKind::external && endpoint.empty()) {
    throw ConfigError("external predictor requires --endpoint host:port");
  }
  if (count < 1) throw ConfigError("count must be >= 1");
  if (num_humans < 0) throw ConfigError("humans must be >= 0");
  if (num_samples < 1) throw ConfigError("num_samples must be >= 1");
}

namespace {

void apply_override(RunConfig& cfg, const std::string& key, double value) {
  auto& mpc = cfg.mpc;
  if (key == "mpc.horizon_steps") {
    mpc.horizon_steps = static_cast<int>(value);
  } else if (key == "mpc.dt") {
    mpc.dt = value;
  } else if (key == "mpc.goal_x") {
    mpc.goal.x = value;
  } else if (key == "mpc.goal_y") {
    mpc.goal.y = value;
  } else if (key == "mpc.q_px") {
    mpc.q_px = value;
  } else if (key == "mpc.q_py") {
    mpc.q_py = value;
  } else if (key == "mpc.r_linear") {
    mpc.r_linear = value;
  } else if (key == "mpc.r_angular") {
    mpc.r_angular = value;
  } else if (key == "mpc.terminal_scale") {
    mpc.terminal_scale = value;
  } else if (key == "mpc.robot_radius") {
    mpc.robot_radius = value;
  } else if (key == "mpc.human_radius") {
    mpc.human_radius = value;
  } else if (key == "mpc.separation_margin") {
    mpc.separation_margin = value;
  } else if (key == "orca.time_horizon_agents") {
    mpc.orca.time_horizon_agents = value;
  } else if (key == "orca.time_horizon_obstacles") {
    mpc.orca.time_horizon_obstacles = value;
  } else if (key == "orca.responsibility") {
    mpc.orca.responsibility = value;
  } else if (key == "orca.max_speed") {
    mpc.orca.max_speed = value;
  } else if (key == "orca.relaxation_penalty") {
    mpc.orca.relaxation_penalty = value;
  } else if (key == "refine.sigma") {
    mpc.refine.sigma = value;
  } else if (key == "refine.weight_floor") {
    mpc.refine.weight_floor = value;
  } else if (key == "solver.max_iterations") {
    mpc.solver.max_iterations = static_cast<int>(value);
  } else if (key == "solver.kkt_tolerance") {
    mpc.solver.kkt_tolerance = value;
  } else if (key == "solver.rho_init") {
    mpc.solver.rho_init = value;
  } else if (key == "solver.rho_min") {
    mpc.solver.rho_min = value;
  } else if (key == "solver.budget_ms") {
    mpc.solver.budget_ms = value;
  } else if (key == "sim.timeout") {
    cfg.sim_timeout = value;
  } else if (key == "sim.num_samples") {
    cfg.num_samples = static_cast<int>(value);
  } else {
    throw ConfigError("unknown configuration key: " + key);
  }
}

}  // namespace

RunConfig build_run_config(const RunSpec& spec) {
  RunConfig cfg;
  cfg.num_samples = spec.num_samples;
  // controller-specific defaults tuned at desk scale
  cfg.mpc.solver.max_iterations = 60;
  cfg.mpc.solver.kkt_tolerance = 1e-5;

  if (!spec.config_path.empty()) {
    std::ifstream in(spec.config_path);
    if (!in) throw ConfigError("cannot open config file: " + spec.config_path);
    json parsed;
    try {
      in >> parsed;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!parsed.is_object()) throw ConfigError("config file must be a flat JSON object");
    for (const auto& [key, value] : parsed.items()) {
      if (!value.is_number()) throw ConfigError("config values must be numeric: " + key);
      apply_override(cfg, key, value.get<double>());
    }
  }
  for (const auto& kv : spec.overrides) {
    const auto pos = kv.find('=');
    if (pos == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    const std::string key = kv.substr(0, pos);
    double value = 0.0;
    try {
      value = std::stod(kv.substr(pos + 1));
    } catch (const std::exception&) {
      throw ConfigError("override value must be numeric: " + kv);
    }
    apply_override(cfg, key, value);
  }
  return cfg;
}

EpisodeResult run_scenario_episode(const ScenarioConfig& scenario, const RunSpec& spec,
                                   const RunConfig& config) {
  MpcConfig mpc = config.mpc;
  mpc.goal = scenario.robot_goal;
  mpc.obstacles = scenario.walls;
  mpc.robot_radius = scenario.robot_radius;

  const PredictionMode mode = spec.controller == ControllerVariant::mpc_cvmm
                                  ? PredictionMode::frozen_predictions
                                  : PredictionMode::bilevel;
  auto controller = std::make_shared<Controller>(mpc, mode);

  const int horizon = mpc.horizon_steps;
  const int S = (spec.predictor == PredictorKind::cvg || spec.predictor == PredictorKind::cvmm)
                    ? 1
                    : config.num_samples;
  const std::uint64_t seed = scenario.seed;
  int step_counter = 0;

  PredictCallback predictor = [&, seed](const HistoryWindow& history) -> SampleSet {
    const int step = step_counter++;
    switch (spec.predictor) {
      case PredictorKind::cvg:
        return cvg_predict(history, horizon, S);
      case PredictorKind::cvmm:
        return cvmm_predict(history, horizon, S);
      case PredictorKind::mixture: {
        const std::vector<MixtureMode> modes{{spec.mixture_bearing, 0.5}, {-spec.mixture_bearing, 0.5}};
        const std::uint64_t mix_seed = seed * 1000003ULL + static_cast<std::uint64_t>(step);
        return mixture_predict(history, horizon, S, modes, spec.mixture_noise, mix_seed);
      }
      case PredictorKind::external:
        return external_predict(history, horizon, S, spec.endpoint);
    }
    throw ConfigError("unreachable predictor kind");
  };

  ControlCallback control = [controller](const SystemState& state, const SampleSet& samples) {
    const MpcSolutionBundle b = controller->control_step(state, samples);
    ControlOutput out;
    out.action = b.action;
    out.status = b.status;
    out.fallback = b.fallback;
    out.solve_time_ms = b.solve_time_ms;
    out.kkt_residual = b.kkt_residual;
    return out;
  };

  ScenarioConfig sc = scenario;
  sc.timeout = config.sim_timeout;
  return run_episode(sc, control, predictor, mpc.dt);
}

std::string episode_trace_jsonl(const EpisodeResult& result) {
  std::ostringstream os;
  for (const auto& rec : result.trace) {
    json line;
    line["t"] = rec.time;
    line["robot"] = {{"x", rec.robot.position.x},
                     {"y", rec.robot.position.y},
                     {"theta", rec.robot.heading},
                     {"speed", rec.robot.speed}};
    json humans = json::array();
    for (const auto& h : rec.humans) {
      humans.push_back({{"x", h.position.x}, {"y", h.position.y}, {"vx", h.velocity.x}, {"vy", h.velocity.y}});
    }
    line["humans"] = humans;
    line["action"] = {rec.action.linear, rec.action.angular};
    line["status"] = to_string(rec.solver_status);
    line["fallback"] = rec.fallback;
    line["collision"] = rec.collision;
    line["frozen"] = rec.frozen;
    line["solve_ms"] = rec.solve_time_ms;
    os << line.dump() << "\n";
  }
  return os.str();
}

std::string episode_result_json(const EpisodeResult& result) {
  json j;
  j["seed"] = result.seed;
  j["success"] = result.success;
  j["navigation_time"] = result.navigation_time;
  j["collision_steps"] = result.collision_steps;
  j["frozen_steps"] = result.frozen_steps;
  j["total_steps"] = result.total_steps;
  return j.dump();
}

std::string aggregate_json(const std::vector<EpisodeResult>& results) {
  const Metrics m = aggregate_metrics(results);
  json j;
  j["count"] = results.size();
  j["success_rate"] = m.success_rate;
  j["avg_nav_time"] = m.avg_nav_time;
  j["collision_freq"] = m.collision_freq;
  j["frozen_freq"] = m.frozen_freq;
  j["any_success"] = m.any_success;
  json eps = json::array();
  for (const auto& r : results) {
    eps.push_back({{"seed", r.seed},
                   {"success", r.success},
                   {"navigation_time", r.navigation_time},
                   {"collision_steps", r.collision_steps},
                   {"frozen_steps", r.frozen_steps},
                   {"total_steps", r.total_steps}});
  }
  j["episodes"] = eps;
  return j.dump(2);
}

std::string metrics_table(const std::string& label, const Metrics& metrics) {
  std::ostringstream os;
  os << label << ": success " << metrics.success_rate << ", nav time " << metrics.avg_nav_time
     << " s, collision freq " << metrics.collision_freq << " 1/s, frozen freq " << metrics.frozen_freq
     << " 1/s";
  return os.str();
}

int cmd_run(const RunSpec& spec_in) {
  RunSpec spec = spec_in;
  try {
    spec.resolve_and_validate();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    const RunConfig config = build_run_config(spec);
    const ScenarioConfig scenario = generate_corridor(spec.seed, spec.num_humans);
    const EpisodeResult result = run_scenario_episode(scenario, spec, config);

    if (!spec.out_dir.empty()) {
      fs::create_directories(spec.out_dir);
      std::ofstream trace(fs::path(spec.out_dir) / ("trace_seed" + std::to_string(spec.seed) + ".jsonl"));
      trace << episode_trace_jsonl(result);
      std::ofstream res(fs::path(spec.out_dir) / ("result_seed" + std::to_string(spec.seed) + ".json"));
      res << episode_result_json(result) << "\n";
    }
    std::cout << "seed " << spec.seed << " " << to_string(spec.controller) << "/"
              << to_string(spec.predictor) << ": " << (result.success ? "success" : "failure") << " in "
              << result.navigation_time << " s, collisions " << result.collision_steps << ", frozen "
              << result.frozen_steps << "/" << result.total_steps << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
}

int cmd_bench(const RunSpec& spec_in) {
  RunSpec spec = spec_in;
  try {
    spec.resolve_and_validate();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  try {
    const RunConfig config = build_run_config(spec);

    // validate all scenarios up front so a bad seed aborts before the sweep
    std::vector<ScenarioConfig> scenarios;
    scenarios.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
      scenarios.push_back(generate_corridor(spec.seed + static_cast<std::uint64_t>(i), spec.num_humans));
    }

    std::vector<EpisodeResult> results(static_cast<std::size_t>(spec.count));
    std::vector<std::string> errors(static_cast<std::size_t>(spec.count));
#ifdef _OPENMP
    if (spec.workers > 0) omp_set_num_threads(spec.workers);
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < spec.count; ++i) {
      try {
        results[static_cast<std::size_t>(i)] = run_scenario_episode(scenarios[static_cast<std::size_t>(i)], spec, config);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
    for (int i = 0; i < spec.count; ++i) {
      if (!errors[static_cast<std::size_t>(i)].empty()) {
        std::cerr << "episode seed " << spec.seed + static_cast<std::uint64_t>(i)
                  << " failed: " << errors[static_cast<std::size_t>(i)] << "\n";
        if (!spec.out_dir.empty()) {
          fs::create_directories(spec.out_dir);
          std::ofstream marker(fs::path(spec.out_dir) / "PARTIAL_RESULTS");
          marker << "episode failures; aggregate not written\n";
        }
        return 3;
      }
    }

    const Metrics metrics = aggregate_metrics(results);
    const std::string label = std::string(to_string(spec.controller)) + "/" + to_string(spec.predictor);
    std::cout << metrics_table(label, metrics) << "\n";
    if (!spec.out_dir.empty()) {
      fs::create_directories(spec.out_dir);
      for (const auto& r : results) {
        std::ofstream res(fs::path(spec.out_dir) / ("result_seed" + std::to_string(r.seed) + ".json"));
        res << episode_result_json(r) << "\n";
        std::ofstream trace(fs::path(spec.out_dir) / ("trace_seed" + std::to_string(r.seed) + ".jsonl"));
        trace << episode_trace_jsonl(r);
      }
      std::ofstream agg(fs::path(spec.out_dir) / "aggregate.json");
      agg << aggregate_json(results) << "\n";
      std::ofstream table(fs::path(spec.out_dir) / "aggregate.txt");
      table << metrics_table(label, metrics) << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
}

int cmd_export(const std::string& trace_path, const std::string& format, const std::string& out_path) {
  try {
    if (format != "csv") {
      std::cerr << "error: unsupported export format: " << format << "\n";
      return 2;
    }
    std::ifstream in(trace_path);
    if (!in) {
      std::cerr << "error: cannot open trace: " << trace_path << "\n";
      return 2;
    }
    std::ostringstream csv;
    csv << "time,agent,x,y,heading,speed,vx,vy,action_linear,action_angular,status,collision,frozen\n";
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
        const double t = rec.at("t").get<double>();
        const auto& robot = rec.at("robot");
        csv << t << ",robot," << robot.at("x").get<double>() << "," << robot.at("y").get<double>() << ","
            << robot.at("theta").get<double>() << "," << robot.at("speed").get<double>() << ",,"
            << "," << rec.at("action").at(0).get<double>() << "," << rec.at("action").at(1).get<double>()
            << "," << rec.at("status").get<std::string>() << "," << rec.at("collision").get<bool>() << ","
            << rec.at("frozen").get<bool>() << "\n";
        int idx = 0;
        for (const auto& h : rec.at("humans")) {
          csv << t << ",human" << idx++ << "," << h.at("x").get<double>() << "," << h.at("y").get<double>()
              << ",,," << h.at("vx").get<double>() << "," << h.at("vy").get<double>() << ",,,,,\n";
        }
      } catch (const json::exception& e) {
        std::cerr << "error: malformed trace at line " << line_no << ": " << e.what() << "\n";
        return 3;
      }
    }
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "error: cannot write " << out_path << "\n";
      return 2;
    }
    out << csv.str();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace crowdnav
