#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdnav/mpc.hpp"
#include "crowdnav/sim.hpp"

namespace crowdnav {

enum class ControllerVariant { sicnav_cvg, sicnav_samples, mpc_cvmm };
enum class PredictorKind { cvg, cvmm, mixture, external };

ControllerVariant parse_controller(const std::string& name);
PredictorKind parse_predictor(const std::string& name);
const char* to_string(ControllerVariant variant);
const char* to_string(PredictorKind kind);

struct RunSpec {
  ControllerVariant controller{ControllerVariant::sicnav_cvg};
  PredictorKind predictor{PredictorKind::cvg};
  bool predictor_given{false};
  std::string endpoint;
  std::uint64_t seed{0};
  int count{1};
  int num_humans{3};
  int num_samples{9};       // S for sample-set predictors
  int workers{0};           // 0 = all hardware threads
  double mixture_bearing{0.6};
  double mixture_noise{0.03};
  std::string out_dir;
  std::string config_path;
  std::vector<std::string> overrides;  // dotted key=value pairs
  bool verbose{false};

  // Applies controller/predictor compatibility (mpc-cvmm forces the cvmm
  // predictor and frozen mode; sicnav-cvg pairs with cvg) and defaults.
  void resolve_and_validate();
};

// Effective per-run configuration after config file and overrides.
struct RunConfig {
  MpcConfig mpc;
  double sim_timeout{30.0};
  int num_samples{9};
};

RunConfig build_run_config(const RunSpec& spec);

// Library entry points behind the CLI subcommands; return process exit codes
// (0 ok, 1 usage, 2 config, 3 runtime).
int cmd_run(const RunSpec& spec);
int cmd_bench(const RunSpec& spec);
int cmd_export(const std::string& trace_path, const std::string& format, const std::string& out_path);

// Pieces shared with the test suites.
EpisodeResult run_scenario_episode(const ScenarioConfig& scenario, const RunSpec& spec,
                                   const RunConfig& config);
std::string episode_trace_jsonl(const EpisodeResult& result);
std::string episode_result_json(const EpisodeResult& result);
std::string aggregate_json(const std::vector<EpisodeResult>& results);
std::string metrics_table(const std::string& label, const Metrics& metrics);

}  // namespace crowdnav
