#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crowdnav/runner.hpp"

namespace {

bool parse_seed_range(const std::string& text, std::uint64_t& seed, int& count) {
  const auto pos = text.find(':');
  if (pos == std::string::npos) return false;
  try {
    const std::uint64_t lo = std::stoull(text.substr(0, pos));
    const std::uint64_t hi = std::stoull(text.substr(pos + 1));
    if (hi <= lo) return false;
    seed = lo;
    count = static_cast<int>(hi - lo);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void add_common_flags(CLI::App* cmd, crowdnav::RunSpec& spec, std::string& controller,
                      std::string& predictor, std::string& seed_range) {
  cmd->add_option("--seed", spec.seed, "scenario seed");
  cmd->add_option("--seed-range", seed_range, "seed range lo:hi (hi exclusive)");
  cmd->add_option("--humans", spec.num_humans, "number of simulated humans");
  cmd->add_option("--controller", controller, "sicnav-cvg | sicnav-samples | mpc-cvmm");
  cmd->add_option("--predictor", predictor, "cvg | cvmm | mixture | external");
  cmd->add_option("--endpoint", spec.endpoint, "external predictor endpoint host:port");
  cmd->add_option("--samples", spec.num_samples, "prediction samples S for sample-set predictors");
  cmd->add_option("--workers", spec.workers, "worker threads for bench (0 = hardware)");
  cmd->add_option("--out", spec.out_dir, "output directory");
  cmd->add_option("--config", spec.config_path, "JSON config file with flat dotted keys");
  cmd->add_flag("--verbose", spec.verbose, "per-step diagnostics");
  cmd->add_option("overrides", spec.overrides, "config overrides key=value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowd navigation experiment harness"};
  app.require_subcommand(1);

  crowdnav::RunSpec spec;
  std::string controller = "sicnav-cvg";
  std::string predictor;
  std::string seed_range;
  std::string trace_path;
  std::string format = "csv";
  std::string export_out = "trace.csv";

  CLI::App* run = app.add_subcommand("run", "run one episode and write its trace");
  add_common_flags(run, spec, controller, predictor, seed_range);

  CLI::App* bench = app.add_subcommand("bench", "run a batch of seeded episodes and aggregate metrics");
  add_common_flags(bench, spec, controller, predictor, seed_range);
  bench->add_option("--count", spec.count, "number of seeded episodes");

  CLI::App* exp = app.add_subcommand("export", "convert a trace JSONL file to CSV");
  exp->add_option("--trace", trace_path, "trace .jsonl path")->required();
  exp->add_option("--format", format, "output format (csv)");
  exp->add_option("--out", export_out, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    spec.controller = crowdnav::parse_controller(controller);
    if (!predictor.empty()) {
      spec.predictor = crowdnav::parse_predictor(predictor);
      spec.predictor_given = true;
    }
    if (!seed_range.empty() && !parse_seed_range(seed_range, spec.seed, spec.count)) {
      std::cerr << "error: --seed-range must be lo:hi with hi > lo\n";
      return 1;
    }
  } catch (const crowdnav::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  if (run->parsed()) return crowdnav::cmd_run(spec);
  if (bench->parsed()) return crowdnav::cmd_bench(spec);
  if (exp->parsed()) return crowdnav::cmd_export(trace_path, format, export_out);
  return 1;
}
