// Serial vs OpenMP timing for the data-parallel kernels, checking that both
// paths produce identical results.

#include <chrono>
#include <cstdio>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "crowdnav/prediction.hpp"
#include "crowdnav/runner.hpp"
#include "crowdnav/sim.hpp"

using namespace crowdnav;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class F>
double time_ms(F&& f, int reps) {
  const double t0 = now_ms();
  for (int r = 0; r < reps; ++r) f();
  return (now_ms() - t0) / reps;
}

void bench_kde() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  SampleSet set;
  set.dt = 0.25;
  for (int s = 0; s < 256; ++s) {
    TrajectorySample sample(8, 12);
    for (auto& p : sample.positions) p = {g(rng), g(rng)};
    set.samples.push_back(sample);
  }
  WeightVector serial = kde_init_weights(set, BandwidthRule::scott, Execution::serial);
  WeightVector parallel = kde_init_weights(set, BandwidthRule::scott, Execution::parallel);
  bool equal = true;
  for (std::size_t i = 0; i < serial.size(); ++i) equal = equal && serial[i] == parallel[i];
  const double ts = time_ms([&] { kde_init_weights(set, BandwidthRule::scott, Execution::serial); }, 5);
  const double tp = time_ms([&] { kde_init_weights(set, BandwidthRule::scott, Execution::parallel); }, 5);
  std::printf("kde_init_weights  S=256 N=8 T=12   serial %8.2f ms   parallel %8.2f ms   x%.2f   %s\n",
              ts, tp, ts / tp, equal ? "identical" : "MISMATCH");
}

void bench_step_world() {
  ScenarioConfig sc;
  sc.corridor_width = 12.0;
  sc.corridor_length = 40.0;
  sc.walls = {Segment{{-1.0, 6.0}, {41.0, 6.0}}, Segment{{-1.0, -6.0}, {41.0, -6.0}}};
  sc.robot_start = RobotState({0.5, 0.0}, 0.0, 0.0);
  sc.robot_goal = {39.0, 0.0};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < 64; ++j) {
    HumanAttributes attr;
    attr.radius = 0.3;
    attr.orca_time_horizon = 1.0 + 4.0 * u(rng);
    attr.max_speed = 0.8 + 0.6 * u(rng);
    attr.preferred_speed = attr.max_speed;
    attr.goal = {40.0 * u(rng), -5.0 + 10.0 * u(rng)};
    sc.human_attributes.push_back(attr);
    sc.human_starts.push_back({40.0 * u(rng), -5.0 + 10.0 * u(rng)});
  }
  WorldState ws = make_world(sc);
  WorldState wp = ws;
  const RobotAction a{0.8, 0.1};
  for (int k = 0; k < 40; ++k) {
    step_world(ws, a, 0.25, Execution::serial);
    step_world(wp, a, 0.25, Execution::parallel);
  }
  bool equal = true;
  for (std::size_t j = 0; j < ws.humans.size(); ++j) {
    equal = equal && ws.humans[j].position.x == wp.humans[j].position.x &&
            ws.humans[j].position.y == wp.humans[j].position.y;
  }
  WorldState scratch = make_world(sc);
  const double ts = time_ms([&] { step_world(scratch, a, 0.25, Execution::serial); }, 50);
  WorldState scratch2 = make_world(sc);
  const double tp = time_ms([&] { step_world(scratch2, a, 0.25, Execution::parallel); }, 50);
  std::printf("step_world        N=64              serial %8.2f ms   parallel %8.2f ms   x%.2f   %s\n",
              ts, tp, ts / tp, equal ? "identical" : "MISMATCH");
}

void bench_episode_batch() {
  RunSpec spec;
  spec.controller = ControllerVariant::sicnav_cvg;
  spec.predictor = PredictorKind::cvg;
  spec.num_humans = 2;
  spec.seed = 0;
  spec.count = 6;
  spec.resolve_and_validate();
  RunConfig cfg = build_run_config(spec);
  cfg.sim_timeout = 10.0;

  auto run_batch = [&](int threads) {
    std::vector<EpisodeResult> results(static_cast<std::size_t>(spec.count));
#ifdef _OPENMP
    omp_set_num_threads(threads);
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < spec.count; ++i) {
      const ScenarioConfig sc = generate_corridor(static_cast<std::uint64_t>(i), spec.num_humans);
      results[static_cast<std::size_t>(i)] = run_scenario_episode(sc, spec, cfg);
    }
    return results;
  };

  const double t1 = now_ms();
  const auto serial = run_batch(1);
  const double t2 = now_ms();
#ifdef _OPENMP
  const int hw = omp_get_num_procs();
#else
  const int hw = 1;
#endif
  const auto parallel = run_batch(hw);
  const double t3 = now_ms();
  bool equal = serial.size() == parallel.size();
  for (std::size_t i = 0; i < serial.size() && equal; ++i) {
    equal = serial[i].success == parallel[i].success && serial[i].total_steps == parallel[i].total_steps;
  }
  std::printf("episode batch     6 episodes N=2    serial %8.0f ms   parallel %8.0f ms   x%.2f   %s\n",
              t2 - t1, t3 - t2, (t2 - t1) / (t3 - t2), equal ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads available: %d\n", omp_get_num_procs());
#else
  std::printf("built without OpenMP\n");
#endif
  bench_kde();
  bench_step_world();
  bench_episode_batch();
  return 0;
}
