#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crowdnav/core.hpp"

namespace crowdnav {

// One joint prediction: a position per human per future step.
struct TrajectorySample {
  int num_humans{0};
  int horizon{0};
  std::vector<Vec2> positions;  // row-major [human][step]

  TrajectorySample() = default;
  TrajectorySample(int n, int t) : num_humans(n), horizon(t), positions(static_cast<std::size_t>(n * t)) {}
  Vec2& at(int human, int step) { return positions[static_cast<std::size_t>(human * horizon + step)]; }
  const Vec2& at(int human, int step) const {
    return positions[static_cast<std::size_t>(human * horizon + step)];
  }
};

struct SampleSet {
  std::vector<TrajectorySample> samples;
  double dt{0.25};
  double stamp{0.0};
  bool stale{false};

  int num_samples() const { return static_cast<int>(samples.size()); }
  int num_humans() const { return samples.empty() ? 0 : samples.front().num_humans; }
  int horizon() const { return samples.empty() ? 0 : samples.front().horizon; }
  // Positions of all samples for every human at one step, indexed [sample][human].
  std::vector<std::vector<Vec2>> positions_at(int step) const;
  void validate() const;
};

struct AgentTrack {
  int id{0};
  std::vector<double> stamps;
  std::vector<Vec2> positions;
};

struct RobotTrackPoint {
  double stamp{0.0};
  Vec2 position;
  double heading{0.0};
};

// Recent motion history for every agent, uniformly sampled, most recent last.
struct HistoryWindow {
  double dt{0.25};
  double max_span{3.2};  // seconds retained
  std::vector<AgentTrack> humans;
  std::vector<RobotTrackPoint> robot;

  void push_human(int index, double stamp, const Vec2& position);
  void push_robot(double stamp, const Vec2& position, double heading);
  // Finite-difference velocity from the last two points (zero with fewer).
  Vec2 human_velocity(int index) const;
};

// Constant-velocity-goal baseline: extrapolates the current velocity; returns
// S identical samples so the downstream interface stays uniform.
SampleSet cvg_predict(const HistoryWindow& history, int horizon, int num_samples);

// Same rollout as cvg_predict; the distinction (predictions frozen during the
// MPC solve) is applied by the controller mode.
SampleSet cvmm_predict(const HistoryWindow& history, int horizon, int num_samples);

struct MixtureMode {
  double bearing{0.0};      // rad, heading offset the path bends toward over the horizon
  double probability{0.0};
};

// Synthetic multimodal generator: each joint sample draws one mode per human,
// bends the constant-velocity path toward the mode bearing, and adds Gaussian
// positional noise growing as sqrt(t).
SampleSet mixture_predict(const HistoryWindow& history, int horizon, int num_samples,
                          const std::vector<MixtureMode>& modes, double noise_scale,
                          std::uint64_t seed);

// Queries an external predictor over newline-delimited JSON (endpoint
// "host:port"). Throws StaleSampleError on timeout so the caller can reuse the
// previous set, ProtocolError on malformed payloads.
SampleSet external_predict(const HistoryWindow& history, int horizon, int num_samples,
                           const std::string& endpoint, int timeout_ms = 80);

// Serialization of the prediction wire protocol (exposed for stubs and tests).
std::string encode_prediction_request(const HistoryWindow& history, int horizon, int num_samples);
SampleSet decode_prediction_response(const std::string& line, int horizon, int num_samples,
                                     int num_humans, double dt);

enum class BandwidthRule { scott };
enum class Execution { serial, parallel };

// Initial sample likelihoods by Gaussian KDE over the flattened joint
// trajectories (leave-one-out, per-dimension Scott bandwidth), normalized to
// the simplex. Identical samples degrade to uniform weights.
WeightVector kde_init_weights(const SampleSet& samples, BandwidthRule rule = BandwidthRule::scott,
                              Execution exec = Execution::parallel);

}  // namespace crowdnav
