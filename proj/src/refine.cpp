#include "crowdnav/refine.hpp"

#include <algorithm>
#include <cmath>

namespace crowdnav {

void RefineConfig::validate(std::size_t num_samples) const {
  if (!(sigma > 0.0)) throw ConfigError("RefineConfig: sigma must be positive");
  if (weight_floor < 0.0 || (num_samples > 0 && weight_floor >= 1.0 / static_cast<double>(num_samples))) {
    throw ConfigError("RefineConfig: weight_floor outside [0, 1/S)");
  }
}

std::vector<Vec2> weighted_intent(const std::vector<std::vector<Vec2>>& samples_at_t,
                                  const WeightVector& weights) {
  if (samples_at_t.size() != weights.size()) throw DimensionError("weighted_intent: sample/weight count mismatch");
  if (samples_at_t.empty()) throw DimensionError("weighted_intent: no samples");
  const std::size_t n = samples_at_t.front().size();
  std::vector<Vec2> intent(n, Vec2{0.0, 0.0});
  for (std::size_t s = 0; s < samples_at_t.size(); ++s) {
    if (samples_at_t[s].size() != n) throw DimensionError("weighted_intent: ragged sample positions");
    for (std::size_t j = 0; j < n; ++j) intent[j] += samples_at_t[s][j] * weights[s];
  }
  return intent;
}

Vec2 intent_velocity(const HumanState& human, const Vec2& intent_position, double dt) {
  if (!(dt > 0.0)) throw InvalidStateError("intent_velocity: dt must be positive");
  return (intent_position - human.position) / dt;
}

WeightVector weight_update(const WeightVector& prev_weights,
                           const std::vector<Vec2>& refined_positions,
                           const std::vector<std::vector<Vec2>>& sample_positions_at_t,
                           const RefineConfig& config) {
  const std::size_t S = prev_weights.size();
  const std::size_t N = refined_positions.size();
  if (sample_positions_at_t.size() != S) throw DimensionError("weight_update: sample count mismatch");
  config.validate(S);

  // Agreement factors, computed with a log-sum-exp shift: the shift cancels in
  // the normalization, so the result is exactly eqs-as-written without underflow.
  std::vector<double> log_factor(S);
  double log_max = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < S; ++s) {
    if (sample_positions_at_t[s].size() != N) throw DimensionError("weight_update: human count mismatch");
    double err = 0.0;
    for (std::size_t j = 0; j < N; ++j) err += norm_sq(sample_positions_at_t[s][j] - refined_positions[j]);
    log_factor[s] = -err / (static_cast<double>(N) * config.sigma);
    log_max = std::max(log_max, log_factor[s]);
  }

  std::vector<double> mass(S);
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    mass[s] = prev_weights[s] * std::exp(log_factor[s] - log_max);
    total += mass[s];
  }
  if (!(total > 0.0)) {
    // All products underflowed (possible only with floor = 0): fall back to the
    // normalized agreement factors alone.
    for (std::size_t s = 0; s < S; ++s) mass[s] = std::exp(log_factor[s] - log_max);
  }

  WeightVector updated = WeightVector::from_unnormalized(std::move(mass));
  if (config.weight_floor <= 0.0) return updated;

  std::vector<double> floored(S);
  for (std::size_t s = 0; s < S; ++s) floored[s] = std::max(updated[s], config.weight_floor);
  return WeightVector::from_unnormalized(std::move(floored));
}

}  // namespace crowdnav
