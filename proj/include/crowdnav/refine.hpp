#pragma once

#include <vector>

#include "crowdnav/core.hpp"

namespace crowdnav {

struct RefineConfig {
  double sigma{0.25};        // m^2, temperature of the sample-agreement factor
  double weight_floor{1e-6};  // numerical floor keeping modes revivable
  void validate(std::size_t num_samples) const;
};

// Importance-weighted average of the per-sample predicted positions, one
// result per human. samples_at_t is indexed [sample][human].
std::vector<Vec2> weighted_intent(const std::vector<std::vector<Vec2>>& samples_at_t,
                                  const WeightVector& weights);

// Velocity that carries the human from its current position to the intended
// position in one step.
Vec2 intent_velocity(const HumanState& human, const Vec2& intent_position, double dt);

// One importance-weight step: agreement factors against the refined positions,
// product with the prior, renormalization, then floor-and-renormalize.
// refined_positions is indexed [human]; sample_positions_at_t is [sample][human].
WeightVector weight_update(const WeightVector& prev_weights,
                           const std::vector<Vec2>& refined_positions,
                           const std::vector<std::vector<Vec2>>& sample_positions_at_t,
                           const RefineConfig& config);

}  // namespace crowdnav
