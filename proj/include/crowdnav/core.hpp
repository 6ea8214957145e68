#pragma once

#include <cstddef>
#include <vector>

#include "crowdnav/errors.hpp"
#include "crowdnav/vec2.hpp"

namespace crowdnav {

// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

// Robot state: 2D position, heading and commanded speed (kinematic unicycle).
struct RobotState {
  Vec2 position;
  double heading{0.0};  // rad, wrapped to (-pi, pi]
  double speed{0.0};    // m/s, last commanded linear velocity

  RobotState() = default;
  RobotState(Vec2 p, double th, double v);
  Vec2 velocity() const;  // speed along the heading
};

struct RobotAction {
  double linear{0.0};   // m/s
  double angular{0.0};  // rad/s
};

struct HumanState {
  Vec2 position;
  Vec2 velocity;
};

// Importance weights over joint prediction samples; lives on the probability simplex.
class WeightVector {
 public:
  WeightVector() = default;
  // Validates the simplex invariant (entries >= 0, sum == 1 within 1e-9).
  explicit WeightVector(std::vector<double> w);
  static WeightVector uniform(std::size_t size);
  // Normalizes nonnegative masses to the simplex; all-zero input yields uniform.
  static WeightVector from_unnormalized(std::vector<double> mass);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  const std::vector<double>& values() const { return w_; }

 private:
  std::vector<double> w_;
};

// Joint system state: robot, N humans, and the sample importance weights.
struct SystemState {
  RobotState robot;
  std::vector<HumanState> humans;
  WeightVector weights;
};

// Static obstacle as a line segment.
struct Segment {
  Vec2 a;
  Vec2 b;
};

struct ActuationLimits {
  RobotAction action_min{-0.25, -1.5};
  RobotAction action_max{1.2, 1.5};
  RobotAction rate_min{-0.3, -0.75};  // per control step
  RobotAction rate_max{0.3, 0.75};
  void validate() const;
};

// Forward-Euler unicycle update; the stored speed becomes the commanded linear velocity.
RobotState unicycle_step(const RobotState& state, const RobotAction& action, double dt);

// Forward-Euler integrator update for a holonomic human.
HumanState integrator_step(const HumanState& state, const Vec2& velocity, double dt);

// Position of agent `index` (0 = robot, 1..N = humans).
Vec2 position_of(const SystemState& state, std::size_t index);

double point_segment_distance(const Vec2& point, const Segment& segment);
Vec2 closest_point_on_segment(const Vec2& point, const Segment& segment);

}  // namespace crowdnav
