#include "crowdnav/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace crowdnav {

double wrap_angle(double a) {
  if (!std::isfinite(a)) throw InvalidStateError("wrap_angle: non-finite angle");
  const double two_pi = 2.0 * M_PI;
  double r = std::fmod(a, two_pi);
  if (r <= -M_PI) r += two_pi;
  if (r > M_PI) r -= two_pi;
  return r;
}

RobotState::RobotState(Vec2 p, double th, double v) : position(p), heading(wrap_angle(th)), speed(v) {
  if (!is_finite(position) || !std::isfinite(speed)) {
    throw InvalidStateError("RobotState: non-finite component");
  }
}

Vec2 RobotState::velocity() const { return {speed * std::cos(heading), speed * std::sin(heading)}; }

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw InvalidStateError("WeightVector: empty");
  double sum = 0.0;
  for (double v : w_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidStateError("WeightVector: negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidStateError("WeightVector: entries do not sum to 1");
}

WeightVector WeightVector::uniform(std::size_t size) {
  WeightVector out;
  out.w_.assign(size, size > 0 ? 1.0 / static_cast<double>(size) : 0.0);
  if (size == 0) throw InvalidStateError("WeightVector::uniform: size 0");
  return out;
}

WeightVector WeightVector::from_unnormalized(std::vector<double> mass) {
  if (mass.empty()) throw InvalidStateError("WeightVector: empty");
  double sum = 0.0;
  for (double v : mass) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidStateError("WeightVector: negative or non-finite mass");
    sum += v;
  }
  WeightVector out;
  if (sum <= 0.0) return uniform(mass.size());
  out.w_ = std::move(mass);
  for (double& v : out.w_) v /= sum;
  // Exact renormalization so chained updates cannot drift off the simplex.
  const double s2 = std::accumulate(out.w_.begin(), out.w_.end(), 0.0);
  for (double& v : out.w_) v /= s2;
  return out;
}

void ActuationLimits::validate() const {
  if (action_min.linear > action_max.linear || action_min.angular > action_max.angular ||
      rate_min.linear > rate_max.linear || rate_min.angular > rate_max.angular) {
    throw ConfigError("ActuationLimits: min exceeds max");
  }
}

RobotState unicycle_step(const RobotState& state, const RobotAction& action, double dt) {
  if (!(dt > 0.0)) throw InvalidStateError("unicycle_step: dt must be positive");
  if (!is_finite(state.position) || !std::isfinite(state.heading) || !std::isfinite(state.speed) ||
      !std::isfinite(action.linear) || !std::isfinite(action.angular)) {
    throw InvalidStateError("unicycle_step: non-finite input");
  }
  RobotState out;
  out.position = state.position + Vec2{std::cos(state.heading), std::sin(state.heading)} * (dt * action.linear);
  out.heading = wrap_angle(state.heading + dt * action.angular);
  out.speed = action.linear;
  return out;
}

HumanState integrator_step(const HumanState& state, const Vec2& velocity, double dt) {
  if (!(dt > 0.0)) throw InvalidStateError("integrator_step: dt must be positive");
  if (!is_finite(state.position) || !is_finite(velocity)) {
    throw InvalidStateError("integrator_step: non-finite input");
  }
  return HumanState{state.position + velocity * dt, velocity};
}

Vec2 position_of(const SystemState& state, std::size_t index) {
  if (index == 0) return state.robot.position;
  if (index > state.humans.size()) throw DimensionError("position_of: agent index out of range");
  return state.humans[index - 1].position;
}

Vec2 closest_point_on_segment(const Vec2& point, const Segment& segment) {
  const Vec2 d = segment.b - segment.a;
  const double len_sq = norm_sq(d);
  if (len_sq <= 0.0) throw DegenerateGeometryError("segment endpoints coincide");
  const double t = std::clamp(dot(point - segment.a, d) / len_sq, 0.0, 1.0);
  return segment.a + d * t;
}

double point_segment_distance(const Vec2& point, const Segment& segment) {
  return norm(point - closest_point_on_segment(point, segment));
}

}  // namespace crowdnav
