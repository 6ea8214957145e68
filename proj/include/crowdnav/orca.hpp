#pragma once

#include <cstddef>
#include <vector>

#include "crowdnav/core.hpp"
#include "crowdnav/orca_geometry.hpp"

namespace crowdnav {

using HalfPlane = HalfPlaneT<double>;

struct OrcaParams {
  double time_horizon_agents{5.0};     // tau, s
  double time_horizon_obstacles{2.0};  // tau_obst, s
  double responsibility{0.5};          // share of the avoidance effort taken by self
  double max_speed{1.4};               // m/s
  double relaxation_penalty{1e4};      // quadratic penalty on the shared agent-constraint slack
  void validate() const;
};

// One linear velocity constraint fed to the relaxed ORCA QP. Agent-agent
// constraints are relaxable by the shared slack; obstacle constraints are not.
struct OrcaConstraint {
  HalfPlane plane;
  bool relaxable{true};
};

struct OrcaSolution {
  Vec2 velocity;
  std::vector<double> duals;  // one per input half-plane, >= 0
  double disc_dual{0.0};      // multiplier of the speed-disc constraint
  double slack{0.0};          // shared relaxation slack, >= 0
  std::vector<int> active_set;
  bool disc_active{false};
};

struct OrcaKktResiduals {
  Vec2 stationarity;
  double stationarity_slack{0.0};
  std::vector<double> primal;        // max(0, offset_i - normal_i.v - sigma_i * s), plus disc last
  std::vector<double> dual_negativity;  // min(0, lambda_i), plus disc dual last
  std::vector<double> complementarity;  // lambda_i * (normal_i.v + sigma_i * s - offset_i), plus disc
  double infinity_norm() const;
};

// ORCA half-plane of self against a moving neighbor (see orca_geometry.hpp).
// escape_dt scales the push-apart construction when the agents already overlap.
HalfPlane agent_halfplane(const Vec2& self_pos, const Vec2& self_vel, const Vec2& other_pos,
                          const Vec2& other_vel, double combined_radius, double tau,
                          double responsibility, double escape_dt = 0.25);

// Velocity constraints keeping self clear of a static segment over tau_obst;
// one half-plane per nearest feature.
std::vector<HalfPlane> obstacle_halfplane(const Vec2& self_pos, const Segment& segment,
                                          double radius, double tau_obst);

// Solve min |v - v_intent|^2 + penalty * s^2 over the half-planes (agent ones
// relaxed by the shared slack s >= 0) and the speed disc |v| <= max_speed.
// Exact to ~1e-10; duals certify optimality via kkt_residuals.
OrcaSolution solve_orca_qp(const std::vector<OrcaConstraint>& constraints, const Vec2& v_intent,
                           const OrcaParams& params);

OrcaKktResiduals kkt_residuals(const std::vector<OrcaConstraint>& constraints,
                               const OrcaSolution& solution, const Vec2& v_intent,
                               const OrcaParams& params);

}  // namespace crowdnav
