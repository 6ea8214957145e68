#include <algorithm>
#include <cmath>
#include <vector>

#include "crowdnav/mpc.hpp"

namespace crowdnav {

void MpcConfig::validate() const {
  if (horizon_steps < 1) throw ConfigError("MpcConfig: horizon_steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("MpcConfig: dt must be positive");
  if (terminal_scale < 1.0) throw ConfigError("MpcConfig: terminal_scale must be >= 1");
  if (q_px < 0.0 || q_py < 0.0 || r_linear < 0.0 || r_angular < 0.0) {
    throw ConfigError("MpcConfig: cost weights must be nonnegative");
  }
  if (!(robot_radius > 0.0) || !(human_radius > 0.0)) throw ConfigError("MpcConfig: radii must be positive");
  if (separation_margin < 0.0) throw ConfigError("MpcConfig: separation_margin must be >= 0");
  limits.validate();
  orca.validate();
}

double stage_cost(const SystemState& state, const RobotAction& action, const MpcConfig& config) {
  const Vec2 e = state.robot.position - config.goal;
  return config.q_px * e.x * e.x + config.q_py * e.y * e.y +
         config.r_linear * action.linear * action.linear +
         config.r_angular * action.angular * action.angular;
}

double terminal_cost(const SystemState& state, const MpcConfig& config) {
  const Vec2 e = state.robot.position - config.goal;
  return config.terminal_scale * (config.q_px * e.x * e.x + config.q_py * e.y * e.y);
}

Eigen::VectorXd collision_constraints(const SystemState& state, const MpcConfig& config) {
  const std::size_t n = state.humans.size();
  const std::size_t m = config.obstacles.size();
  Eigen::VectorXd out(static_cast<int>(n + m));
  const double dh = config.human_separation();
  for (std::size_t j = 0; j < n; ++j) {
    out(static_cast<int>(j)) = norm_sq(state.robot.position - state.humans[j].position) - dh * dh;
  }
  const double dw = config.wall_separation();
  for (std::size_t l = 0; l < m; ++l) {
    const double d = point_segment_distance(state.robot.position, config.obstacles[l]);
    out(static_cast<int>(n + l)) = d * d - dw * dw;
  }
  return out;
}

namespace detail {

using D8 = Dual<8>;
using V8 = Vec2T<D8>;
using Trip = Eigen::Triplet<double>;

// A half-plane with sparse first derivatives of (normal, offset) with respect
// to decision variables.
struct LinHalfPlane {
  Vec2 normal;
  double offset{0.0};
  bool relaxable{true};
  std::vector<int> vars;
  std::vector<Vec2> dn;
  std::vector<double> db;
};

class MpcAssembly {
 public:
  MpcAssembly(SystemState state, SampleSet samples, MpcConfig config, PredictionMode mode)
      : state0_(std::move(state)), samples_(std::move(samples)), config_(std::move(config)), mode_(mode) {
    config_.validate();
    T_ = config_.horizon_steps;
    N_ = static_cast<int>(state0_.humans.size());
    M_ = static_cast<int>(config_.obstacles.size());
    S_ = N_ > 0 ? samples_.num_samples() : 1;
    bilevel_ = mode_ == PredictionMode::bilevel && N_ > 0;
    if (N_ > 0) {
      samples_.validate();
      if (samples_.num_humans() != N_) throw DimensionError("assemble: sample/human count mismatch");
      if (samples_.horizon() < T_) throw DimensionError("assemble: samples shorter than the horizon");
      if (std::abs(samples_.dt - config_.dt) > 1e-9) throw DimensionError("assemble: sample dt mismatch");
      if (static_cast<int>(state0_.weights.size()) != S_) {
        throw DimensionError("assemble: weight vector size does not match sample count");
      }
    }
    track_weights_ = bilevel_ && S_ >= 2;
    K_ = bilevel_ ? (N_ - 1) + 1 + M_ : 0;  // other humans, robot, one per segment
    num_relax_ = bilevel_ ? N_ : 0;         // agent-agent rows are relaxable, obstacles not

    layout();
  }

  // ---------------- layout ----------------
  int T_{0}, N_{0}, M_{0}, S_{1}, K_{0}, num_relax_{0};
  bool bilevel_{false};
  bool track_weights_{false};

  int v_robot_state_{0}, v_action_{0}, v_hpos_{0}, v_hvel_{0}, v_lam_{0}, v_mu_{0}, v_s_{0},
      v_ts_{0}, v_tsd_{0}, v_w_{0}, num_vars_{0};
  int e_rdyn_{0}, e_hdyn_{0}, e_stat_{0}, e_sstat_{0}, e_prim_{0}, e_w_{0}, num_eq_{0};
  int i_coll_h_{0}, i_coll_w_{0}, i_rate_{0}, num_ineq_{0};

  void layout() {
    int v = 0;
    v_robot_state_ = v;
    v += 4 * T_;
    v_action_ = v;
    v += 2 * T_;
    if (bilevel_) {
      v_hpos_ = v;
      v += 2 * N_ * T_;
      v_hvel_ = v;
      v += 2 * N_ * T_;
      v_lam_ = v;
      v += N_ * T_ * K_;
      v_mu_ = v;
      v += N_ * T_;
      v_s_ = v;
      v += N_ * T_;
      v_ts_ = v;
      v += N_ * T_ * K_;
      v_tsd_ = v;
      v += N_ * T_;
      if (track_weights_ && T_ >= 2) {
        v_w_ = v;
        v += S_ * (T_ - 1);
      }
    }
    num_vars_ = v;

    int e = 0;
    e_rdyn_ = e;
    e += 4 * T_;
    if (bilevel_) {
      e_hdyn_ = e;
      e += 2 * N_ * T_;
      e_stat_ = e;
      e += 2 * N_ * T_;
      e_sstat_ = e;
      e += N_ * T_;
      e_prim_ = e;
      e += N_ * T_ * (K_ + 1);
      if (track_weights_ && T_ >= 2) {
        e_w_ = e;
        e += S_ * (T_ - 1);
      }
    }
    num_eq_ = e;

    int i = 0;
    i_coll_h_ = i;
    i += N_ * T_;
    i_coll_w_ = i;
    i += M_ * T_;
    i_rate_ = i;
    i += 4 * T_;
    num_ineq_ = i;
  }

  // variable accessors; t conventions: states t in [1,T], actions/velocities t in [0,T)
  int rs(int t) const { return v_robot_state_ + (t - 1) * 4; }
  int act(int t) const { return v_action_ + t * 2; }
  int hp(int j, int t) const { return v_hpos_ + ((t - 1) * N_ + j) * 2; }
  int hv(int j, int t) const { return v_hvel_ + (t * N_ + j) * 2; }
  int lam(int j, int t, int i) const { return v_lam_ + (t * N_ + j) * K_ + i; }
  int mu(int j, int t) const { return v_mu_ + t * N_ + j; }
  int sl(int j, int t) const { return v_s_ + t * N_ + j; }
  int ts(int j, int t, int i) const { return v_ts_ + (t * N_ + j) * K_ + i; }
  int tsd(int j, int t) const { return v_tsd_ + t * N_ + j; }
  int wv(int t, int s) const { return v_w_ + (t - 1) * S_ + s; }  // t in [1, T-1]

  SystemState state0_;
  SampleSet samples_;
  MpcConfig config_;
  PredictionMode mode_;

  // ---------------- state readers ----------------
  Vec2 robot_pos(const Eigen::VectorXd& x, int t) const {
    if (t == 0) return state0_.robot.position;
    return {x(rs(t)), x(rs(t) + 1)};
  }
  double robot_heading(const Eigen::VectorXd& x, int t) const {
    return t == 0 ? state0_.robot.heading : x(rs(t) + 2);
  }
  double robot_speed(const Eigen::VectorXd& x, int t) const {
    return t == 0 ? state0_.robot.speed : x(rs(t) + 3);
  }
  Vec2 human_pos(const Eigen::VectorXd& x, int j, int t) const {
    if (t == 0) return state0_.humans[static_cast<std::size_t>(j)].position;
    if (!bilevel_) return frozen_pos(j, t);
    return {x(hp(j, t)), x(hp(j, t) + 1)};
  }
  Vec2 human_vel(const Eigen::VectorXd& x, int j, int t) const {
    if (t == 0) return state0_.humans[static_cast<std::size_t>(j)].velocity;
    return {x(hv(j, t - 1)), x(hv(j, t - 1) + 1)};
  }
  Vec2 frozen_pos(int j, int t) const { return samples_.samples[0].at(j, t - 1); }
  Vec2 sample_pos(int s, int j, int t) const { return samples_.samples[static_cast<std::size_t>(s)].at(j, t - 1); }
  std::vector<double> weights_at(const Eigen::VectorXd& x, int t) const {
    std::vector<double> w(static_cast<std::size_t>(S_));
    if (S_ == 1) {
      w[0] = 1.0;
      return w;
    }
    if (t == 0 || !track_weights_) {
      for (int s = 0; s < S_; ++s) w[static_cast<std::size_t>(s)] = state0_.weights[static_cast<std::size_t>(s)];
      return w;
    }
    for (int s = 0; s < S_; ++s) w[static_cast<std::size_t>(s)] = x(wv(t, s));
    return w;
  }

  // Intended position for human j at paper-step t+1 under the step-t weights.
  Vec2 intent_position(const Eigen::VectorXd& x, int j, int t) const {
    const auto w = weights_at(x, t);
    Vec2 out{0.0, 0.0};
    for (int s = 0; s < S_; ++s) out += sample_pos(s, j, t + 1) * w[static_cast<std::size_t>(s)];
    return out;
  }

  // ---------------- half-plane construction with derivatives ----------------
  static V8 seeded(const Vec2& v, int slot_x) {
    V8 out(D8(v.x), D8(v.y));
    out.x.d[static_cast<std::size_t>(slot_x)] = 1.0;
    out.y.d[static_cast<std::size_t>(slot_x) + 1] = 1.0;
    return out;
  }
  static V8 constant(const Vec2& v) { return V8(D8(v.x), D8(v.y)); }

  // Lower-level constraint list for human j at step t, in the same order the
  // rollout feeds solve_orca_qp: other humans, the robot, then segments.
  std::vector<LinHalfPlane> lower_level_planes(const Eigen::VectorXd& x, int j, int t) const {
    std::vector<LinHalfPlane> out;
    out.reserve(static_cast<std::size_t>(K_));
    const double tau = config_.orca.time_horizon_agents;
    const double resp = config_.orca.responsibility;
    const Vec2 pj = human_pos(x, j, t);
    const Vec2 vj = human_vel(x, j, t);
    const bool self_vars = t >= 1;

    auto emit_agent = [&](const Vec2& po, const Vec2& vo, double radius, bool other_vars,
                          int idx_po, int idx_vo, bool robot_other) {
      const V8 p_self = self_vars ? seeded(pj, 0) : constant(pj);
      const V8 v_self = self_vars ? seeded(vj, 2) : constant(vj);
      const V8 p_other = other_vars ? seeded(po, 4) : constant(po);
      const V8 v_other = other_vars ? seeded(vo, 6) : constant(vo);
      const HalfPlaneT<D8> hpd = agent_halfplane_impl<D8>(p_self, v_self, p_other, v_other, radius,
                                                          tau, resp, config_.dt);
      LinHalfPlane lin;
      lin.normal = {hpd.normal.x.v, hpd.normal.y.v};
      lin.offset = hpd.offset.v;
      lin.relaxable = true;
      auto push = [&](int var, int slot, double factor) {
        if (var < 0) return;
        lin.vars.push_back(var);
        lin.dn.push_back({hpd.normal.x.d[static_cast<std::size_t>(slot)] * factor,
                          hpd.normal.y.d[static_cast<std::size_t>(slot)] * factor});
        lin.db.push_back(hpd.offset.d[static_cast<std::size_t>(slot)] * factor);
      };
      auto push2 = [&](int var, int slot_a, double fa, int slot_b, double fb) {
        if (var < 0) return;
        lin.vars.push_back(var);
        lin.dn.push_back({hpd.normal.x.d[static_cast<std::size_t>(slot_a)] * fa +
                              hpd.normal.x.d[static_cast<std::size_t>(slot_b)] * fb,
                          hpd.normal.y.d[static_cast<std::size_t>(slot_a)] * fa +
                              hpd.normal.y.d[static_cast<std::size_t>(slot_b)] * fb});
        lin.db.push_back(hpd.offset.d[static_cast<std::size_t>(slot_a)] * fa +
                         hpd.offset.d[static_cast<std::size_t>(slot_b)] * fb);
      };
      if (self_vars) {
        push(hp(j, t), 0, 1.0);
        push(hp(j, t) + 1, 1, 1.0);
        push(hv(j, t - 1), 2, 1.0);
        push(hv(j, t - 1) + 1, 3, 1.0);
      }
      if (other_vars && !robot_other) {
        push(idx_po, 4, 1.0);
        push(idx_po + 1, 5, 1.0);
        push(idx_vo, 6, 1.0);
        push(idx_vo + 1, 7, 1.0);
      } else if (other_vars && robot_other) {
        // robot velocity = speed * (cos heading, sin heading)
        const double th = robot_heading(x, t);
        const double sp = robot_speed(x, t);
        push(idx_po, 4, 1.0);
        push(idx_po + 1, 5, 1.0);
        push2(idx_vo, 6, -sp * std::sin(th), 7, sp * std::cos(th));      // d/d heading
        push2(idx_vo + 1, 6, std::cos(th), 7, std::sin(th));             // d/d speed
      }
      out.push_back(std::move(lin));
    };

    for (int l = 0; l < N_; ++l) {
      if (l == j) continue;
      emit_agent(human_pos(x, l, t), human_vel(x, l, t), 2.0 * config_.human_radius, t >= 1,
                 t >= 1 ? hp(l, t) : -1, t >= 1 ? hv(l, t - 1) : -1, false);
    }
    {
      const Vec2 pr = robot_pos(x, t);
      const Vec2 vr{robot_speed(x, t) * std::cos(robot_heading(x, t)),
                    robot_speed(x, t) * std::sin(robot_heading(x, t))};
      // idx_vo here addresses (heading, speed) through the chain rule
      emit_agent(pr, vr, config_.human_radius + config_.robot_radius, t >= 1,
                 t >= 1 ? rs(t) : -1, t >= 1 ? rs(t) + 2 : -1, true);
    }
    for (int m = 0; m < M_; ++m) {
      const V8 p_self = self_vars ? seeded(pj, 0) : constant(pj);
      const HalfPlaneT<D8> hpd = obstacle_halfplane_impl<D8>(p_self, config_.obstacles[static_cast<std::size_t>(m)],
                                                             config_.human_radius,
                                                             config_.orca.time_horizon_obstacles);
      LinHalfPlane lin;
      lin.normal = {hpd.normal.x.v, hpd.normal.y.v};
      lin.offset = hpd.offset.v;
      lin.relaxable = false;
      if (self_vars) {
        for (int c = 0; c < 2; ++c) {
          lin.vars.push_back(hp(j, t) + c);
          lin.dn.push_back({hpd.normal.x.d[static_cast<std::size_t>(c)], hpd.normal.y.d[static_cast<std::size_t>(c)]});
          lin.db.push_back(hpd.offset.d[static_cast<std::size_t>(c)]);
        }
      }
      out.push_back(std::move(lin));
    }
    return out;
  }

  // Double-precision constraint list for the rollout guess.
  std::vector<OrcaConstraint> lower_level_constraints_plain(const std::vector<Vec2>& hpos,
                                                            const std::vector<Vec2>& hvel,
                                                            const Vec2& rpos, const Vec2& rvel,
                                                            int j) const {
    std::vector<OrcaConstraint> cons;
    cons.reserve(static_cast<std::size_t>(K_));
    for (int l = 0; l < N_; ++l) {
      if (l == j) continue;
      cons.push_back({agent_halfplane(hpos[static_cast<std::size_t>(j)], hvel[static_cast<std::size_t>(j)],
                                      hpos[static_cast<std::size_t>(l)], hvel[static_cast<std::size_t>(l)],
                                      2.0 * config_.human_radius, config_.orca.time_horizon_agents,
                                      config_.orca.responsibility, config_.dt),
                      true});
    }
    cons.push_back({agent_halfplane(hpos[static_cast<std::size_t>(j)], hvel[static_cast<std::size_t>(j)], rpos,
                                    rvel, config_.human_radius + config_.robot_radius,
                                    config_.orca.time_horizon_agents, config_.orca.responsibility, config_.dt),
                    true});
    for (int m = 0; m < M_; ++m) {
      const auto planes = obstacle_halfplane(hpos[static_cast<std::size_t>(j)],
                                             config_.obstacles[static_cast<std::size_t>(m)],
                                             config_.human_radius, config_.orca.time_horizon_obstacles);
      cons.push_back({planes[0], false});
    }
    return cons;
  }

  // Smooth in-horizon weight step (uniform-blend floor): the equality rows in
  // the NLP pin exactly this map.
  std::vector<double> smooth_weight_step(const std::vector<double>& w_prev,
                                         const Eigen::VectorXd& x_refined_step_t, int t) const {
    std::vector<double> lf(static_cast<std::size_t>(S_));
    double m = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < S_; ++s) {
      double err = 0.0;
      for (int j = 0; j < N_; ++j) {
        const Vec2 pj{x_refined_step_t(2 * j), x_refined_step_t(2 * j + 1)};
        err += norm_sq(sample_pos(s, j, t) - pj);
      }
      lf[static_cast<std::size_t>(s)] = -err / (static_cast<double>(N_) * config_.refine.sigma);
      m = std::max(m, lf[static_cast<std::size_t>(s)]);
    }
    double bar_sum = 0.0;
    std::vector<double> bar(static_cast<std::size_t>(S_));
    for (int s = 0; s < S_; ++s) {
      bar[static_cast<std::size_t>(s)] = std::exp(lf[static_cast<std::size_t>(s)] - m);
      bar_sum += bar[static_cast<std::size_t>(s)];
    }
    for (auto& b : bar) b /= bar_sum;
    double e = 0.0;
    for (int s = 0; s < S_; ++s) e += w_prev[static_cast<std::size_t>(s)] * bar[static_cast<std::size_t>(s)];
    const double kappa = static_cast<double>(S_) * config_.refine.weight_floor;
    std::vector<double> out(static_cast<std::size_t>(S_));
    for (int s = 0; s < S_; ++s) {
      out[static_cast<std::size_t>(s)] =
          (1.0 - kappa) * w_prev[static_cast<std::size_t>(s)] * bar[static_cast<std::size_t>(s)] / e +
          kappa / static_cast<double>(S_);
    }
    return out;
  }

  // ---------------- evaluation ----------------
  void eval(const Eigen::VectorXd& x, Eigen::VectorXd* eq, Eigen::VectorXd* ineq,
            std::vector<Trip>* jeq, std::vector<Trip>* jineq) const {
    const double dt = config_.dt;
    if (eq != nullptr) eq->setZero(num_eq_);
    if (ineq != nullptr) ineq->setZero(num_ineq_);

    // robot dynamics
    for (int t = 0; t < T_; ++t) {
      const int row = e_rdyn_ + 4 * t;
      const Vec2 p = robot_pos(x, t);
      const double th = robot_heading(x, t);
      const double sp_next = robot_speed(x, t + 1);
      const Vec2 p_next = robot_pos(x, t + 1);
      const double th_next = robot_heading(x, t + 1);
      const double ul = x(act(t));
      const double ua = x(act(t) + 1);
      if (eq != nullptr) {
        (*eq)(row + 0) = p_next.x - p.x - dt * ul * std::cos(th);
        (*eq)(row + 1) = p_next.y - p.y - dt * ul * std::sin(th);
        (*eq)(row + 2) = th_next - th - dt * ua;
        (*eq)(row + 3) = sp_next - ul;
      }
      if (jeq != nullptr) {
        jeq->emplace_back(row + 0, rs(t + 1) + 0, 1.0);
        jeq->emplace_back(row + 1, rs(t + 1) + 1, 1.0);
        jeq->emplace_back(row + 2, rs(t + 1) + 2, 1.0);
        jeq->emplace_back(row + 3, rs(t + 1) + 3, 1.0);
        jeq->emplace_back(row + 0, act(t) + 0, -dt * std::cos(th));
        jeq->emplace_back(row + 1, act(t) + 0, -dt * std::sin(th));
        jeq->emplace_back(row + 2, act(t) + 1, -dt);
        jeq->emplace_back(row + 3, act(t) + 0, -1.0);
        if (t >= 1) {
          jeq->emplace_back(row + 0, rs(t) + 0, -1.0);
          jeq->emplace_back(row + 1, rs(t) + 1, -1.0);
          jeq->emplace_back(row + 2, rs(t) + 2, -1.0);
          jeq->emplace_back(row + 0, rs(t) + 2, dt * ul * std::sin(th));
          jeq->emplace_back(row + 1, rs(t) + 2, -dt * ul * std::cos(th));
        }
      }
    }

    if (bilevel_) {
      const double c_relax = config_.orca.relaxation_penalty;
      const double vmax = config_.orca.max_speed;
      for (int t = 0; t < T_; ++t) {
        for (int j = 0; j < N_; ++j) {
          // human dynamics
          const int hrow = e_hdyn_ + 2 * (t * N_ + j);
          const Vec2 pj = human_pos(x, j, t);
          const Vec2 pj_next = human_pos(x, j, t + 1);
          const Vec2 uj{x(hv(j, t)), x(hv(j, t) + 1)};
          if (eq != nullptr) {
            (*eq)(hrow + 0) = pj_next.x - pj.x - dt * uj.x;
            (*eq)(hrow + 1) = pj_next.y - pj.y - dt * uj.y;
          }
          if (jeq != nullptr) {
            jeq->emplace_back(hrow + 0, hp(j, t + 1) + 0, 1.0);
            jeq->emplace_back(hrow + 1, hp(j, t + 1) + 1, 1.0);
            jeq->emplace_back(hrow + 0, hv(j, t) + 0, -dt);
            jeq->emplace_back(hrow + 1, hv(j, t) + 1, -dt);
            if (t >= 1) {
              jeq->emplace_back(hrow + 0, hp(j, t) + 0, -1.0);
              jeq->emplace_back(hrow + 1, hp(j, t) + 1, -1.0);
            }
          }

          // lower-level KKT blocks
          const auto planes = lower_level_planes(x, j, t);
          const double muv = x(mu(j, t));
          const double sv = x(sl(j, t));
          const Vec2 v_int = (intent_position(x, j, t) - pj) / dt;

          const int srow = e_stat_ + 2 * (t * N_ + j);
          if (eq != nullptr) {
            Vec2 f = uj * (2.0 + 2.0 * muv) - v_int * 2.0;
            for (int i = 0; i < K_; ++i) f -= planes[static_cast<std::size_t>(i)].normal * x(lam(j, t, i));
            (*eq)(srow + 0) = f.x;
            (*eq)(srow + 1) = f.y;
          }
          if (jeq != nullptr) {
            jeq->emplace_back(srow + 0, hv(j, t) + 0, 2.0 + 2.0 * muv);
            jeq->emplace_back(srow + 1, hv(j, t) + 1, 2.0 + 2.0 * muv);
            jeq->emplace_back(srow + 0, mu(j, t), 2.0 * uj.x);
            jeq->emplace_back(srow + 1, mu(j, t), 2.0 * uj.y);
            for (int i = 0; i < K_; ++i) {
              const auto& pl = planes[static_cast<std::size_t>(i)];
              jeq->emplace_back(srow + 0, lam(j, t, i), -pl.normal.x);
              jeq->emplace_back(srow + 1, lam(j, t, i), -pl.normal.y);
              const double lv = x(lam(j, t, i));
              for (std::size_t k = 0; k < pl.vars.size(); ++k) {
                jeq->emplace_back(srow + 0, pl.vars[k], -lv * pl.dn[k].x);
                jeq->emplace_back(srow + 1, pl.vars[k], -lv * pl.dn[k].y);
              }
            }
            // -2 d(v_int)/d(.)
            if (t >= 1) {
              jeq->emplace_back(srow + 0, hp(j, t) + 0, 2.0 / dt);
              jeq->emplace_back(srow + 1, hp(j, t) + 1, 2.0 / dt);
            }
            if (track_weights_ && t >= 1) {
              for (int s = 0; s < S_; ++s) {
                const Vec2 ys = sample_pos(s, j, t + 1);
                jeq->emplace_back(srow + 0, wv(t, s), -2.0 * ys.x / dt);
                jeq->emplace_back(srow + 1, wv(t, s), -2.0 * ys.y / dt);
              }
            }
          }

          // slack stationarity
          const int ssrow = e_sstat_ + t * N_ + j;
          if (eq != nullptr) {
            double g = 2.0 * c_relax * sv;
            for (int i = 0; i < K_; ++i) {
              if (planes[static_cast<std::size_t>(i)].relaxable) g -= x(lam(j, t, i));
            }
            (*eq)(ssrow) = g;
          }
          if (jeq != nullptr) {
            jeq->emplace_back(ssrow, sl(j, t), 2.0 * c_relax);
            for (int i = 0; i < K_; ++i) {
              if (planes[static_cast<std::size_t>(i)].relaxable) jeq->emplace_back(ssrow, lam(j, t, i), -1.0);
            }
          }

          // primal feasibility to slack variables
          for (int i = 0; i < K_; ++i) {
            const auto& pl = planes[static_cast<std::size_t>(i)];
            const double sigma = pl.relaxable ? 1.0 : 0.0;
            const int prow = e_prim_ + (t * N_ + j) * (K_ + 1) + i;
            if (eq != nullptr) {
              (*eq)(prow) = dot(pl.normal, uj) + sigma * sv - pl.offset - x(ts(j, t, i));
            }
            if (jeq != nullptr) {
              jeq->emplace_back(prow, hv(j, t) + 0, pl.normal.x);
              jeq->emplace_back(prow, hv(j, t) + 1, pl.normal.y);
              if (sigma > 0.0) jeq->emplace_back(prow, sl(j, t), sigma);
              jeq->emplace_back(prow, ts(j, t, i), -1.0);
              for (std::size_t k = 0; k < pl.vars.size(); ++k) {
                jeq->emplace_back(prow, pl.vars[k], dot(pl.dn[k], uj) - pl.db[k]);
              }
            }
          }
          {
            const int prow = e_prim_ + (t * N_ + j) * (K_ + 1) + K_;
            if (eq != nullptr) (*eq)(prow) = vmax * vmax - norm_sq(uj) - x(tsd(j, t));
            if (jeq != nullptr) {
              jeq->emplace_back(prow, hv(j, t) + 0, -2.0 * uj.x);
              jeq->emplace_back(prow, hv(j, t) + 1, -2.0 * uj.y);
              jeq->emplace_back(prow, tsd(j, t), -1.0);
            }
          }
        }
      }

      // weight dynamics rows
      if (track_weights_ && T_ >= 2) {
        const double kappa = static_cast<double>(S_) * config_.refine.weight_floor;
        const double inv_temp = 2.0 / (static_cast<double>(N_) * config_.refine.sigma);
        for (int t = 1; t <= T_ - 1; ++t) {
          // bar = softmax(lf(x_t)), e = <w_prev, bar>
          std::vector<double> lf(static_cast<std::size_t>(S_));
          double mshift = -std::numeric_limits<double>::infinity();
          for (int s = 0; s < S_; ++s) {
            double err = 0.0;
            for (int j = 0; j < N_; ++j) err += norm_sq(sample_pos(s, j, t) - human_pos(x, j, t));
            lf[static_cast<std::size_t>(s)] = -err / (static_cast<double>(N_) * config_.refine.sigma);
            mshift = std::max(mshift, lf[static_cast<std::size_t>(s)]);
          }
          std::vector<double> bar(static_cast<std::size_t>(S_));
          double bar_sum = 0.0;
          for (int s = 0; s < S_; ++s) {
            bar[static_cast<std::size_t>(s)] = std::exp(lf[static_cast<std::size_t>(s)] - mshift);
            bar_sum += bar[static_cast<std::size_t>(s)];
          }
          for (auto& b : bar) b /= bar_sum;

          const auto w_prev = weights_at(x, t - 1);
          double e_val = 0.0;
          for (int s = 0; s < S_; ++s) e_val += w_prev[static_cast<std::size_t>(s)] * bar[static_cast<std::size_t>(s)];

          // gbar[j] = sum_rho bar_rho dlf_rho/dp_j ; dbar_s/dp_j = bar_s (dlf_s/dp_j - gbar_j)
          std::vector<Vec2> dlf(static_cast<std::size_t>(S_ * N_));
          std::vector<Vec2> gbar(static_cast<std::size_t>(N_), Vec2{0.0, 0.0});
          for (int s = 0; s < S_; ++s) {
            for (int j = 0; j < N_; ++j) {
              const Vec2 d = (sample_pos(s, j, t) - human_pos(x, j, t)) * inv_temp;
              dlf[static_cast<std::size_t>(s * N_ + j)] = d;
              gbar[static_cast<std::size_t>(j)] += d * bar[static_cast<std::size_t>(s)];
            }
          }

          for (int s = 0; s < S_; ++s) {
            const int row = e_w_ + (t - 1) * S_ + s;
            const double wts = x(wv(t, s));
            if (eq != nullptr) {
              (*eq)(row) = wts * e_val -
                           (1.0 - kappa) * w_prev[static_cast<std::size_t>(s)] * bar[static_cast<std::size_t>(s)] -
                           (kappa / static_cast<double>(S_)) * e_val;
            }
            if (jeq != nullptr) {
              jeq->emplace_back(row, wv(t, s), e_val);
              for (int q = 0; q < S_; ++q) {
                double de_dwprev = bar[static_cast<std::size_t>(q)];
                double coef = wts * de_dwprev - (kappa / static_cast<double>(S_)) * de_dwprev;
                if (q == s) coef -= (1.0 - kappa) * bar[static_cast<std::size_t>(s)];
                if (t - 1 >= 1) jeq->emplace_back(row, wv(t - 1, q), coef);
              }
              for (int j = 0; j < N_; ++j) {
                // dbar_q/dp_j and de/dp_j
                const Vec2 gj = gbar[static_cast<std::size_t>(j)];
                Vec2 de{0.0, 0.0};
                for (int q = 0; q < S_; ++q) {
                  const Vec2 dbar_q = (dlf[static_cast<std::size_t>(q * N_ + j)] - gj) * bar[static_cast<std::size_t>(q)];
                  de += dbar_q * w_prev[static_cast<std::size_t>(q)];
                }
                const Vec2 dbar_s = (dlf[static_cast<std::size_t>(s * N_ + j)] - gj) * bar[static_cast<std::size_t>(s)];
                const Vec2 grad = de * (wts - kappa / static_cast<double>(S_)) -
                                  dbar_s * ((1.0 - kappa) * w_prev[static_cast<std::size_t>(s)]);
                jeq->emplace_back(row, hp(j, t) + 0, grad.x);
                jeq->emplace_back(row, hp(j, t) + 1, grad.y);
              }
            }
          }
        }
      }
    }

    // ---------------- inequalities ----------------
    const double dh2 = config_.human_separation() * config_.human_separation();
    const double dw2 = config_.wall_separation() * config_.wall_separation();
    for (int t = 1; t <= T_; ++t) {
      const Vec2 pr = robot_pos(x, t);
      for (int j = 0; j < N_; ++j) {
        const int row = i_coll_h_ + (t - 1) * N_ + j;
        const Vec2 pj = human_pos(x, j, t);
        const Vec2 d = pr - pj;
        if (ineq != nullptr) (*ineq)(row) = norm_sq(d) - dh2;
        if (jineq != nullptr) {
          jineq->emplace_back(row, rs(t) + 0, 2.0 * d.x);
          jineq->emplace_back(row, rs(t) + 1, 2.0 * d.y);
          if (bilevel_) {
            jineq->emplace_back(row, hp(j, t) + 0, -2.0 * d.x);
            jineq->emplace_back(row, hp(j, t) + 1, -2.0 * d.y);
          }
        }
      }
      for (int m = 0; m < M_; ++m) {
        const int row = i_coll_w_ + (t - 1) * M_ + m;
        const Vec2 cp = closest_point_on_segment(pr, config_.obstacles[static_cast<std::size_t>(m)]);
        const Vec2 d = pr - cp;
        if (ineq != nullptr) (*ineq)(row) = norm_sq(d) - dw2;
        if (jineq != nullptr) {
          // gradient of squared distance to a convex set: 2 (p - proj(p))
          jineq->emplace_back(row, rs(t) + 0, 2.0 * d.x);
          jineq->emplace_back(row, rs(t) + 1, 2.0 * d.y);
        }
      }
    }
    for (int t = 0; t < T_; ++t) {
      const int row = i_rate_ + 4 * t;
      const double upl = t == 0 ? config_.previous_action.linear : x(act(t - 1));
      const double upa = t == 0 ? config_.previous_action.angular : x(act(t - 1) + 1);
      const double ul = x(act(t));
      const double ua = x(act(t) + 1);
      if (ineq != nullptr) {
        (*ineq)(row + 0) = ul - upl - config_.limits.rate_min.linear;
        (*ineq)(row + 1) = ua - upa - config_.limits.rate_min.angular;
        (*ineq)(row + 2) = config_.limits.rate_max.linear - (ul - upl);
        (*ineq)(row + 3) = config_.limits.rate_max.angular - (ua - upa);
      }
      if (jineq != nullptr) {
        jineq->emplace_back(row + 0, act(t) + 0, 1.0);
        jineq->emplace_back(row + 1, act(t) + 1, 1.0);
        jineq->emplace_back(row + 2, act(t) + 0, -1.0);
        jineq->emplace_back(row + 3, act(t) + 1, -1.0);
        if (t >= 1) {
          jineq->emplace_back(row + 0, act(t - 1) + 0, -1.0);
          jineq->emplace_back(row + 1, act(t - 1) + 1, -1.0);
          jineq->emplace_back(row + 2, act(t - 1) + 0, 1.0);
          jineq->emplace_back(row + 3, act(t - 1) + 1, 1.0);
        }
      }
    }
  }

  double objective(const Eigen::VectorXd& x) const {
    double f = 0.0;
    for (int t = 0; t < T_; ++t) {
      const Vec2 e = robot_pos(x, t) - config_.goal;
      f += config_.q_px * e.x * e.x + config_.q_py * e.y * e.y;
      const double ul = x(act(t));
      const double ua = x(act(t) + 1);
      f += config_.r_linear * ul * ul + config_.r_angular * ua * ua;
    }
    const Vec2 e = robot_pos(x, T_) - config_.goal;
    f += config_.terminal_scale * (config_.q_px * e.x * e.x + config_.q_py * e.y * e.y);
    return f;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(num_vars_);
    for (int t = 1; t <= T_; ++t) {
      const Vec2 e = robot_pos(x, t) - config_.goal;
      const double scale = (t < T_ ? 1.0 : config_.terminal_scale);
      g(rs(t) + 0) += 2.0 * scale * config_.q_px * e.x;
      g(rs(t) + 1) += 2.0 * scale * config_.q_py * e.y;
    }
    for (int t = 0; t < T_; ++t) {
      g(act(t) + 0) += 2.0 * config_.r_linear * x(act(t));
      g(act(t) + 1) += 2.0 * config_.r_angular * x(act(t) + 1);
    }
    return g;
  }

  // PSD-projected Lagrangian curvature of the nonlinear constraint rows. The
  // unicycle dynamics contribute (heading, linear-velocity) blocks; the
  // lower-level speed-disc rows contribute a diagonal on the velocities.
  // Without these the Gauss-Newton model is exact only on the linearized
  // manifold and the iterates can cycle near the solution.
  SpMat curvature(const Eigen::VectorXd& x, const Eigen::VectorXd& eq_mult) const {
    std::vector<Trip> trips;
    if (eq_mult.size() == num_eq_) {
      const double dt = config_.dt;
      for (int t = 1; t < T_; ++t) {  // t = 0 has no heading variable
        const double th = robot_heading(x, t);
        const double ul = x(act(t));
        const double lpx = eq_mult(e_rdyn_ + 4 * t + 0);
        const double lpy = eq_mult(e_rdyn_ + 4 * t + 1);
        const double a = -dt * ul * (lpx * std::cos(th) + lpy * std::sin(th));
        const double b = -dt * (lpx * std::sin(th) - lpy * std::cos(th));
        // eigenvalues of [[a, b], [b, 0]] clamped at zero
        const double r = std::sqrt(a * a + 4.0 * b * b);
        const double l1 = 0.5 * (a + r);
        const double l2 = 0.5 * (a - r);
        double h11 = 0.0, h12 = 0.0, h22 = 0.0;
        auto add_outer = [&](double lambda, double vx, double vy) {
          if (lambda <= 0.0) return;
          const double nn = vx * vx + vy * vy;
          if (nn < 1e-300) return;
          h11 += lambda * vx * vx / nn;
          h12 += lambda * vx * vy / nn;
          h22 += lambda * vy * vy / nn;
        };
        // eigenvectors of the 2x2 block
        add_outer(l1, b, l1 - a);
        if (std::abs(b) < 1e-300 && a > 0.0) {
          h11 += a;  // diagonal block, eigenvector (1, 0)
        } else {
          add_outer(l2, b, l2 - a);
        }
        const int ith = rs(t) + 2;
        const int iul = act(t);
        if (h11 != 0.0) trips.emplace_back(ith, ith, h11);
        if (h22 != 0.0) trips.emplace_back(iul, iul, h22);
        if (h12 != 0.0) {
          trips.emplace_back(ith, iul, h12);
          trips.emplace_back(iul, ith, h12);
        }
      }
      if (bilevel_) {
        for (int t = 0; t < T_; ++t) {
          for (int j = 0; j < N_; ++j) {
            const double ld = eq_mult(e_prim_ + (t * N_ + j) * (K_ + 1) + K_);
            const double h = std::max(0.0, 2.0 * ld);
            if (h > 0.0) {
              trips.emplace_back(hv(j, t) + 0, hv(j, t) + 0, h);
              trips.emplace_back(hv(j, t) + 1, hv(j, t) + 1, h);
            }
          }
        }
      }
    }
    SpMat out(num_vars_, num_vars_);
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
  }

  Eigen::VectorXd quadratic_diag() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(num_vars_);
    for (int t = 1; t <= T_; ++t) {
      const double scale = (t < T_ ? 1.0 : config_.terminal_scale);
      d(rs(t) + 0) = 2.0 * scale * config_.q_px;
      d(rs(t) + 1) = 2.0 * scale * config_.q_py;
    }
    for (int t = 0; t < T_; ++t) {
      d(act(t) + 0) = 2.0 * config_.r_linear;
      d(act(t) + 1) = 2.0 * config_.r_angular;
    }
    return d;
  }
};

}  // namespace detail

MpcProblem assemble(const SystemState& state_init, const SampleSet& samples, const MpcConfig& config,
                    PredictionMode mode) {
  auto assembly = std::make_shared<const detail::MpcAssembly>(state_init, samples, config, mode);

  MpcProblem out;
  out.assembly_ = assembly;
  NlpProblem& nlp = out.nlp_;
  nlp.num_vars = assembly->num_vars_;
  nlp.num_eq = assembly->num_eq_;
  nlp.num_ineq = assembly->num_ineq_;
  nlp.objective = [assembly](const Eigen::VectorXd& x) { return assembly->objective(x); };
  nlp.gradient = [assembly](const Eigen::VectorXd& x) { return assembly->gradient(x); };
  nlp.eq = [assembly](const Eigen::VectorXd& x) {
    Eigen::VectorXd v;
    assembly->eval(x, &v, nullptr, nullptr, nullptr);
    return v;
  };
  nlp.eq_jacobian = [assembly](const Eigen::VectorXd& x) {
    std::vector<detail::Trip> trips;
    assembly->eval(x, nullptr, nullptr, &trips, nullptr);
    SpMat j(assembly->num_eq_, assembly->num_vars_);
    j.setFromTriplets(trips.begin(), trips.end());
    return j;
  };
  nlp.ineq = [assembly](const Eigen::VectorXd& x) {
    Eigen::VectorXd v;
    assembly->eval(x, nullptr, &v, nullptr, nullptr);
    return v;
  };
  nlp.ineq_jacobian = [assembly](const Eigen::VectorXd& x) {
    std::vector<detail::Trip> trips;
    assembly->eval(x, nullptr, nullptr, nullptr, &trips);
    SpMat j(assembly->num_ineq_, assembly->num_vars_);
    j.setFromTriplets(trips.begin(), trips.end());
    return j;
  };
  nlp.quadratic_diag = assembly->quadratic_diag();
  nlp.curvature = [assembly](const Eigen::VectorXd& x, const Eigen::VectorXd& eq_mult) {
    return assembly->curvature(x, eq_mult);
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  nlp.lower = Eigen::VectorXd::Constant(nlp.num_vars, -kInf);
  nlp.upper = Eigen::VectorXd::Constant(nlp.num_vars, kInf);
  for (int t = 0; t < assembly->T_; ++t) {
    nlp.lower(assembly->act(t) + 0) = config.limits.action_min.linear;
    nlp.lower(assembly->act(t) + 1) = config.limits.action_min.angular;
    nlp.upper(assembly->act(t) + 0) = config.limits.action_max.linear;
    nlp.upper(assembly->act(t) + 1) = config.limits.action_max.angular;
  }
  if (assembly->bilevel_) {
    for (int t = 0; t < assembly->T_; ++t) {
      for (int j = 0; j < assembly->N_; ++j) {
        for (int i = 0; i < assembly->K_; ++i) {
          nlp.lower(assembly->lam(j, t, i)) = 0.0;
          nlp.lower(assembly->ts(j, t, i)) = 0.0;
          nlp.complementarity.emplace_back(assembly->lam(j, t, i), assembly->ts(j, t, i));
        }
        nlp.lower(assembly->mu(j, t)) = 0.0;
        nlp.lower(assembly->tsd(j, t)) = 0.0;
        nlp.lower(assembly->sl(j, t)) = 0.0;
        nlp.complementarity.emplace_back(assembly->mu(j, t), assembly->tsd(j, t));
      }
    }
    if (assembly->track_weights_ && assembly->T_ >= 2) {
      for (int t = 1; t <= assembly->T_ - 1; ++t) {
        for (int s = 0; s < assembly->S_; ++s) {
          nlp.lower(assembly->wv(t, s)) = 0.0;
          nlp.upper(assembly->wv(t, s)) = 1.0;
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd MpcProblem::rollout_guess(const std::vector<RobotAction>& actions_guess) const {
  const auto& a = *assembly_;
  const auto& cfg = a.config_;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(a.num_vars_);

  // robot plan from the action guess
  RobotState rstate = a.state0_.robot;
  for (int t = 0; t < a.T_; ++t) {
    RobotAction u = t < static_cast<int>(actions_guess.size()) ? actions_guess[static_cast<std::size_t>(t)]
                                                               : RobotAction{0.0, 0.0};
    u.linear = std::clamp(u.linear, cfg.limits.action_min.linear, cfg.limits.action_max.linear);
    u.angular = std::clamp(u.angular, cfg.limits.action_min.angular, cfg.limits.action_max.angular);
    x(a.act(t) + 0) = u.linear;
    x(a.act(t) + 1) = u.angular;
    rstate = unicycle_step(rstate, u, cfg.dt);
    x(a.rs(t + 1) + 0) = rstate.position.x;
    x(a.rs(t + 1) + 1) = rstate.position.y;
    x(a.rs(t + 1) + 2) = rstate.heading;
    x(a.rs(t + 1) + 3) = rstate.speed;
  }
  if (!a.bilevel_) return x;

  // humans follow exact lower-level solves against the planned robot states
  std::vector<Vec2> hpos(static_cast<std::size_t>(a.N_)), hvel(static_cast<std::size_t>(a.N_));
  for (int j = 0; j < a.N_; ++j) {
    hpos[static_cast<std::size_t>(j)] = a.state0_.humans[static_cast<std::size_t>(j)].position;
    hvel[static_cast<std::size_t>(j)] = a.state0_.humans[static_cast<std::size_t>(j)].velocity;
  }
  std::vector<double> w = a.weights_at(x, 0);

  for (int t = 0; t < a.T_; ++t) {
    const Vec2 rp = t == 0 ? a.state0_.robot.position : Vec2{x(a.rs(t) + 0), x(a.rs(t) + 1)};
    const double rth = t == 0 ? a.state0_.robot.heading : x(a.rs(t) + 2);
    const double rsp = t == 0 ? a.state0_.robot.speed : x(a.rs(t) + 3);
    const Vec2 rv{rsp * std::cos(rth), rsp * std::sin(rth)};

    std::vector<Vec2> new_vel(static_cast<std::size_t>(a.N_));
    for (int j = 0; j < a.N_; ++j) {
      Vec2 intent{0.0, 0.0};
      for (int s = 0; s < a.S_; ++s) intent += a.sample_pos(s, j, t + 1) * w[static_cast<std::size_t>(s)];
      const Vec2 v_int = (intent - hpos[static_cast<std::size_t>(j)]) / cfg.dt;
      const auto cons = a.lower_level_constraints_plain(hpos, hvel, rp, rv, j);
      OrcaSolution sol;
      bool solved = true;
      try {
        sol = solve_orca_qp(cons, v_int, cfg.orca);
      } catch (const InfeasibleGeometryError&) {
        solved = false;
      }
      if (!solved) {
        sol.velocity = norm(v_int) > cfg.orca.max_speed ? v_int * (cfg.orca.max_speed / norm(v_int)) : v_int;
        sol.duals.assign(cons.size(), 0.0);
        sol.slack = 0.0;
        sol.disc_dual = 0.0;
      }
      new_vel[static_cast<std::size_t>(j)] = sol.velocity;
      x(a.hv(j, t) + 0) = sol.velocity.x;
      x(a.hv(j, t) + 1) = sol.velocity.y;
      x(a.sl(j, t)) = sol.slack;
      x(a.mu(j, t)) = sol.disc_dual;
      for (int i = 0; i < a.K_; ++i) {
        x(a.lam(j, t, i)) = sol.duals[static_cast<std::size_t>(i)];
        const auto& c = cons[static_cast<std::size_t>(i)];
        const double sigma = c.relaxable ? 1.0 : 0.0;
        const double margin = dot(c.plane.normal, sol.velocity) + sigma * sol.slack - c.plane.offset;
        x(a.ts(j, t, i)) = std::max(0.0, margin);
      }
      x(a.tsd(j, t)) = std::max(0.0, cfg.orca.max_speed * cfg.orca.max_speed - norm_sq(sol.velocity));
    }

    for (int j = 0; j < a.N_; ++j) {
      hvel[static_cast<std::size_t>(j)] = new_vel[static_cast<std::size_t>(j)];
      hpos[static_cast<std::size_t>(j)] += new_vel[static_cast<std::size_t>(j)] * cfg.dt;
      x(a.hp(j, t + 1) + 0) = hpos[static_cast<std::size_t>(j)].x;
      x(a.hp(j, t + 1) + 1) = hpos[static_cast<std::size_t>(j)].y;
    }

    if (a.track_weights_ && t + 1 <= a.T_ - 1) {
      Eigen::VectorXd refined(2 * a.N_);
      for (int j = 0; j < a.N_; ++j) {
        refined(2 * j) = hpos[static_cast<std::size_t>(j)].x;
        refined(2 * j + 1) = hpos[static_cast<std::size_t>(j)].y;
      }
      w = a.smooth_weight_step(w, refined, t + 1);
      for (int s = 0; s < a.S_; ++s) x(a.wv(t + 1, s)) = w[static_cast<std::size_t>(s)];
    }
  }
  return x;
}

MpcSolutionBundle MpcProblem::extract(const NlpSolution& solution) const {
  const auto& a = *assembly_;
  const Eigen::VectorXd& x = solution.primal;
  MpcSolutionBundle b;
  b.status = solution.status;
  b.kkt_residual = solution.kkt_residual;
  b.objective = solution.objective;
  b.iterations = solution.iterations;
  b.solve_time_ms = solution.solve_time_ms;

  b.action = {x(a.act(0)), x(a.act(0) + 1)};
  b.robot_plan.push_back(a.state0_.robot);
  for (int t = 1; t <= a.T_; ++t) {
    b.robot_plan.emplace_back(Vec2{x(a.rs(t)), x(a.rs(t) + 1)}, x(a.rs(t) + 2), x(a.rs(t) + 3));
  }

  std::vector<HumanState> row0;
  for (int j = 0; j < a.N_; ++j) row0.push_back(a.state0_.humans[static_cast<std::size_t>(j)]);
  b.human_plan.push_back(row0);
  for (int t = 1; t <= a.T_; ++t) {
    std::vector<HumanState> row;
    for (int j = 0; j < a.N_; ++j) {
      HumanState h;
      if (a.bilevel_) {
        h.position = {x(a.hp(j, t)), x(a.hp(j, t) + 1)};
        h.velocity = {x(a.hv(j, t - 1)), x(a.hv(j, t - 1) + 1)};
      } else {
        h.position = a.frozen_pos(j, t);
        h.velocity = t == 1 ? a.state0_.humans[static_cast<std::size_t>(j)].velocity
                            : (a.frozen_pos(j, t) - a.frozen_pos(j, t - 1)) / a.config_.dt;
      }
      row.push_back(h);
    }
    b.human_plan.push_back(row);
  }

  if (a.N_ > 0) {
    for (int t = 0; t < a.T_; ++t) {
      std::vector<double> wt = a.weights_at(x, a.track_weights_ && t >= 1 && t <= a.T_ - 1 ? t : std::min(t, 0));
      for (auto& v : wt) v = std::max(0.0, v);
      b.weight_plan.push_back(WeightVector::from_unnormalized(std::move(wt)));
    }
  }

  if (a.bilevel_) {
    b.lower_level_duals.resize(a.N_ * a.T_ * (a.K_ + 1));
    int k = 0;
    for (int t = 0; t < a.T_; ++t) {
      for (int j = 0; j < a.N_; ++j) {
        for (int i = 0; i < a.K_; ++i) b.lower_level_duals(k++) = x(a.lam(j, t, i));
        b.lower_level_duals(k++) = x(a.mu(j, t));
      }
    }
  }
  return b;
}

}  // namespace crowdnav
