#include "crowdnav/orca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace crowdnav {

void OrcaParams::validate() const {
  if (!(time_horizon_agents > 0.0) || !(time_horizon_obstacles > 0.0)) {
    throw ConfigError("OrcaParams: horizons must be positive");
  }
  if (responsibility < 0.0 || responsibility > 1.0) throw ConfigError("OrcaParams: responsibility outside [0,1]");
  if (!(max_speed > 0.0)) throw ConfigError("OrcaParams: max_speed must be positive");
  if (!(relaxation_penalty > 0.0)) throw ConfigError("OrcaParams: relaxation_penalty must be positive");
}

HalfPlane agent_halfplane(const Vec2& self_pos, const Vec2& self_vel, const Vec2& other_pos,
                          const Vec2& other_vel, double combined_radius, double tau,
                          double responsibility, double escape_dt) {
  if (norm_sq(other_pos - self_pos) < 1e-24) {
    throw DegenerateGeometryError("agent_halfplane: coincident positions");
  }
  if (!(combined_radius > 0.0) || !(tau > 0.0) || !(escape_dt > 0.0)) {
    throw ConfigError("agent_halfplane: radius, tau and escape_dt must be positive");
  }
  return detail::agent_halfplane_impl<double>(self_pos, self_vel, other_pos, other_vel,
                                              combined_radius, tau, responsibility, escape_dt);
}

std::vector<HalfPlane> obstacle_halfplane(const Vec2& self_pos, const Segment& segment,
                                          double radius, double tau_obst) {
  if (norm_sq(segment.b - segment.a) <= 0.0) throw DegenerateGeometryError("obstacle_halfplane: zero-length segment");
  return {detail::obstacle_halfplane_impl<double>(self_pos, segment, radius, tau_obst)};
}

namespace {

// Exact projection of `target` onto the intersection of half-planes and the
// speed disc, processing constraints incrementally: whenever constraint i is
// violated the optimum moves to line i, where the problem becomes a 1D clamp
// over the feasible interval. Returns false when the intersection is empty.
bool project_fixed_slack(const std::vector<Vec2>& normals, const std::vector<double>& offsets,
                         double vmax, const Vec2& target, Vec2& out) {
  Vec2 v = target;
  const double vmax_sq = vmax * vmax;
  if (norm_sq(v) > vmax_sq) v = v * (vmax / norm(v));

  const std::size_t m = normals.size();
  for (std::size_t i = 0; i < m; ++i) {
    if (dot(normals[i], v) >= offsets[i]) continue;

    const Vec2 q0 = normals[i] * offsets[i];
    const Vec2 dir = perp(normals[i]);
    const double disc = vmax_sq - offsets[i] * offsets[i];
    if (disc < 0.0) return false;  // line misses the disc entirely
    double t_lo = -std::sqrt(disc);
    double t_hi = std::sqrt(disc);

    for (std::size_t j = 0; j < i; ++j) {
      const double den = dot(normals[j], dir);
      const double num = offsets[j] - dot(normals[j], q0);
      if (std::abs(den) < 1e-14) {
        if (num > 1e-12) return false;  // parallel and violated
        continue;
      }
      const double bound = num / den;
      if (den > 0.0) {
        t_lo = std::max(t_lo, bound);
      } else {
        t_hi = std::min(t_hi, bound);
      }
      if (t_lo > t_hi) return false;
    }

    const double t_opt = dot(dir, target - q0);
    v = q0 + dir * std::clamp(t_opt, t_lo, t_hi);
  }
  out = v;
  return true;
}

struct DualEstimate {
  std::vector<double> lambda;  // per input constraint
  double mu{0.0};
  std::vector<int> active;
  bool disc_active{false};
};

bool solve_2x2(double a11, double a12, double a21, double a22, double b1, double b2, double& x1,
               double& x2) {
  const double det = a11 * a22 - a12 * a21;
  if (std::abs(det) < 1e-14) return false;
  x1 = (b1 * a22 - b2 * a12) / det;
  x2 = (a11 * b2 - a21 * b1) / det;
  return true;
}

// Recover multipliers at a projection point: find a small non-negative
// combination of active normals (and the disc) matching the objective gradient.
DualEstimate extract_duals(const std::vector<Vec2>& normals, const std::vector<double>& offsets,
                           double vmax, const Vec2& target, const Vec2& v) {
  DualEstimate est;
  est.lambda.assign(normals.size(), 0.0);

  double scale = std::max(1.0, vmax);
  for (double b : offsets) scale = std::max(scale, std::abs(b));
  const double tol_act = 1e-7 * scale;

  std::vector<int> active;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (std::abs(dot(normals[i], v) - offsets[i]) <= tol_act) active.push_back(static_cast<int>(i));
  }
  const bool disc_active = std::abs(norm(v) - vmax) <= tol_act;

  const Vec2 g = (v - target) * 2.0;
  const double gtol = 1e-8 * std::max(1.0, norm(g));

  auto residual = [&](const std::vector<int>& idx, const std::vector<double>& lam, double mu) {
    Vec2 r = g;
    for (std::size_t k = 0; k < idx.size(); ++k) r -= normals[static_cast<std::size_t>(idx[k])] * lam[k];
    r += v * (2.0 * mu);
    return norm(r);
  };

  // trivial: gradient already zero
  if (norm(g) <= gtol) {
    est.active = active;
    est.disc_active = false;
    return est;
  }

  // disc + at most one line
  if (disc_active) {
    for (int first = -1; first < static_cast<int>(active.size()); ++first) {
      std::vector<int> idx;
      if (first >= 0) idx.push_back(active[static_cast<std::size_t>(first)]);
      double lam = 0.0, mu = 0.0;
      bool ok = false;
      if (idx.empty()) {
        // g = -2 mu v  ->  mu = -g.v/(2|v|^2)
        mu = -dot(g, v) / (2.0 * norm_sq(v));
        ok = residual(idx, {}, mu) <= gtol;
        if (ok && mu >= -1e-10) {
          est.mu = std::max(0.0, mu);
          est.active = active;
          est.disc_active = true;
          return est;
        }
      } else {
        const Vec2 n = normals[static_cast<std::size_t>(idx[0])];
        ok = solve_2x2(n.x, -2.0 * v.x, n.y, -2.0 * v.y, g.x, g.y, lam, mu);
        if (ok && lam >= -1e-10 && mu >= -1e-10 && residual(idx, {lam}, mu) <= gtol) {
          est.lambda[static_cast<std::size_t>(idx[0])] = std::max(0.0, lam);
          est.mu = std::max(0.0, mu);
          est.active = active;
          est.disc_active = true;
          return est;
        }
      }
    }
  }

  // pairs of lines
  for (std::size_t a = 0; a < active.size(); ++a) {
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      const Vec2 n1 = normals[static_cast<std::size_t>(active[a])];
      const Vec2 n2 = normals[static_cast<std::size_t>(active[b])];
      double l1 = 0.0, l2 = 0.0;
      if (!solve_2x2(n1.x, n2.x, n1.y, n2.y, g.x, g.y, l1, l2)) continue;
      if (l1 >= -1e-10 && l2 >= -1e-10 && residual({active[a], active[b]}, {l1, l2}, 0.0) <= gtol) {
        est.lambda[static_cast<std::size_t>(active[a])] = std::max(0.0, l1);
        est.lambda[static_cast<std::size_t>(active[b])] = std::max(0.0, l2);
        est.active = active;
        return est;
      }
    }
  }

  // single line
  for (int idx : active) {
    const Vec2 n = normals[static_cast<std::size_t>(idx)];
    const double lam = dot(g, n);
    if (lam >= -1e-10 && residual({idx}, {lam}, 0.0) <= gtol) {
      est.lambda[static_cast<std::size_t>(idx)] = std::max(0.0, lam);
      est.active = active;
      return est;
    }
  }

  // Fallback: nonnegative least squares over all active normals via the
  // normal equations on the full set (degenerate geometry; rare).
  if (!active.empty()) {
    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd A(2, k);
    for (int c = 0; c < k; ++c) {
      A(0, c) = normals[static_cast<std::size_t>(active[static_cast<std::size_t>(c)])].x;
      A(1, c) = normals[static_cast<std::size_t>(active[static_cast<std::size_t>(c)])].y;
    }
    Eigen::Vector2d gg(g.x, g.y);
    Eigen::VectorXd lam = A.colPivHouseholderQr().solve(gg);
    for (int c = 0; c < k; ++c) {
      est.lambda[static_cast<std::size_t>(active[static_cast<std::size_t>(c)])] =
          std::max(0.0, lam(c));
    }
  }
  est.active = active;
  est.disc_active = disc_active;
  return est;
}

struct PolishOutcome {
  Vec2 v;
  double s{0.0};
  std::vector<double> lambda;
  double mu{0.0};
  bool disc_active{false};
  bool ok{false};
};

// Solve the KKT equality system exactly for a fixed active set. With the disc
// active the system is linear for fixed mu; the disc radius equation is then a
// scalar root-finding problem in mu.
PolishOutcome polish_active_set(const std::vector<Vec2>& normals, const std::vector<double>& offsets,
                                const std::vector<bool>& relaxable, double vmax, double penalty,
                                const Vec2& target, const std::vector<int>& active, bool disc_active) {
  PolishOutcome out;
  out.lambda.assign(normals.size(), 0.0);
  const int k = static_cast<int>(active.size());
  const int dim = 3 + k;

  auto solve_fixed_mu = [&](double mu, Eigen::VectorXd& sol) -> bool {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    A(0, 0) = 2.0 + 2.0 * mu;
    A(1, 1) = 2.0 + 2.0 * mu;
    A(2, 2) = 2.0 * penalty;
    rhs(0) = 2.0 * target.x;
    rhs(1) = 2.0 * target.y;
    for (int c = 0; c < k; ++c) {
      const auto i = static_cast<std::size_t>(active[static_cast<std::size_t>(c)]);
      A(0, 3 + c) = -normals[i].x;
      A(1, 3 + c) = -normals[i].y;
      A(2, 3 + c) = relaxable[i] ? -1.0 : 0.0;
      A(3 + c, 0) = normals[i].x;
      A(3 + c, 1) = normals[i].y;
      A(3 + c, 2) = relaxable[i] ? 1.0 : 0.0;
      rhs(3 + c) = offsets[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (!qr.isInvertible()) return false;
    sol = qr.solve(rhs);
    return sol.allFinite();
  };

  Eigen::VectorXd sol;
  double mu = 0.0;
  if (!disc_active) {
    if (!solve_fixed_mu(0.0, sol)) return out;
  } else {
    auto radius_excess = [&](double m, Eigen::VectorXd& s_out) -> double {
      if (!solve_fixed_mu(m, s_out)) return std::numeric_limits<double>::quiet_NaN();
      return s_out(0) * s_out(0) + s_out(1) * s_out(1) - vmax * vmax;
    };
    Eigen::VectorXd tmp;
    double h0 = radius_excess(0.0, tmp);
    if (!std::isfinite(h0)) return out;
    if (h0 <= 0.0) {
      // disc not actually binding
      sol = tmp;
      mu = 0.0;
    } else {
      double lo = 0.0, hi = 1.0;
      double hhi = radius_excess(hi, tmp);
      int grow = 0;
      while (std::isfinite(hhi) && hhi > 0.0 && grow++ < 60) {
        hi *= 2.0;
        hhi = radius_excess(hi, tmp);
      }
      if (!std::isfinite(hhi) || hhi > 0.0) return out;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double hm = radius_excess(mid, tmp);
        if (!std::isfinite(hm)) return out;
        if (hm > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      mu = 0.5 * (lo + hi);
      if (!solve_fixed_mu(mu, sol)) return out;
    }
  }

  out.v = {sol(0), sol(1)};
  out.s = sol(2);
  out.mu = mu;
  out.disc_active = disc_active;
  for (int c = 0; c < k; ++c) {
    out.lambda[static_cast<std::size_t>(active[static_cast<std::size_t>(c)])] = sol(3 + c);
  }

  // sign checks, then verify feasibility of the full constraint set
  if (out.s < -1e-11 || out.mu < -1e-11) return out;
  for (double l : out.lambda) {
    if (l < -1e-9) return out;
  }
  out.s = std::max(0.0, out.s);
  for (double& l : out.lambda) l = std::max(0.0, l);

  double scale = std::max(1.0, vmax);
  for (double b : offsets) scale = std::max(scale, std::abs(b));
  for (std::size_t i = 0; i < normals.size(); ++i) {
    const double sigma = relaxable[i] ? 1.0 : 0.0;
    if (dot(normals[i], out.v) + sigma * out.s - offsets[i] < -5e-9 * scale) return out;
  }
  if (norm(out.v) > vmax * (1.0 + 1e-9) + 1e-12) return out;

  // stationarity residual
  Vec2 r = (out.v - target) * 2.0 + out.v * (2.0 * out.mu);
  double lam_relax_sum = 0.0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    r -= normals[i] * out.lambda[i];
    if (relaxable[i]) lam_relax_sum += out.lambda[i];
  }
  if (norm(r) > 1e-8 * std::max(1.0, scale)) return out;
  if (std::abs(2.0 * penalty * out.s - lam_relax_sum) > 1e-7 * std::max(1.0, penalty * out.s)) return out;

  out.ok = true;
  return out;
}

}  // namespace

OrcaSolution solve_orca_qp(const std::vector<OrcaConstraint>& constraints, const Vec2& v_intent,
                           const OrcaParams& params) {
  params.validate();
  if (constraints.size() > 64) throw DimensionError("solve_orca_qp: more than 64 half-planes");
  if (!is_finite(v_intent)) throw InvalidStateError("solve_orca_qp: non-finite intent velocity");

  const double vmax = params.max_speed;
  const double penalty = params.relaxation_penalty;
  const std::size_t m = constraints.size();

  std::vector<Vec2> normals(m);
  std::vector<double> base_offsets(m);
  std::vector<bool> relaxable(m);
  bool any_relaxable = false;
  for (std::size_t i = 0; i < m; ++i) {
    normals[i] = constraints[i].plane.normal;
    base_offsets[i] = constraints[i].plane.offset;
    relaxable[i] = constraints[i].relaxable;
    any_relaxable = any_relaxable || relaxable[i];
  }

  // Hard constraints must be feasible on their own.
  {
    std::vector<Vec2> hn;
    std::vector<double> hb;
    for (std::size_t i = 0; i < m; ++i) {
      if (!relaxable[i]) {
        hn.push_back(normals[i]);
        hb.push_back(base_offsets[i]);
      }
    }
    Vec2 tmp;
    if (!project_fixed_slack(hn, hb, vmax, v_intent, tmp)) {
      throw InfeasibleGeometryError("solve_orca_qp: obstacle constraints alone are infeasible");
    }
  }

  auto shifted = [&](double s) {
    std::vector<double> b = base_offsets;
    for (std::size_t i = 0; i < m; ++i) {
      if (relaxable[i]) b[i] -= s;
    }
    return b;
  };

  auto project_at = [&](double s, Vec2& v) { return project_fixed_slack(normals, shifted(s), vmax, v_intent, v); };

  // psi(s) = d/ds objective along the slack coordinate; nondecreasing in s.
  auto eval_psi = [&](double s, Vec2& v, DualEstimate& est, bool& feasible) -> double {
    feasible = project_at(s, v);
    if (!feasible) return -std::numeric_limits<double>::infinity();
    est = extract_duals(normals, shifted(s), vmax, v_intent, v);
    double lam_relax = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (relaxable[i]) lam_relax += est.lambda[i];
    }
    return 2.0 * penalty * s - lam_relax;
  };

  double s_star = 0.0;
  Vec2 v_star;
  DualEstimate est;
  bool feasible = false;
  const double psi0 = eval_psi(0.0, v_star, est, feasible);

  // Feasible intent: the projection never moved, so the intent itself is the
  // exact optimum with all multipliers zero.
  if (feasible && v_star.x == v_intent.x && v_star.y == v_intent.y) {
    OrcaSolution sol;
    sol.velocity = v_intent;
    sol.duals.assign(m, 0.0);
    return sol;
  }

  if (!any_relaxable) {
    if (!feasible) throw InfeasibleGeometryError("solve_orca_qp: constraints infeasible");
  } else if (!feasible || psi0 < 0.0) {
    double s_hi = vmax + 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (relaxable[i]) s_hi = std::max(s_hi, base_offsets[i] + vmax + 1.0);
    }
    double lo = 0.0, hi = s_hi;
    for (int it = 0; it < 120; ++it) {
      const double mid = 0.5 * (lo + hi);
      Vec2 vm;
      DualEstimate em;
      bool fm = false;
      const double p = eval_psi(mid, vm, em, fm);
      if (p < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    s_star = hi;
    eval_psi(s_star, v_star, est, feasible);
    if (!feasible) throw InfeasibleGeometryError("solve_orca_qp: constraints infeasible");
  }

  // Polish: re-solve the KKT equality system on the detected active set.
  OrcaSolution sol;
  sol.duals.assign(m, 0.0);

  // Try the detected active set first, then both disc hypotheses and
  // leave-one-out subsets (degenerate vertices can hide the true set).
  std::vector<std::pair<std::vector<int>, bool>> candidates;
  candidates.emplace_back(est.active, est.disc_active);
  candidates.emplace_back(est.active, !est.disc_active);
  for (std::size_t drop = 0; drop < est.active.size(); ++drop) {
    std::vector<int> sub;
    for (std::size_t i = 0; i < est.active.size(); ++i) {
      if (i != drop) sub.push_back(est.active[i]);
    }
    candidates.emplace_back(sub, est.disc_active);
    candidates.emplace_back(sub, !est.disc_active);
  }

  for (const auto& [act, disc] : candidates) {
    PolishOutcome p = polish_active_set(normals, base_offsets, relaxable, vmax, penalty, v_intent,
                                        act, disc);
    if (p.ok) {
      sol.velocity = p.v;
      sol.slack = p.s;
      sol.duals = p.lambda;
      sol.disc_dual = p.mu;
      sol.disc_active = p.disc_active && p.mu > 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (p.lambda[i] > 0.0) sol.active_set.push_back(static_cast<int>(i));
      }
      return sol;
    }
  }

  // Fall back to the bisection point with estimated duals.
  sol.velocity = v_star;
  sol.slack = s_star;
  sol.duals = est.lambda;
  sol.disc_dual = est.mu;
  sol.disc_active = est.disc_active;
  sol.active_set = est.active;
  return sol;
}

OrcaKktResiduals kkt_residuals(const std::vector<OrcaConstraint>& constraints,
                               const OrcaSolution& solution, const Vec2& v_intent,
                               const OrcaParams& params) {
  const std::size_t m = constraints.size();
  if (solution.duals.size() != m) throw DimensionError("kkt_residuals: dual dimension mismatch");

  OrcaKktResiduals res;
  const Vec2 v = solution.velocity;
  const double s = solution.slack;

  Vec2 stat = (v - v_intent) * 2.0 + v * (2.0 * solution.disc_dual);
  double lam_relax = 0.0;
  bool any_relax = false;
  for (std::size_t i = 0; i < m; ++i) {
    stat -= constraints[i].plane.normal * solution.duals[i];
    if (constraints[i].relaxable) {
      lam_relax += solution.duals[i];
      any_relax = true;
    }
  }
  res.stationarity = stat;
  res.stationarity_slack = any_relax ? 2.0 * params.relaxation_penalty * s - lam_relax : 0.0;

  res.primal.reserve(m + 1);
  res.dual_negativity.reserve(m + 1);
  res.complementarity.reserve(m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    const double sigma = constraints[i].relaxable ? 1.0 : 0.0;
    const double margin = dot(constraints[i].plane.normal, v) + sigma * s - constraints[i].plane.offset;
    res.primal.push_back(std::max(0.0, -margin));
    res.dual_negativity.push_back(std::min(0.0, solution.duals[i]));
    res.complementarity.push_back(solution.duals[i] * margin);
  }
  const double speed_margin = params.max_speed - norm(v);
  res.primal.push_back(std::max(0.0, -speed_margin));
  res.dual_negativity.push_back(std::min(0.0, solution.disc_dual));
  res.complementarity.push_back(solution.disc_dual * speed_margin);
  return res;
}

double OrcaKktResiduals::infinity_norm() const {
  double out = std::max(std::abs(stationarity.x), std::abs(stationarity.y));
  out = std::max(out, std::abs(stationarity_slack));
  for (double p : primal) out = std::max(out, std::abs(p));
  for (double d : dual_negativity) out = std::max(out, std::abs(d));
  for (double c : complementarity) out = std::max(out, std::abs(c));
  return out;
}

}  // namespace crowdnav
