#include "crowdnav/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "crowdnav/errors.hpp"
#include "crowdnav/qp.hpp"

namespace crowdnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Evaluation {
  double f{0.0};
  Eigen::VectorXd grad;
  Eigen::VectorXd ceq;
  Eigen::VectorXd cin;
  SpMat jeq;
  SpMat jin;
  bool finite{true};
};

bool jac_finite(const SpMat& j) {
  for (int k = 0; k < j.outerSize(); ++k) {
    for (SpMat::InnerIterator it(j, k); it; ++it) {
      if (!std::isfinite(it.value())) return false;
    }
  }
  return true;
}

Evaluation evaluate(const NlpProblem& p, const Eigen::VectorXd& x, bool with_jacobians) {
  Evaluation ev;
  ev.f = p.objective(x);
  ev.grad = p.gradient(x);
  ev.ceq = p.num_eq > 0 ? p.eq(x) : Eigen::VectorXd(0);
  ev.cin = p.num_ineq > 0 ? p.ineq(x) : Eigen::VectorXd(0);
  if (with_jacobians) {
    ev.jeq = p.num_eq > 0 ? p.eq_jacobian(x) : SpMat(0, p.num_vars);
    ev.jin = p.num_ineq > 0 ? p.ineq_jacobian(x) : SpMat(0, p.num_vars);
  }
  ev.finite = std::isfinite(ev.f) && ev.grad.allFinite() && ev.ceq.allFinite() && ev.cin.allFinite();
  if (with_jacobians) ev.finite = ev.finite && jac_finite(ev.jeq) && jac_finite(ev.jin);
  return ev;
}

// l1 constraint violation including the rho-relaxed complementarity rows
double violation_l1(const NlpProblem& p, const Evaluation& ev, const Eigen::VectorXd& x, double rho) {
  double v = 0.0;
  for (int i = 0; i < ev.ceq.size(); ++i) v += std::abs(ev.ceq(i));
  for (int i = 0; i < ev.cin.size(); ++i) v += std::max(0.0, -ev.cin(i));
  for (const auto& [a, b] : p.complementarity) v += std::max(0.0, x(a) * x(b) - rho);
  return v;
}

double violation_max(const NlpProblem& p, const Evaluation& ev, const Eigen::VectorXd& x, double rho) {
  double v = 0.0;
  for (int i = 0; i < ev.ceq.size(); ++i) v = std::max(v, std::abs(ev.ceq(i)));
  for (int i = 0; i < ev.cin.size(); ++i) v = std::max(v, -ev.cin(i));
  for (const auto& [a, b] : p.complementarity) v = std::max(v, x(a) * x(b) - rho);
  return std::max(0.0, v);
}

double max_comp_product(const NlpProblem& p, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (const auto& [a, b] : p.complementarity) v = std::max(v, x(a) * x(b));
  return v;
}

}  // namespace

void SolverSettings::validate() const {
  if (!(kkt_tolerance > 0.0) || !(qp_tolerance > 0.0)) throw ConfigError("SolverSettings: tolerances must be positive");
  if (!(rho_min > 0.0) || !(rho_init >= rho_min)) throw ConfigError("SolverSettings: need rho_init >= rho_min > 0");
  if (!(rho_decay > 0.0) || !(rho_decay < 1.0)) throw ConfigError("SolverSettings: rho_decay in (0,1)");
  if (!(budget_ms > 0.0)) throw ConfigError("SolverSettings: budget must be positive");
  if (max_iterations < 1) throw ConfigError("SolverSettings: max_iterations must be >= 1");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iter";
    case SolveStatus::budget_exhausted: return "budget_exhausted";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

NlpSolution SqpSolver::solve(const NlpProblem& problem, const Eigen::VectorXd& initial_guess,
                             const WarmStart* warm) const {
  settings_.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&]() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  };

  const int n = problem.num_vars;
  if (initial_guess.size() != n) throw DimensionError("SqpSolver: initial guess dimension mismatch");
  const int m_eq = problem.num_eq;
  const int m_in = problem.num_ineq;
  const int m_cp = static_cast<int>(problem.complementarity.size());
  const int m_rows = m_eq + m_in + m_cp;

  const Eigen::VectorXd lb = problem.lower.size() == n ? problem.lower : Eigen::VectorXd::Constant(n, -kInf);
  const Eigen::VectorXd ub = problem.upper.size() == n ? problem.upper : Eigen::VectorXd::Constant(n, kInf);

  Eigen::VectorXd x = initial_guess.cwiseMax(lb).cwiseMin(ub);

  NlpSolution out;
  out.eq_multipliers = Eigen::VectorXd::Zero(m_eq);
  out.ineq_multipliers = Eigen::VectorXd::Zero(m_in + m_cp);
  out.bound_multipliers = Eigen::VectorXd::Zero(n);

  // homotopy schedule over the complementarity relaxation
  std::vector<double> stages;
  if (m_cp == 0) {
    stages.push_back(settings_.rho_min);
  } else {
    for (double r = settings_.rho_init; r > settings_.rho_min * (1.0 + 1e-12); r *= settings_.rho_decay) {
      stages.push_back(r);
    }
    stages.push_back(settings_.rho_min);
  }

  const bool use_gn = problem.quadratic_diag.size() == n;
  Eigen::MatrixXd bfgs;
  if (!use_gn) bfgs = Eigen::MatrixXd::Identity(n, n);

  double sigma = 1e-6;  // Levenberg regularization of the QP Hessian
  double eta = 1.0;     // l1 merit penalty
  double trust = 1e3;   // box safeguard on the step; sigma does the real damping
  double last_alpha = -1.0;

  Evaluation ev = evaluate(problem, x, true);
  if (!ev.finite) {
    out.primal = x;
    out.status = SolveStatus::numerical_failure;
    out.diagnostic = "non-finite callback output at initial point";
    out.solve_time_ms = elapsed_ms();
    return out;
  }

  Eigen::VectorXd best_x = x;
  double best_viol = violation_max(problem, ev, x, settings_.rho_min);
  double best_obj = ev.f;
  auto consider_best = [&](const Eigen::VectorXd& cand, double viol, double obj) {
    const double tol = settings_.kkt_tolerance;
    bool better = false;
    if (viol <= tol && best_viol <= tol) {
      better = obj < best_obj;
    } else if (viol <= tol) {
      better = true;
    } else if (best_viol > tol) {
      better = viol < best_viol;
    }
    if (better) {
      best_x = cand;
      best_viol = viol;
      best_obj = obj;
    }
  };

  int iter_count = 0;
  std::size_t stage_idx = 0;
  SolveStatus status = SolveStatus::max_iterations;
  double kkt = kInf;

  Eigen::VectorXd qp_x_warm, qp_y_warm;
  Eigen::VectorXd lam_eq = out.eq_multipliers, lam_in = out.ineq_multipliers,
                  lam_bnd = out.bound_multipliers;
  if (warm != nullptr) {
    if (warm->eq_multipliers.size() == m_eq) lam_eq = warm->eq_multipliers;
    if (warm->ineq_multipliers.size() == m_in + m_cp) lam_in = warm->ineq_multipliers;
  }
  Eigen::VectorXd x_prev;
  Eigen::VectorXd lag_grad_prev;
  bool have_bfgs_point = false;

  while (iter_count < settings_.max_iterations) {
    if (elapsed_ms() > settings_.budget_ms) {
      status = SolveStatus::budget_exhausted;
      break;
    }
    const double rho = stages[stage_idx];

    // ---- QP subproblem: linearized constraints, convex quadratic model ----
    SpMat a(m_rows, n);
    {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<std::size_t>(ev.jeq.nonZeros() + ev.jin.nonZeros() + 2 * m_cp));
      for (int k = 0; k < ev.jeq.outerSize(); ++k) {
        for (SpMat::InnerIterator it(ev.jeq, k); it; ++it) {
          trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
      }
      for (int k = 0; k < ev.jin.outerSize(); ++k) {
        for (SpMat::InnerIterator it(ev.jin, k); it; ++it) {
          trips.emplace_back(m_eq + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
      }
      for (int c = 0; c < m_cp; ++c) {
        const auto [ia, ib] = problem.complementarity[static_cast<std::size_t>(c)];
        trips.emplace_back(m_eq + m_in + c, ia, -x(ib));
        trips.emplace_back(m_eq + m_in + c, ib, -x(ia));
      }
      a.setFromTriplets(trips.begin(), trips.end());
    }

    Eigen::VectorXd rl(m_rows), ru(m_rows);
    for (int i = 0; i < m_eq; ++i) {
      rl(i) = -ev.ceq(i);
      ru(i) = -ev.ceq(i);
    }
    for (int i = 0; i < m_in; ++i) {
      rl(m_eq + i) = -ev.cin(i);
      ru(m_eq + i) = kInf;
    }
    for (int c = 0; c < m_cp; ++c) {
      const auto [ia, ib] = problem.complementarity[static_cast<std::size_t>(c)];
      rl(m_eq + m_in + c) = -(rho - x(ia) * x(ib));
      ru(m_eq + m_in + c) = kInf;
    }

    QpProblem qp;
    if (use_gn) {
      qp.hess_diag = (problem.quadratic_diag.array() + sigma).matrix();
      if (problem.curvature) qp.hess_sparse = problem.curvature(x, lam_eq);
    } else {
      qp.hess_dense = bfgs;
      qp.hess_dense.diagonal().array() += sigma;
    }
    qp.grad = ev.grad;
    qp.constraints = a;
    qp.row_lower = rl;
    qp.row_upper = ru;
    qp.lower = (lb - x).cwiseMax(-trust);
    qp.upper = (ub - x).cwiseMin(trust);
    qp.elastic_penalty = settings_.qp_elastic_penalty;

    QpSettings qps;
    qps.eps_abs = settings_.qp_tolerance;
    qps.eps_rel = settings_.qp_tolerance;
    qps.max_iterations = settings_.qp_max_iterations;

    const QpSolution qsol = solve_qp(qp, qps, qp_x_warm.size() == n ? &qp_x_warm : nullptr,
                                     qp_y_warm.size() == m_rows + n ? &qp_y_warm : nullptr);
    if (!qsol.x.allFinite()) {
      status = SolveStatus::numerical_failure;
      out.diagnostic = "QP subproblem produced a non-finite step";
      break;
    }
    const double qp_dual_norm = std::max(qsol.row_duals.lpNorm<Eigen::Infinity>(),
                                         qsol.bound_duals.lpNorm<Eigen::Infinity>());
    const bool qp_trusted = qsol.converged || (qsol.primal_residual <= 1e-6 && qp_dual_norm <= 1e7);
    if (!qp_trusted) {
      // near-infeasible linearization: damp and relinearize from the same point
      ++iter_count;
      sigma = sigma * 10.0;
      trust = std::max(0.25 * trust, 1.0);
      qp_x_warm.resize(0);
      qp_y_warm.resize(0);
      if (sigma > 1e6) {
        status = SolveStatus::infeasible;
        break;
      }
      continue;
    }
    const Eigen::VectorXd step = (x + qsol.x).cwiseMax(lb).cwiseMin(ub) - x;
    qp_x_warm = qsol.x;
    qp_y_warm.resize(m_rows + n);
    qp_y_warm << qsol.row_duals, qsol.bound_duals;

    lam_eq = -qsol.row_duals.head(m_eq);
    lam_in = (-qsol.row_duals.segment(m_eq, m_in + m_cp)).cwiseMax(0.0);
    lam_bnd = -qsol.bound_duals;
    // The trust region shares the bound rows; drop multipliers created by the
    // trust box itself (step at the box while the true bound is elsewhere).
    Eigen::VectorXd bnd_for_stat = qsol.bound_duals;
    for (int j = 0; j < n; ++j) {
      const double xt = x(j) + step(j);
      const bool at_lb = std::isfinite(lb(j)) && xt - lb(j) <= 1e-7 * std::max(1.0, std::abs(lb(j)));
      const bool at_ub = std::isfinite(ub(j)) && ub(j) - xt <= 1e-7 * std::max(1.0, std::abs(ub(j)));
      const bool trust_binding = std::abs(step(j)) >= trust * (1.0 - 1e-6);
      if (trust_binding && !at_lb && !at_ub) {
        lam_bnd(j) = 0.0;
        bnd_for_stat(j) = 0.0;
      }
    }

    // ---- KKT residual of the rho-relaxed problem at the current iterate ----
    Eigen::VectorXd stat = ev.grad;
    if (m_eq > 0) stat -= ev.jeq.transpose() * lam_eq;
    if (m_in > 0) stat -= ev.jin.transpose() * lam_in.head(m_in);
    for (int c = 0; c < m_cp; ++c) {
      const auto [ia, ib] = problem.complementarity[static_cast<std::size_t>(c)];
      stat(ia) += lam_in(m_in + c) * x(ib);
      stat(ib) += lam_in(m_in + c) * x(ia);
    }
    stat += bnd_for_stat;
    double comp_slack = 0.0;
    for (int i = 0; i < m_in; ++i) comp_slack = std::max(comp_slack, std::abs(lam_in(i) * ev.cin(i)));
    for (int c = 0; c < m_cp; ++c) {
      const auto [ia, ib] = problem.complementarity[static_cast<std::size_t>(c)];
      comp_slack = std::max(comp_slack, std::abs(lam_in(m_in + c) * (rho - x(ia) * x(ib))));
    }
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(lb(j)) && lam_bnd(j) > 0.0) comp_slack = std::max(comp_slack, lam_bnd(j) * (x(j) - lb(j)));
      if (std::isfinite(ub(j)) && lam_bnd(j) < 0.0) comp_slack = std::max(comp_slack, -lam_bnd(j) * (ub(j) - x(j)));
    }
    const double viol_now = violation_max(problem, ev, x, rho);
    const double stat_norm = stat.lpNorm<Eigen::Infinity>();
    kkt = std::max({stat_norm, viol_now, comp_slack});

    consider_best(x, violation_max(problem, ev, x, settings_.rho_min), ev.f);

    if (settings_.iteration_log) {
      std::ostringstream os;
      os << "{\"iter\":" << iter_count << ",\"rho\":" << rho
         << ",\"merit\":" << ev.f + eta * violation_l1(problem, ev, x, rho) << ",\"kkt\":" << kkt
         << ",\"step\":" << step.lpNorm<Eigen::Infinity>() << ",\"sigma\":" << sigma << ",\"eta\":" << eta << ",\"trust\":" << trust << ",\"dd\":" << (ev.grad.dot(step) - eta * violation_l1(problem, ev, x, rho)) << ",\"last_alpha\":" << last_alpha
         << ",\"qp_conv\":" << (qsol.converged ? 1 : 0) << ",\"qp_pol\":" << (qsol.polished ? 1 : 0)
         << ",\"qp_iters\":" << qsol.iterations << ",\"qp_rp\":" << qsol.primal_residual
         << ",\"qp_rd\":" << qsol.dual_residual << ",\"stat\":" << stat_norm
         << ",\"viol\":" << viol_now << ",\"cs\":" << comp_slack;
      int stat_arg = 0, step_arg = 0;
      stat.cwiseAbs().maxCoeff(&stat_arg);
      step.cwiseAbs().maxCoeff(&step_arg);
      os << ",\"stat_arg\":" << stat_arg << ",\"step_arg\":" << step_arg << "}";
      settings_.iteration_log(os.str());
    }

    const bool final_stage = stage_idx + 1 == stages.size();
    // intermediate stages only steer the homotopy; loose tracking suffices
    const double stage_tol = final_stage
                                 ? settings_.kkt_tolerance
                                 : std::max({settings_.kkt_tolerance, 0.05 * rho, 0.05 * std::sqrt(rho)});
    if (kkt <= stage_tol) {
      if (final_stage) {
        status = SolveStatus::converged;
        break;
      }
      ++stage_idx;
      continue;
    }

    // ---- l1 merit line search ----
    const double lam_norm = std::max({m_eq > 0 ? lam_eq.lpNorm<Eigen::Infinity>() : 0.0,
                                      lam_in.size() > 0 ? lam_in.lpNorm<Eigen::Infinity>() : 0.0, 1.0});
    if (eta < 1.2 * lam_norm) {
      eta = 2.0 * lam_norm;
    } else if (eta > 10.0 * lam_norm) {
      eta = 2.0 * lam_norm;  // multipliers shrank; relax the penalty with them
    }

    const double v0 = violation_l1(problem, ev, x, rho);
    const double merit0 = ev.f + eta * v0;
    const double dir_deriv = ev.grad.dot(step) - eta * v0;

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_try;
    Evaluation ev_try;
    auto armijo_ok = [&](double a, double merit_try) {
      return merit_try <= merit0 + settings_.armijo_c1 * a * std::min(dir_deriv, 0.0) + 1e-12;
    };
    for (int ls = 0; ls < settings_.max_line_search; ++ls) {
      x_try = x + alpha * step;
      ev_try = evaluate(problem, x_try, false);
      if (ev_try.finite) {
        const double merit_try = ev_try.f + eta * violation_l1(problem, ev_try, x_try, rho);
        if (armijo_ok(alpha, merit_try)) {
          accepted = true;
          break;
        }
        // Second-order correction: cancel the curvature-induced constraint
        // drift of the full step before giving up on it.
        if (ls == 0 && m_eq + m_in > 0) {
          QpProblem soc;
          soc.hess_diag = qp.hess_diag;
          if (use_gn && problem.curvature) soc.hess_sparse = qp.hess_sparse;
          if (!use_gn) soc.hess_dense = qp.hess_dense;
          soc.grad = Eigen::VectorXd::Zero(n);
          soc.constraints = a;
          Eigen::VectorXd rl2(m_rows), ru2(m_rows);
          for (int i = 0; i < m_eq; ++i) {
            rl2(i) = -ev_try.ceq(i);
            ru2(i) = -ev_try.ceq(i);
          }
          for (int i = 0; i < m_in; ++i) {
            rl2(m_eq + i) = -ev_try.cin(i);
            ru2(m_eq + i) = kInf;
          }
          for (int c = 0; c < m_cp; ++c) {
            const auto [ia, ib] = problem.complementarity[static_cast<std::size_t>(c)];
            rl2(m_eq + m_in + c) = -(rho - x_try(ia) * x_try(ib));
            ru2(m_eq + m_in + c) = kInf;
          }
          soc.row_lower = rl2;
          soc.row_upper = ru2;
          soc.elastic_penalty = settings_.qp_elastic_penalty;
          soc.lower = ((lb - x_try).cwiseMax(-trust)).cwiseMin(0.0);
          soc.upper = ((ub - x_try).cwiseMin(trust)).cwiseMax(0.0);
          const QpSolution corr = solve_qp(soc, qps, nullptr, nullptr);
          if (corr.x.allFinite()) {
            const Eigen::VectorXd x_soc = (x_try + corr.x).cwiseMax(lb).cwiseMin(ub);
            const Evaluation ev_soc = evaluate(problem, x_soc, false);
            if (ev_soc.finite) {
              const double merit_soc = ev_soc.f + eta * violation_l1(problem, ev_soc, x_soc, rho);
              if (armijo_ok(alpha, merit_soc)) {
                x_try = x_soc;
                ev_try = ev_soc;
                accepted = true;
                break;
              }
            }
          }
        }
      }
      alpha *= settings_.backtrack_factor;
    }

    last_alpha = accepted ? alpha : 0.0;
    ++iter_count;
    if (!accepted) {
      sigma = sigma * 10.0;
      trust = std::max(0.25 * trust, 1.0);
      if (sigma > 1e6) {
        status = viol_now > settings_.kkt_tolerance ? SolveStatus::infeasible : SolveStatus::max_iterations;
        break;
      }
      continue;  // same point, stronger regularization
    }
    // close the loop between the model trust and the observed step quality;
    // noise-level steps say nothing about the model
    const bool meaningful_step = step.lpNorm<Eigen::Infinity>() > 1e-8 * (1.0 + x.lpNorm<Eigen::Infinity>());
    if (alpha >= 1.0 - 1e-12) {
      sigma = std::max(sigma * 0.5, 1e-8);
    } else if (!meaningful_step) {
      // leave sigma unchanged
    } else if (alpha >= 0.25) {
      sigma = std::min(sigma * 2.0, 1e6);
    } else {
      sigma = std::min(sigma * (0.25 / std::max(alpha, 1e-3)), 1e6);
    }

    // Lagrangian gradient at the old point with the new multipliers (BFGS pair).
    Eigen::VectorXd lag_here;
    if (!use_gn) {
      lag_here = ev.grad;
      if (m_eq > 0) lag_here -= ev.jeq.transpose() * lam_eq;
      if (m_in > 0) lag_here -= ev.jin.transpose() * lam_in.head(m_in);
    }

    x = x_try;
    ev = evaluate(problem, x, true);
    if (!ev.finite) {
      status = SolveStatus::numerical_failure;
      out.diagnostic = "non-finite callback output";
      break;
    }
    consider_best(x, violation_max(problem, ev, x, settings_.rho_min), ev.f);

    if (!use_gn) {
      Eigen::VectorXd lag_next = ev.grad;
      if (m_eq > 0) lag_next -= ev.jeq.transpose() * lam_eq;
      if (m_in > 0) lag_next -= ev.jin.transpose() * lam_in.head(m_in);
      if (have_bfgs_point) {
        const Eigen::VectorXd s = x - x_prev;
        const Eigen::VectorXd yv = lag_next - lag_here;
        const Eigen::VectorXd bs = bfgs * s;
        const double sbs = s.dot(bs);
        const double sy = s.dot(yv);
        if (sbs > 1e-14) {
          const double theta = sy >= 0.2 * sbs ? 1.0 : (0.8 * sbs) / (sbs - sy);  // Powell damping
          const Eigen::VectorXd r = theta * yv + (1.0 - theta) * bs;
          const double sr = s.dot(r);
          if (sr > 1e-14) bfgs += (r * r.transpose()) / sr - (bs * bs.transpose()) / sbs;
        }
      }
      x_prev = x;
      have_bfgs_point = true;
    }
  }

  if (status == SolveStatus::converged) {
    out.primal = x;
    out.objective = ev.f;
    out.constraint_violation = violation_max(problem, ev, x, settings_.rho_min);
    out.eq_multipliers = lam_eq;
    out.ineq_multipliers = lam_in;
    out.bound_multipliers = lam_bnd;
  } else {
    out.primal = best_x;
    out.objective = best_obj;
    out.constraint_violation = best_viol;
    out.eq_multipliers = lam_eq;
    out.ineq_multipliers = lam_in;
    out.bound_multipliers = lam_bnd;
  }
  out.status = status;
  out.kkt_residual = kkt;
  out.max_complementarity = max_comp_product(problem, out.primal);
  out.iterations = iter_count;
  out.solve_time_ms = elapsed_ms();
  return out;
}

double check_gradients(const NlpProblem& problem, const Eigen::VectorXd& point, double step) {
  if (!(step > 0.0)) throw ConfigError("check_gradients: step must be positive");
  const int n = problem.num_vars;
  double worst = 0.0;
  auto rel_err = [](double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
  };

  const Eigen::VectorXd grad = problem.gradient(point);
  Eigen::MatrixXd jeq_dense, jin_dense;
  if (problem.num_eq > 0) jeq_dense = Eigen::MatrixXd(problem.eq_jacobian(point));
  if (problem.num_ineq > 0) jin_dense = Eigen::MatrixXd(problem.ineq_jacobian(point));

  Eigen::VectorXd xp = point, xm = point;
  for (int j = 0; j < n; ++j) {
    xp(j) += step;
    xm(j) -= step;
    const double fd_obj = (problem.objective(xp) - problem.objective(xm)) / (2.0 * step);
    worst = std::max(worst, rel_err(grad(j), fd_obj));
    if (problem.num_eq > 0) {
      const Eigen::VectorXd d = (problem.eq(xp) - problem.eq(xm)) / (2.0 * step);
      for (int i = 0; i < problem.num_eq; ++i) worst = std::max(worst, rel_err(jeq_dense(i, j), d(i)));
    }
    if (problem.num_ineq > 0) {
      const Eigen::VectorXd d = (problem.ineq(xp) - problem.ineq(xm)) / (2.0 * step);
      for (int i = 0; i < problem.num_ineq; ++i) worst = std::max(worst, rel_err(jin_dense(i, j), d(i)));
    }
    xp(j) = point(j);
    xm(j) = point(j);
  }
  return worst;
}

}  // namespace crowdnav
