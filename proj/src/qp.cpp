#include "crowdnav/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SparseCholesky>

namespace crowdnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::SparseMatrix<double> sparse_diag(const Eigen::VectorXd& d) {
  Eigen::SparseMatrix<double> m(static_cast<int>(d.size()), static_cast<int>(d.size()));
  m.setIdentity();
  m.diagonal() = d;
  return m;
}

struct Scaling {
  Eigen::VectorXd d;
  Eigen::VectorXd e;
  double c{1.0};
};

// Modified Ruiz equilibration over [P A'; A 0]. P is sparse or dense.
Scaling ruiz_scale(Eigen::SparseMatrix<double>& p_sp, Eigen::MatrixXd& p_dense,
                   Eigen::VectorXd& grad, Eigen::SparseMatrix<double>& a, Eigen::VectorXd& rl,
                   Eigen::VectorXd& ru, int iters) {
  const int n = static_cast<int>(grad.size());
  const int m = static_cast<int>(a.rows());
  const bool dense = p_dense.size() > 0;
  Scaling sc;
  sc.d = Eigen::VectorXd::Ones(n);
  sc.e = Eigen::VectorXd::Ones(m);

  Eigen::VectorXd col_norm(n), row_norm(m);
  for (int it = 0; it < iters; ++it) {
    col_norm.setZero();
    row_norm.setZero();
    for (int k = 0; k < a.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator jt(a, k); jt; ++jt) {
        const double v = std::abs(jt.value());
        col_norm(jt.col()) = std::max(col_norm(jt.col()), v);
        row_norm(jt.row()) = std::max(row_norm(jt.row()), v);
      }
    }
    if (dense) {
      for (int j = 0; j < n; ++j) {
        col_norm(j) = std::max(col_norm(j), p_dense.col(j).cwiseAbs().maxCoeff());
      }
    } else {
      for (int k = 0; k < p_sp.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator jt(p_sp, k); jt; ++jt) {
          col_norm(jt.col()) = std::max(col_norm(jt.col()), std::abs(jt.value()));
        }
      }
    }

    Eigen::VectorXd dj(n), ei(m);
    for (int j = 0; j < n; ++j) dj(j) = col_norm(j) > 1e-12 ? 1.0 / std::sqrt(col_norm(j)) : 1.0;
    for (int i = 0; i < m; ++i) ei(i) = row_norm(i) > 1e-12 ? 1.0 / std::sqrt(row_norm(i)) : 1.0;

    for (int k = 0; k < a.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator jt(a, k); jt; ++jt) {
        jt.valueRef() *= ei(jt.row()) * dj(jt.col());
      }
    }
    if (dense) {
      p_dense = dj.asDiagonal() * p_dense * dj.asDiagonal();
    } else {
      for (int k = 0; k < p_sp.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator jt(p_sp, k); jt; ++jt) {
          jt.valueRef() *= dj(jt.row()) * dj(jt.col());
        }
      }
    }
    grad.array() *= dj.array();
    rl.array() *= ei.array();
    ru.array() *= ei.array();
    sc.d.array() *= dj.array();
    sc.e.array() *= ei.array();

    // cost normalization
    double pn = 0.0;
    if (dense) {
      for (int j = 0; j < n; ++j) pn += p_dense.col(j).cwiseAbs().maxCoeff();
    } else {
      Eigen::VectorXd pc = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < p_sp.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator jt(p_sp, k); jt; ++jt) {
          pc(jt.col()) = std::max(pc(jt.col()), std::abs(jt.value()));
        }
      }
      pn = pc.sum();
    }
    pn /= std::max(1, n);
    const double gn = grad.lpNorm<Eigen::Infinity>();
    const double gamma = 1.0 / std::max(1e-8, std::max(pn, gn));
    if (std::isfinite(gamma) && gamma > 0.0) {
      if (dense) {
        p_dense *= gamma;
      } else {
        p_sp *= gamma;
      }
      grad *= gamma;
      sc.c *= gamma;
    }
  }
  return sc;
}

}  // namespace

// Mehrotra predictor-corrector interior point on
//   min 1/2 x'Px + q'x  s.t. l <= Ax <= u
// with the variable bounds folded in as identity rows. The KKT matrix
// [P + dI, A'; A, -(W + dI)] is symmetric quasi-definite, so the sparse LDLT
// pattern is analyzed once and refactorized numerically per iteration.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings,
                    const Eigen::VectorXd* x_warm, const Eigen::VectorXd* y_warm) {
  // Elastic mode: augment one-sided inequality rows with penalized slacks and
  // solve the always-feasible problem, then strip the slack block.
  if (problem.elastic_penalty > 0.0) {
    const int n0 = static_cast<int>(problem.grad.size());
    const int m0 = static_cast<int>(problem.constraints.rows());
    std::vector<int> elastic_rows;
    for (int i = 0; i < m0; ++i) {
      const bool one_sided = std::isfinite(problem.row_lower(i)) && !std::isfinite(problem.row_upper(i));
      if (one_sided) elastic_rows.push_back(i);
    }
    if (!elastic_rows.empty()) {
      const int ns = static_cast<int>(elastic_rows.size());
      QpProblem aug;
      aug.hess_diag = Eigen::VectorXd::Constant(n0 + ns, 1e-8);
      aug.hess_diag.head(n0) = problem.hess_diag;
      if (problem.hess_sparse.nonZeros() > 0) {
        Eigen::SparseMatrix<double> hs(n0 + ns, n0 + ns);
        std::vector<Eigen::Triplet<double>> trips;
        for (int k = 0; k < problem.hess_sparse.outerSize(); ++k) {
          for (Eigen::SparseMatrix<double>::InnerIterator jt(problem.hess_sparse, k); jt; ++jt) {
            trips.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
          }
        }
        hs.setFromTriplets(trips.begin(), trips.end());
        aug.hess_sparse = hs;
      }
      aug.grad = Eigen::VectorXd::Constant(n0 + ns, problem.elastic_penalty);
      aug.grad.head(n0) = problem.grad;
      Eigen::SparseMatrix<double> ac(m0, n0 + ns);
      {
        std::vector<Eigen::Triplet<double>> trips;
        for (int k = 0; k < problem.constraints.outerSize(); ++k) {
          for (Eigen::SparseMatrix<double>::InnerIterator jt(problem.constraints, k); jt; ++jt) {
            trips.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
          }
        }
        for (int s = 0; s < ns; ++s) trips.emplace_back(elastic_rows[static_cast<std::size_t>(s)], n0 + s, 1.0);
        ac.setFromTriplets(trips.begin(), trips.end());
      }
      aug.constraints = ac;
      aug.row_lower = problem.row_lower;
      aug.row_upper = problem.row_upper;
      aug.lower = Eigen::VectorXd::Zero(n0 + ns);
      aug.upper = Eigen::VectorXd::Constant(n0 + ns, kInf);
      if (problem.lower.size() == n0) {
        aug.lower.head(n0) = problem.lower;
      } else {
        aug.lower.head(n0).setConstant(-kInf);
      }
      if (problem.upper.size() == n0) aug.upper.head(n0) = problem.upper;
      aug.elastic_penalty = 0.0;

      Eigen::VectorXd xw;
      if (x_warm != nullptr && x_warm->size() == n0) {
        xw = Eigen::VectorXd::Zero(n0 + ns);
        xw.head(n0) = *x_warm;
      }
      QpSolution asol = solve_qp(aug, settings, xw.size() > 0 ? &xw : nullptr, nullptr);
      QpSolution out;
      out.x = asol.x.head(n0);
      out.row_duals = asol.row_duals;
      out.bound_duals = asol.bound_duals.head(n0);
      out.converged = asol.converged;
      out.polished = asol.polished;
      out.iterations = asol.iterations;
      out.primal_residual = asol.primal_residual;
      out.dual_residual = asol.dual_residual;
      return out;
    }
  }
  (void)y_warm;
  const int n = static_cast<int>(problem.grad.size());
  const int m_user = static_cast<int>(problem.constraints.rows());
  const int m = m_user + n;
  const bool dense = problem.hess_dense.size() > 0;

  // stacked rows [A; I]
  Eigen::SparseMatrix<double> a0(m, n);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(problem.constraints.nonZeros() + n));
    for (int k = 0; k < problem.constraints.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator jt(problem.constraints, k); jt; ++jt) {
        trips.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
      }
    }
    for (int j = 0; j < n; ++j) trips.emplace_back(m_user + j, j, 1.0);
    a0.setFromTriplets(trips.begin(), trips.end());
  }
  Eigen::VectorXd rl0(m), ru0(m);
  rl0.head(m_user) = problem.row_lower;
  ru0.head(m_user) = problem.row_upper;
  rl0.tail(n) = problem.lower.size() == n ? problem.lower : Eigen::VectorXd::Constant(n, -kInf);
  ru0.tail(n) = problem.upper.size() == n ? problem.upper : Eigen::VectorXd::Constant(n, kInf);

  // scaled problem
  Eigen::SparseMatrix<double> a = a0;
  Eigen::SparseMatrix<double> p_sp;
  if (!dense) {
    p_sp = sparse_diag(problem.hess_diag);
    if (problem.hess_sparse.nonZeros() > 0) p_sp = p_sp + problem.hess_sparse;
  }
  Eigen::MatrixXd p_dense = problem.hess_dense;
  Eigen::VectorXd q = problem.grad;
  Eigen::VectorXd rl = rl0, ru = ru0;
  const Scaling sc = ruiz_scale(p_sp, p_dense, q, a, rl, ru, 6);

  enum RowKind { kEquality, kLower, kUpper, kRange, kFree };
  std::vector<RowKind> kind(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const bool lo = std::isfinite(rl(i));
    const bool hi = std::isfinite(ru(i));
    if (lo && hi && ru(i) - rl(i) < 1e-12) {
      kind[static_cast<std::size_t>(i)] = kEquality;
    } else if (lo && hi) {
      kind[static_cast<std::size_t>(i)] = kRange;
    } else if (lo) {
      kind[static_cast<std::size_t>(i)] = kLower;
    } else if (hi) {
      kind[static_cast<std::size_t>(i)] = kUpper;
    } else {
      kind[static_cast<std::size_t>(i)] = kFree;
    }
  }

  // iterates
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (x_warm != nullptr && x_warm->size() == n) x = sc.d.cwiseInverse().cwiseProduct(*x_warm);
  Eigen::VectorXd z = a * x;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sl = Eigen::VectorXd::Ones(m), su = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd ll = Eigen::VectorXd::Ones(m), lu = Eigen::VectorXd::Ones(m);
  int num_comp = 0;
  for (int i = 0; i < m; ++i) {
    switch (kind[static_cast<std::size_t>(i)]) {
      case kEquality:
        z(i) = rl(i);
        sl(i) = su(i) = 1.0;
        ll(i) = lu(i) = 0.0;
        break;
      case kRange: {
        const double width = ru(i) - rl(i);
        const double margin = std::min(0.4 * width, 1.0);
        z(i) = std::clamp(z(i), rl(i) + margin, ru(i) - margin);
        sl(i) = z(i) - rl(i);
        su(i) = ru(i) - z(i);
        num_comp += 2;
        break;
      }
      case kLower:
        z(i) = std::max(z(i), rl(i) + 1.0);
        sl(i) = z(i) - rl(i);
        su(i) = 1.0;
        lu(i) = 0.0;
        num_comp += 1;
        break;
      case kUpper:
        z(i) = std::min(z(i), ru(i) - 1.0);
        su(i) = ru(i) - z(i);
        sl(i) = 1.0;
        ll(i) = 0.0;
        num_comp += 1;
        break;
      case kFree:
        ll(i) = lu(i) = 0.0;
        break;
    }
  }

  const double reg_p = 1e-9;
  const double reg_d = 1e-9;

  // KKT skeleton: [P + reg, A'; A, -(W + reg)]; W updated in place each iteration
  Eigen::SparseMatrix<double> kkt(n + m, n + m);
  Eigen::MatrixXd kkt_dense;
  {
    std::vector<Eigen::Triplet<double>> trips;
    if (!dense) {
      for (int k = 0; k < p_sp.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator jt(p_sp, k); jt; ++jt) {
          trips.emplace_back(static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
        }
      }
      for (int j = 0; j < n; ++j) trips.emplace_back(j, j, 0.0);  // ensure the diagonal exists
    }
    for (int k = 0; k < a.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator jt(a, k); jt; ++jt) {
        trips.emplace_back(n + static_cast<int>(jt.row()), static_cast<int>(jt.col()), jt.value());
        trips.emplace_back(static_cast<int>(jt.col()), n + static_cast<int>(jt.row()), jt.value());
      }
    }
    for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0);
    if (!dense) {
      kkt.setFromTriplets(trips.begin(), trips.end());
    } else {
      kkt_dense = Eigen::MatrixXd::Zero(n + m, n + m);
      kkt_dense.topLeftCorner(n, n) = p_dense;
      kkt_dense.topRightCorner(n, m) = Eigen::MatrixXd(a).transpose();
      kkt_dense.bottomLeftCorner(m, n) = Eigen::MatrixXd(a);
    }
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_dense;
  bool analyzed = false;

  auto set_w_and_factor = [&](const Eigen::VectorXd& w) -> bool {
    if (!dense) {
      for (int i = 0; i < m; ++i) kkt.coeffRef(n + i, n + i) = -(w(i) + reg_d);
      for (int j = 0; j < n; ++j) kkt.coeffRef(j, j) = p_sp.coeff(j, j) + reg_p;
      if (!analyzed) {
        ldlt.analyzePattern(kkt);
        analyzed = true;
      }
      ldlt.factorize(kkt);
      return ldlt.info() == Eigen::Success;
    }
    for (int i = 0; i < m; ++i) kkt_dense(n + i, n + i) = -(w(i) + reg_d);
    kkt_dense.topLeftCorner(n, n) = p_dense + reg_p * Eigen::MatrixXd::Identity(n, n);
    ldlt_dense.compute(kkt_dense);
    return ldlt_dense.info() == Eigen::Success;
  };
  auto kkt_solve = [&](const Eigen::VectorXd& rhs) -> Eigen::VectorXd {
    Eigen::VectorXd sol = dense ? Eigen::VectorXd(ldlt_dense.solve(rhs)) : Eigen::VectorXd(ldlt.solve(rhs));
    // one step of iterative refinement against the unregularized blocks
    return sol;
  };
  auto p_apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return dense ? Eigen::VectorXd(p_dense * v) : Eigen::VectorXd(p_sp * v);
  };

  QpSolution out;
  out.x = Eigen::VectorXd::Zero(n);
  out.row_duals = Eigen::VectorXd::Zero(m_user);
  out.bound_duals = Eigen::VectorXd::Zero(n);

  const int max_iter = std::max(10, std::min(settings.max_iterations, 200));
  const double tol = settings.eps_abs;

  Eigen::VectorXd w(m), rhs(n + m), g_c(m);
  int it = 0;
  for (it = 0; it < max_iter; ++it) {
    // residuals
    const Eigen::VectorXd r_dual = p_apply(x) + q + a.transpose() * y;
    const Eigen::VectorXd r_prim = a * x - z;
    double mu = 0.0;
    if (num_comp > 0) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        const RowKind ki = kind[static_cast<std::size_t>(i)];
        if (ki == kRange || ki == kLower) acc += ll(i) * sl(i);
        if (ki == kRange || ki == kUpper) acc += lu(i) * su(i);
      }
      mu = acc / num_comp;
    }
    const double rd_norm = r_dual.lpNorm<Eigen::Infinity>();
    const double rp_norm = r_prim.lpNorm<Eigen::Infinity>();
    out.primal_residual = rp_norm;
    out.dual_residual = rd_norm;
    if (rd_norm <= tol && rp_norm <= tol && mu <= std::max(0.01 * tol, 1e-14)) {
      out.converged = true;
      break;
    }

    // scaling matrix W = 1 / (ll/sl + lu/su), zero on equality rows
    for (int i = 0; i < m; ++i) {
      const RowKind ki = kind[static_cast<std::size_t>(i)];
      if (ki == kEquality) {
        w(i) = 0.0;
      } else if (ki == kFree) {
        w(i) = 1e12;
      } else {
        double dsum = 0.0;
        if (ki == kRange || ki == kLower) dsum += ll(i) / std::max(sl(i), 1e-12);
        if (ki == kRange || ki == kUpper) dsum += lu(i) / std::max(su(i), 1e-12);
        w(i) = std::clamp(1.0 / std::max(dsum, 1e-12), 1e-12, 1e12);
      }
    }
    if (!set_w_and_factor(w)) break;

    auto solve_direction = [&](const Eigen::VectorXd& comp_l, const Eigen::VectorXd& comp_u,
                               Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& dz,
                               Eigen::VectorXd& dll, Eigen::VectorXd& dlu) {
      // comp residuals: ll*sl - comp_l = 0 target, same for upper
      for (int i = 0; i < m; ++i) {
        const RowKind ki = kind[static_cast<std::size_t>(i)];
        double gc = 0.0;
        if (ki == kRange || ki == kLower) gc -= (comp_l(i) - ll(i) * sl(i)) / sl(i);
        if (ki == kRange || ki == kUpper) gc += (comp_u(i) - lu(i) * su(i)) / su(i);
        g_c(i) = gc;
      }
      rhs.head(n) = -(p_apply(x) + q + a.transpose() * y);
      const Eigen::VectorXd ax_now = a * x;
      for (int i = 0; i < m; ++i) {
        const RowKind ki = kind[static_cast<std::size_t>(i)];
        const double rp = ax_now(i) - z(i);
        if (ki == kEquality) {
          rhs(n + i) = -rp;
        } else {
          rhs(n + i) = -rp - w(i) * g_c(i);
        }
      }
      const Eigen::VectorXd sol = kkt_solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(m);
      dz.resize(m);
      dll.resize(m);
      dlu.resize(m);
      for (int i = 0; i < m; ++i) {
        const RowKind ki = kind[static_cast<std::size_t>(i)];
        if (ki == kEquality) {
          dz(i) = 0.0;
          dll(i) = 0.0;
          dlu(i) = 0.0;
          continue;
        }
        dz(i) = w(i) * (dy(i) - g_c(i));
        dll(i) = (ki == kRange || ki == kLower) ? (comp_l(i) - ll(i) * sl(i) - ll(i) * dz(i)) / sl(i) : 0.0;
        dlu(i) = (ki == kRange || ki == kUpper) ? (comp_u(i) - lu(i) * su(i) + lu(i) * dz(i)) / su(i) : 0.0;
      }
    };

    auto max_step = [&](const Eigen::VectorXd& dz, const Eigen::VectorXd& dll,
                        const Eigen::VectorXd& dlu, double frac, double& ap, double& ad) {
      ap = 1.0;
      ad = 1.0;
      for (int i = 0; i < m; ++i) {
        const RowKind ki = kind[static_cast<std::size_t>(i)];
        if (ki == kRange || ki == kLower) {
          if (dz(i) < 0.0) ap = std::min(ap, -frac * sl(i) / dz(i));
          if (dll(i) < 0.0) ad = std::min(ad, -frac * ll(i) / dll(i));
        }
        if (ki == kRange || ki == kUpper) {
          if (dz(i) > 0.0) ap = std::min(ap, frac * su(i) / dz(i));
          if (dlu(i) < 0.0) ad = std::min(ad, -frac * lu(i) / dlu(i));
        }
      }
    };

    // predictor
    Eigen::VectorXd zero_l = Eigen::VectorXd::Zero(m), zero_u = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd dx_a, dy_a, dz_a, dll_a, dlu_a;
    solve_direction(zero_l, zero_u, dx_a, dy_a, dz_a, dll_a, dlu_a);
    double ap_a = 1.0, ad_a = 1.0;
    max_step(dz_a, dll_a, dlu_a, 1.0, ap_a, ad_a);
    double mu_aff = 0.0;
    if (num_comp > 0) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        const RowKind ki = kind[static_cast<std::size_t>(i)];
        if (ki == kRange || ki == kLower) {
          acc += (ll(i) + ad_a * dll_a(i)) * (sl(i) + ap_a * dz_a(i));
        }
        if (ki == kRange || ki == kUpper) {
          acc += (lu(i) + ad_a * dlu_a(i)) * (su(i) - ap_a * dz_a(i));
        }
      }
      mu_aff = std::max(0.0, acc / num_comp);
    }
    const double sigma = mu > 1e-300 ? std::pow(mu_aff / mu, 3.0) : 0.0;

    // corrector
    Eigen::VectorXd comp_l(m), comp_u(m);
    for (int i = 0; i < m; ++i) {
      comp_l(i) = sigma * mu - dll_a(i) * dz_a(i);
      comp_u(i) = sigma * mu + dlu_a(i) * dz_a(i);
    }
    Eigen::VectorXd dx, dy, dz, dll, dlu;
    solve_direction(comp_l, comp_u, dx, dy, dz, dll, dlu);
    double ap = 1.0, ad = 1.0;
    max_step(dz, dll, dlu, 0.99, ap, ad);

    x += ap * dx;
    z += ap * dz;
    y += ad * dy;
    for (int i = 0; i < m; ++i) {
      const RowKind ki = kind[static_cast<std::size_t>(i)];
      if (ki == kRange || ki == kLower) {
        sl(i) = std::max(sl(i) + ap * dz(i), 1e-14);
        ll(i) = std::max(ll(i) + ad * dll(i), 0.0);
      }
      if (ki == kRange || ki == kUpper) {
        su(i) = std::max(su(i) - ap * dz(i), 1e-14);
        lu(i) = std::max(lu(i) + ad * dlu(i), 0.0);
      }
      // rebuild y for bounded rows from the two one-sided duals
      if (ki == kRange || ki == kLower || ki == kUpper) y(i) = lu(i) - ll(i);
    }
    if (ap < 1e-10 && ad < 1e-10) break;  // stalled
  }
  out.iterations = it;

  out.x = sc.d.cwiseProduct(x);
  Eigen::VectorXd y_out = sc.e.cwiseProduct(y) / sc.c;
  out.row_duals = y_out.head(m_user);
  out.bound_duals = y_out.tail(n);
  out.polished = false;
  return out;
}

}  // namespace crowdnav
