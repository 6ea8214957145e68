#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace crowdnav {

// Convex QP:
//   min 1/2 x' P x + grad' x
//   s.t. row_lower <= A x <= row_upper,  lower <= x <= upper
// P is diagonal (hess_diag), optionally plus a sparse symmetric PSD term
// (hess_sparse), or dense (hess_dense, takes precedence when non-empty).
// Equality rows use row_lower == row_upper.
struct QpProblem {
  Eigen::VectorXd hess_diag;
  Eigen::SparseMatrix<double> hess_sparse;  // optional, added to the diagonal
  Eigen::MatrixXd hess_dense;               // optional
  Eigen::VectorXd grad;
  Eigen::SparseMatrix<double> constraints;
  Eigen::VectorXd row_lower;
  Eigen::VectorXd row_upper;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  // When positive, one-sided inequality rows get l1-penalized elastic slacks,
  // keeping the subproblem feasible under conflicting linearizations.
  double elastic_penalty{0.0};
};

struct QpSettings {
  double eps_abs{1e-8};
  double eps_rel{1e-8};
  int max_iterations{4000};
  int check_interval{25};
  double rho{0.1};
  double sigma{1e-6};
  double alpha{1.6};
  bool polish{true};
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd row_duals;    // y, <= 0 at lower-active rows, >= 0 at upper-active
  Eigen::VectorXd bound_duals;  // same convention for variable bounds
  bool converged{false};
  bool polished{false};
  int iterations{0};
  double primal_residual{0.0};
  double dual_residual{0.0};
};

// ADMM (OSQP-style splitting with Ruiz scaling) plus an active-set polish that
// re-solves the detected equality system to near machine precision.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings,
                    const Eigen::VectorXd* x_warm = nullptr, const Eigen::VectorXd* y_warm = nullptr);

}  // namespace crowdnav
