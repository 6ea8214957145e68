#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace crowdnav {

using SpMat = Eigen::SparseMatrix<double>;

// Smooth NLP with equality, inequality (>= 0 convention) and relaxed
// complementarity constraints between pairs of decision variables.
struct NlpProblem {
  int num_vars{0};
  int num_eq{0};
  int num_ineq{0};
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eq;
  std::function<SpMat(const Eigen::VectorXd&)> eq_jacobian;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ineq;
  std::function<SpMat(const Eigen::VectorXd&)> ineq_jacobian;
  // index pairs (a, b): x_a >= 0, x_b >= 0, x_a * x_b <= rho
  std::vector<std::pair<int, int>> complementarity;
  Eigen::VectorXd lower;           // variable bounds; empty means unbounded
  Eigen::VectorXd upper;
  Eigen::VectorXd quadratic_diag;  // constant diagonal objective Hessian (Gauss-Newton); empty -> BFGS
  // Optional convexified Lagrangian curvature of nonlinear constraints, added
  // to the Gauss-Newton model (must return a PSD matrix).
  std::function<SpMat(const Eigen::VectorXd& x, const Eigen::VectorXd& eq_multipliers)> curvature;
};

struct SolverSettings {
  int max_iterations{120};     // SQP iterations, across all homotopy stages
  double kkt_tolerance{1e-6};
  double rho_init{1e-1};       // complementarity relaxation schedule
  double rho_min{1e-5};
  double rho_decay{0.2};
  double armijo_c1{1e-4};      // line-search parameters
  double backtrack_factor{0.5};
  int max_line_search{24};
  double qp_tolerance{1e-8};
  int qp_max_iterations{100};
  double qp_elastic_penalty{1e4};  // l1 slack penalty keeping QP subproblems feasible
  double budget_ms{1e9};       // wall-clock budget; best iterate returned on exhaustion
  std::function<void(const std::string&)> iteration_log;  // one JSON line per iteration
  void validate() const;
};

enum class SolveStatus { converged, max_iterations, budget_exhausted, infeasible, numerical_failure };
const char* to_string(SolveStatus status);

struct NlpSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
  Eigen::VectorXd bound_multipliers;
  SolveStatus status{SolveStatus::numerical_failure};
  double kkt_residual{std::numeric_limits<double>::infinity()};
  double constraint_violation{std::numeric_limits<double>::infinity()};
  double max_complementarity{0.0};
  double objective{std::numeric_limits<double>::infinity()};
  int iterations{0};
  double solve_time_ms{0.0};
  std::string diagnostic;
};

struct WarmStart {
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
};

// Dense-callback SQP: Gauss-Newton (or damped BFGS) Hessian model, convexified
// QP subproblems, l1-merit line search, and an outer homotopy driving the
// complementarity relaxation rho down to rho_min. Deterministic.
class SqpSolver {
 public:
  SqpSolver() = default;
  explicit SqpSolver(SolverSettings settings) : settings_(std::move(settings)) {}

  NlpSolution solve(const NlpProblem& problem, const Eigen::VectorXd& initial_guess,
                    const WarmStart* warm = nullptr) const;

  SolverSettings& settings() { return settings_; }
  const SolverSettings& settings() const { return settings_; }

 private:
  SolverSettings settings_;
};

// Worst relative error between analytic derivatives and central finite
// differences of the objective and every constraint.
double check_gradients(const NlpProblem& problem, const Eigen::VectorXd& point, double step);

}  // namespace crowdnav
