#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "crowdnav/nlp.hpp"

using namespace crowdnav;
using Eigen::VectorXd;

namespace {

SpMat dense_to_sparse(const Eigen::MatrixXd& m) {
  SpMat out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0) trips.emplace_back(i, j, m(i, j));
    }
  }
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

NlpProblem diagonal_quadratic(const VectorXd& diag, const VectorXd& center) {
  NlpProblem p;
  p.num_vars = static_cast<int>(diag.size());
  p.objective = [=](const VectorXd& x) { return 0.5 * (x - center).dot(diag.cwiseProduct(x - center)); };
  p.gradient = [=](const VectorXd& x) { return VectorXd(diag.cwiseProduct(x - center)); };
  p.quadratic_diag = diag;
  return p;
}

}  // namespace

TEST_CASE("unconstrained diagonal quadratic converges in one or two iterations") {
  VectorXd diag(3), center(3), x0(3);
  diag << 2.0, 5.0, 1.0;
  center << 1.0, -2.0, 3.0;
  x0 << 10.0, 10.0, -10.0;
  const NlpProblem p = diagonal_quadratic(diag, center);
  SolverSettings s;
  s.kkt_tolerance = 1e-9;
  const NlpSolution sol = SqpSolver(s).solve(p, x0);
  CHECK(sol.status == SolveStatus::converged);
  CHECK(sol.iterations <= 2);
  CHECK((sol.primal - center).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("general dense quadratic converges through the BFGS path") {
  Eigen::MatrixXd q(2, 2);
  q << 4.0, 1.0, 1.0, 3.0;
  VectorXd b(2);
  b << -1.0, 2.0;
  NlpProblem p;
  p.num_vars = 2;
  p.objective = [=](const VectorXd& x) { return 0.5 * x.dot(q * x) + b.dot(x); };
  p.gradient = [=](const VectorXd& x) { return VectorXd(q * x + b); };
  VectorXd x0(2);
  x0 << 5.0, -7.0;
  SolverSettings s;
  s.kkt_tolerance = 1e-8;
  const NlpSolution sol = SqpSolver(s).solve(p, x0);
  CHECK(sol.status == SolveStatus::converged);
  const VectorXd expected = -q.ldlt().solve(b);
  CHECK((sol.primal - expected).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("projection onto the unit disc") {
  VectorXd c(2);
  c << 2.0, 1.0;
  NlpProblem p;
  p.num_vars = 2;
  p.num_ineq = 1;
  p.objective = [=](const VectorXd& x) { return (x - c).squaredNorm(); };
  p.gradient = [=](const VectorXd& x) { return VectorXd(2.0 * (x - c)); };
  p.ineq = [](const VectorXd& x) {
    VectorXd v(1);
    v(0) = 1.0 - x.squaredNorm();
    return v;
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    Eigen::MatrixXd j(1, 2);
    j << -2.0 * x(0), -2.0 * x(1);
    return dense_to_sparse(j);
  };
  p.quadratic_diag = VectorXd::Constant(2, 2.0);

  const NlpSolution sol = SqpSolver().solve(p, VectorXd::Zero(2));
  CHECK(sol.status == SolveStatus::converged);
  const VectorXd expected = c / c.norm();
  CHECK((sol.primal - expected).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("equality-constrained quadratic") {
  NlpProblem p;
  p.num_vars = 2;
  p.num_eq = 1;
  p.objective = [](const VectorXd& x) { return x.squaredNorm(); };
  p.gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
  p.eq = [](const VectorXd& x) {
    VectorXd v(1);
    v(0) = x(0) + x(1) - 1.0;
    return v;
  };
  p.eq_jacobian = [](const VectorXd&) {
    Eigen::MatrixXd j(1, 2);
    j << 1.0, 1.0;
    return dense_to_sparse(j);
  };
  p.quadratic_diag = VectorXd::Constant(2, 2.0);
  const NlpSolution sol = SqpSolver().solve(p, VectorXd::Zero(2));
  CHECK(sol.status == SolveStatus::converged);
  CHECK(sol.primal(0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(sol.primal(1) == doctest::Approx(0.5).epsilon(1e-7));
  // multiplier: grad = J' lambda  =>  lambda = 1
  CHECK(sol.eq_multipliers(0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("scalar complementarity toy matches a grid-elimination oracle") {
  NlpProblem p;
  p.num_vars = 2;
  p.objective = [](const VectorXd& x) {
    return (x(0) - 1.0) * (x(0) - 1.0) + (x(1) - 1.0) * (x(1) - 1.0);
  };
  p.gradient = [](const VectorXd& x) {
    VectorXd g(2);
    g << 2.0 * (x(0) - 1.0), 2.0 * (x(1) - 1.0);
    return g;
  };
  p.complementarity = {{0, 1}};
  p.lower = VectorXd::Zero(2);
  p.upper = VectorXd::Constant(2, 1e20);
  p.quadratic_diag = VectorXd::Constant(2, 2.0);

  SolverSettings s;
  s.rho_min = 1e-5;
  const SqpSolver solver(s);
  VectorXd x0(2);
  x0 << 0.9, 0.2;
  const NlpSolution sol = solver.solve(p, x0);
  CHECK(sol.status == SolveStatus::converged);
  CHECK(std::min(sol.primal(0), sol.primal(1)) <= std::sqrt(1e-5) + 1e-6);
  CHECK(sol.max_complementarity <= 1e-5 + 1e-12);

  // grid over x with y eliminated: y*(x) = min(1, rho/x)
  double best = 1e100;
  for (int k = 0; k <= 200000; ++k) {
    const double x = 2.0 * k / 200000.0;
    const double y = x > 0.0 ? std::min(1.0, 1e-5 / x) : 1.0;
    best = std::min(best, (x - 1.0) * (x - 1.0) + (y - 1.0) * (y - 1.0));
  }
  CHECK(sol.objective <= best + 1e-4);
  CHECK(sol.objective >= best - 1e-4);
}

TEST_CASE("bound-constrained minimum sits on the bound with a valid multiplier") {
  NlpProblem p;
  p.num_vars = 1;
  p.objective = [](const VectorXd& x) { return (x(0) + 2.0) * (x(0) + 2.0); };
  p.gradient = [](const VectorXd& x) {
    VectorXd g(1);
    g(0) = 2.0 * (x(0) + 2.0);
    return g;
  };
  p.lower = VectorXd::Zero(1);
  p.upper = VectorXd::Constant(1, 1e20);
  p.quadratic_diag = VectorXd::Constant(1, 2.0);
  const NlpSolution sol = SqpSolver().solve(p, VectorXd::Constant(1, 3.0));
  CHECK(sol.status == SolveStatus::converged);
  CHECK(sol.primal(0) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("check_gradients") {
  VectorXd diag(2), center(2);
  diag << 2.0, 4.0;
  center << 0.3, -0.4;
  NlpProblem p = diagonal_quadratic(diag, center);
  p.num_ineq = 1;
  p.ineq = [](const VectorXd& x) {
    VectorXd v(1);
    v(0) = 1.0 - x.squaredNorm();
    return v;
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    Eigen::MatrixXd j(1, 2);
    j << -2.0 * x(0), -2.0 * x(1);
    return dense_to_sparse(j);
  };
  VectorXd at(2);
  at << 0.7, -0.2;
  CHECK(check_gradients(p, at, 1e-5) <= 1e-7);

  SUBCASE("a corrupted Jacobian entry is detected") {
    p.ineq_jacobian = [](const VectorXd& x) {
      Eigen::MatrixXd j(1, 2);
      j << -2.0 * x(0) + 0.5, -2.0 * x(1);  // injected fault
      return dense_to_sparse(j);
    };
    CHECK(check_gradients(p, at, 1e-5) >= 1e-2);
  }
}

TEST_CASE("merit is non-increasing across accepted steps at fixed eta and rho") {
  VectorXd c(2);
  c << 3.0, 0.5;
  NlpProblem p;
  p.num_vars = 2;
  p.num_ineq = 1;
  p.objective = [=](const VectorXd& x) { return (x - c).squaredNorm(); };
  p.gradient = [=](const VectorXd& x) { return VectorXd(2.0 * (x - c)); };
  p.ineq = [](const VectorXd& x) {
    VectorXd v(1);
    v(0) = 1.0 - x.squaredNorm();
    return v;
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    Eigen::MatrixXd j(1, 2);
    j << -2.0 * x(0), -2.0 * x(1);
    return dense_to_sparse(j);
  };
  p.quadratic_diag = VectorXd::Constant(2, 2.0);

  std::vector<nlohmann::json> log;
  SolverSettings s;
  s.iteration_log = [&](const std::string& line) { log.push_back(nlohmann::json::parse(line)); };
  const NlpSolution sol = SqpSolver(s).solve(p, VectorXd::Constant(2, 5.0));
  CHECK(sol.status == SolveStatus::converged);
  REQUIRE(log.size() >= 2);
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (log[i]["eta"] == log[i - 1]["eta"] && log[i]["rho"] == log[i - 1]["rho"]) {
      CHECK(log[i]["merit"].get<double>() <= log[i - 1]["merit"].get<double>() + 1e-9);
    }
  }
}

TEST_CASE("identical inputs produce identical iterates") {
  VectorXd c(2);
  c << 2.0, 1.0;
  NlpProblem p;
  p.num_vars = 2;
  p.num_ineq = 1;
  p.objective = [=](const VectorXd& x) { return (x - c).squaredNorm(); };
  p.gradient = [=](const VectorXd& x) { return VectorXd(2.0 * (x - c)); };
  p.ineq = [](const VectorXd& x) {
    VectorXd v(1);
    v(0) = 1.0 - x.squaredNorm();
    return v;
  };
  p.ineq_jacobian = [](const VectorXd& x) {
    Eigen::MatrixXd j(1, 2);
    j << -2.0 * x(0), -2.0 * x(1);
    return dense_to_sparse(j);
  };
  p.quadratic_diag = VectorXd::Constant(2, 2.0);
  const NlpSolution a = SqpSolver().solve(p, VectorXd::Zero(2));
  const NlpSolution b = SqpSolver().solve(p, VectorXd::Zero(2));
  CHECK(a.primal(0) == b.primal(0));
  CHECK(a.primal(1) == b.primal(1));
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("budget exhaustion returns the best iterate with the right status") {
  VectorXd diag = VectorXd::Constant(4, 2.0);
  const NlpProblem p = diagonal_quadratic(diag, VectorXd::Ones(4));
  SolverSettings s;
  s.budget_ms = 1e-6;
  const NlpSolution sol = SqpSolver(s).solve(p, VectorXd::Zero(4));
  CHECK(sol.status == SolveStatus::budget_exhausted);
  CHECK(sol.primal.size() == 4);
}

TEST_CASE("non-finite callbacks yield a numerical-failure status with diagnostics") {
  NlpProblem p;
  p.num_vars = 1;
  p.objective = [](const VectorXd&) { return std::numeric_limits<double>::quiet_NaN(); };
  p.gradient = [](const VectorXd&) { return VectorXd::Zero(1); };
  const NlpSolution sol = SqpSolver().solve(p, VectorXd::Zero(1));
  CHECK(sol.status == SolveStatus::numerical_failure);
  CHECK(!sol.diagnostic.empty());
}

TEST_CASE("contradictory equalities are reported infeasible") {
  NlpProblem p;
  p.num_vars = 1;
  p.num_eq = 2;
  p.objective = [](const VectorXd&) { return 0.0; };
  p.gradient = [](const VectorXd&) { return VectorXd::Zero(1); };
  p.eq = [](const VectorXd& x) {
    VectorXd v(2);
    v << x(0), x(0) - 1.0;
    return v;
  };
  p.eq_jacobian = [](const VectorXd&) {
    Eigen::MatrixXd j(2, 1);
    j << 1.0, 1.0;
    return dense_to_sparse(j);
  };
  p.quadratic_diag = VectorXd::Constant(1, 0.0);
  SolverSettings s;
  s.max_iterations = 40;
  s.qp_max_iterations = 400;
  const NlpSolution sol = SqpSolver(s).solve(p, VectorXd::Zero(1));
  CHECK((sol.status == SolveStatus::infeasible || sol.status == SolveStatus::max_iterations));
  CHECK(sol.constraint_violation >= 0.4);
}
