#include <chrono>
#include <cmath>
#include <random>

#include <doctest.h>

#include "crowdnav/orca.hpp"

using namespace crowdnav;

namespace {

OrcaParams test_params(double vmax = 1.4, double penalty = 100.0) {
  OrcaParams p;
  p.max_speed = vmax;
  p.relaxation_penalty = penalty;
  return p;
}

// Brute-force oracle: scan a velocity grid, eliminating the slack in closed
// form per grid point (s*(v) = max violated relaxable margin).
double grid_objective(const std::vector<OrcaConstraint>& cons, const Vec2& intent,
                      const OrcaParams& params, int cells) {
  const double vmax = params.max_speed;
  double best = 1e100;
  for (int ix = 0; ix <= cells; ++ix) {
    const double vx = -vmax + 2.0 * vmax * ix / cells;
    for (int iy = 0; iy <= cells; ++iy) {
      const double vy = -vmax + 2.0 * vmax * iy / cells;
      if (vx * vx + vy * vy > vmax * vmax) continue;
      double s = 0.0;
      bool hard_ok = true;
      for (const auto& c : cons) {
        const double margin = c.plane.offset - (c.plane.normal.x * vx + c.plane.normal.y * vy);
        if (c.relaxable) {
          s = std::max(s, margin);
        } else if (margin > 0.0) {
          hard_ok = false;
          break;
        }
      }
      if (!hard_ok) continue;
      const double dx = vx - intent.x;
      const double dy = vy - intent.y;
      best = std::min(best, dx * dx + dy * dy + params.relaxation_penalty * s * s);
    }
  }
  return best;
}

double objective_of(const OrcaSolution& sol, const Vec2& intent, const OrcaParams& params) {
  return norm_sq(sol.velocity - intent) + params.relaxation_penalty * sol.slack * sol.slack;
}

}  // namespace

TEST_CASE("agent_halfplane keeps the current velocity feasible when there is no conflict") {
  // agents far apart, moving apart
  const Vec2 pa{0.0, 0.0}, va{-1.0, 0.0};
  const Vec2 pb{10.0, 0.0}, vb{1.0, 0.0};
  const HalfPlane hp = agent_halfplane(pa, va, pb, vb, 0.6, 2.0, 0.5);
  CHECK(dot(hp.normal, va) >= hp.offset - 1e-12);
  CHECK(norm(hp.normal) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("agent_halfplane mirror symmetry for a head-on pair") {
  const HalfPlane ha = agent_halfplane({-2.0, 0.0}, {1.0, 0.1}, {2.0, 0.0}, {-1.0, -0.1}, 0.6, 3.0, 0.5);
  const HalfPlane hb = agent_halfplane({2.0, 0.0}, {-1.0, -0.1}, {-2.0, 0.0}, {1.0, 0.1}, 0.6, 3.0, 0.5);
  // the two planes are images of each other under 180-degree rotation
  CHECK(ha.normal.x == doctest::Approx(-hb.normal.x).epsilon(1e-12));
  CHECK(ha.normal.y == doctest::Approx(-hb.normal.y).epsilon(1e-12));
  CHECK(ha.offset == doctest::Approx(-(-hb.offset)).epsilon(1e-9));  // offsets are n.(point); point_a = -point_b
}

TEST_CASE("agent_halfplane coincident positions rejected") {
  CHECK_THROWS_AS(agent_halfplane({1, 1}, {0, 0}, {1, 1}, {0, 0}, 0.5, 2.0, 0.5), DegenerateGeometryError);
}

TEST_CASE("reciprocal half-planes prevent collision within tau (forward-simulation oracle)") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double radius = 0.3;
  const double tau = 2.5;
  OrcaParams params = test_params(1.4, 1e4);
  params.time_horizon_agents = tau;

  int valid = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Vec2 pa{2.0 * u(rng), 2.0 * u(rng)};
    const Vec2 pb{2.0 * u(rng), 2.0 * u(rng)};
    if (norm(pb - pa) < 2.0 * radius + 0.05) continue;  // overlap branch tested separately
    const Vec2 va{u(rng), u(rng)}, vb{u(rng), u(rng)};
    const HalfPlane ha = agent_halfplane(pa, va, pb, vb, 2.0 * radius, tau, 0.5);
    const HalfPlane hb = agent_halfplane(pb, vb, pa, va, 2.0 * radius, tau, 0.5);

    // each agent projects a random intent onto its own (hard) half-plane
    const Vec2 ia{1.2 * u(rng), 1.2 * u(rng)};
    const Vec2 ib{1.2 * u(rng), 1.2 * u(rng)};
    OrcaSolution sa, sb;
    try {
      sa = solve_orca_qp({{ha, false}}, ia, params);
      sb = solve_orca_qp({{hb, false}}, ib, params);
    } catch (const InfeasibleGeometryError&) {
      continue;  // avoidance demand exceeds the speed disc for this draw
    }
    ++valid;

    double min_dist = 1e100;
    for (int k = 0; k <= 500; ++k) {
      const double t = tau * k / 500.0;
      min_dist = std::min(min_dist, norm((pa + sa.velocity * t) - (pb + sb.velocity * t)));
    }
    CHECK(min_dist >= 2.0 * radius - 1e-6);
  }
  CHECK(valid > 100);
}

TEST_CASE("obstacle_halfplane basics") {
  const Segment wall{{-10.0, 0.0}, {10.0, 0.0}};
  SUBCASE("far agent with a small horizon leaves the plane inactive for slow motion") {
    const auto planes = obstacle_halfplane({0.0, 5.0}, wall, 0.3, 0.5);
    REQUIRE(planes.size() == 1);
    // every velocity with |v| <= 1.4 satisfies it
    CHECK(planes[0].offset <= -1.4);
  }
  SUBCASE("parallel motion along a wall stays feasible") {
    const auto planes = obstacle_halfplane({0.0, 0.5}, wall, 0.3, 2.0);
    REQUIRE(planes.size() == 1);
    CHECK(dot(planes[0].normal, Vec2{1.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(dot(planes[0].normal, Vec2{1.0, 0.0}) >= planes[0].offset);
    CHECK(planes[0].normal.y == doctest::Approx(1.0));
  }
}

TEST_CASE("obstacle_halfplane keeps clearance over the horizon (dense forward-simulation oracle)") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double radius = 0.25;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Segment seg{{4.0 * u(rng), 4.0 * u(rng)}, {4.0 * u(rng), 4.0 * u(rng)}};
    if (norm_sq(seg.b - seg.a) < 0.25) continue;
    const Vec2 pos{4.0 * u(rng), 4.0 * u(rng)};
    const double d0 = point_segment_distance(pos, seg);
    if (d0 <= radius + 1e-3) continue;  // start clear of the inflated segment
    const double tau_obst = 1.0 + std::abs(u(rng)) * 3.0;
    const auto planes = obstacle_halfplane(pos, seg, radius, tau_obst);
    REQUIRE(planes.size() == 1);

    for (int vi = 0; vi < 40; ++vi) {
      const Vec2 v{1.4 * u(rng), 1.4 * u(rng)};
      if (dot(planes[0].normal, v) < planes[0].offset) continue;  // infeasible velocity: skip
      ++checked;
      double min_clear = 1e100;
      for (int k = 0; k <= 400; ++k) {
        const double t = tau_obst * k / 400.0;
        min_clear = std::min(min_clear, point_segment_distance(pos + v * t, seg));
      }
      CHECK(min_clear >= radius - 1e-3);
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("solve_orca_qp trivial projections") {
  const OrcaParams params = test_params();
  SUBCASE("no constraints returns the intent exactly") {
    const Vec2 intent{0.3, -0.7};
    const OrcaSolution sol = solve_orca_qp({}, intent, params);
    CHECK(sol.velocity.x == intent.x);
    CHECK(sol.velocity.y == intent.y);
    CHECK(sol.slack == 0.0);
  }
  SUBCASE("single violated half-plane gives the Euclidean projection") {
    // relaxable constraint but gentle: optimum trades slack vs projection;
    // with a hard constraint it is the exact projection
    const HalfPlane hp{{0.0, 1.0}, 0.5};
    const Vec2 intent{0.2, 0.0};
    const OrcaSolution sol = solve_orca_qp({{hp, false}}, intent, params);
    CHECK(sol.velocity.x == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(sol.velocity.y == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(sol.duals[0] > 0.0);
  }
  SUBCASE("speed disc saturates") {
    const Vec2 intent{3.0, 0.0};
    const OrcaSolution sol = solve_orca_qp({}, intent, params);
    CHECK(sol.velocity.x == doctest::Approx(params.max_speed).epsilon(1e-10));
    CHECK(sol.velocity.y == doctest::Approx(0.0).epsilon(1e-10));
    const OrcaKktResiduals res = kkt_residuals({}, sol, intent, params);
    CHECK(res.infinity_norm() <= 1e-8);
  }
  SUBCASE("conflicting relaxable constraints engage the shared slack") {
    const std::vector<OrcaConstraint> cons{{{{1.0, 0.0}, 0.5}, true}, {{{-1.0, 0.0}, 0.5}, true}};
    const OrcaSolution sol = solve_orca_qp(cons, {0.0, 0.0}, params);
    CHECK(sol.velocity.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sol.slack == doctest::Approx(0.5).epsilon(1e-9));
    const OrcaKktResiduals res = kkt_residuals(cons, sol, {0.0, 0.0}, params);
    CHECK(res.infinity_norm() <= 1e-8);
  }
  SUBCASE("infeasible hard constraints raise") {
    const std::vector<OrcaConstraint> cons{{{{1.0, 0.0}, 2.0}, false}};
    CHECK_THROWS_AS(solve_orca_qp(cons, {0.0, 0.0}, params), InfeasibleGeometryError);
  }
}

TEST_CASE("solve_orca_qp matches the grid oracle and certifies KKT") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const OrcaParams params = test_params(1.4, 100.0);

  auto t0 = std::chrono::steady_clock::now();
  double solver_time = 0.0;
  int tested = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<OrcaConstraint> cons;
    const int m = 1 + static_cast<int>(std::abs(u(rng)) * 5.99);
    for (int i = 0; i < m; ++i) {
      Vec2 n{u(rng), u(rng)};
      if (norm(n) < 1e-3) n = {1.0, 0.0};
      n = normalized(n);
      const double b = 0.9 * u(rng);
      const bool relax = u(rng) > -0.3;  // mix of agent and obstacle rows
      cons.push_back({{n, b}, relax});
    }
    const Vec2 intent{1.3 * u(rng), 1.3 * u(rng)};

    OrcaSolution sol;
    const auto s0 = std::chrono::steady_clock::now();
    try {
      sol = solve_orca_qp(cons, intent, params);
    } catch (const InfeasibleGeometryError&) {
      continue;
    }
    solver_time += std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    ++tested;

    const OrcaKktResiduals res = kkt_residuals(cons, sol, intent, params);
    CHECK(res.infinity_norm() <= 1e-8);

    const double obj = objective_of(sol, intent, params);
    const double gobj = grid_objective(cons, intent, params, 2000);
    // the grid point is feasible, so it cannot beat the true optimum
    CHECK(obj <= gobj + 1e-9);
    // and the optimum must be reachable from some grid point within one cell
    const double h = 2.0 * params.max_speed / 2000.0;
    const double slope = 2.0 * (norm(sol.velocity - intent) + params.relaxation_penalty * sol.slack + 1.0);
    CHECK(gobj - obj <= slope * h * 1.5 + 10.0 * h * h * (1.0 + params.relaxation_penalty));
  }
  (void)t0;
  CHECK(tested >= 25);
  CHECK(solver_time < 1.0);
}

TEST_CASE("feasible-intent identity (property)") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const OrcaParams params = test_params(1.4, 1e4);
  int done = 0;
  while (done < 500) {
    std::vector<OrcaConstraint> cons;
    const int m = static_cast<int>(std::abs(u(rng)) * 6.0);
    for (int i = 0; i < m; ++i) {
      Vec2 n{u(rng), u(rng)};
      if (norm(n) < 1e-3) n = {0.0, 1.0};
      n = normalized(n);
      cons.push_back({{n, 0.9 * u(rng)}, u(rng) > 0.0});
    }
    const Vec2 intent{1.4 * u(rng), 1.4 * u(rng)};
    if (norm(intent) > params.max_speed) continue;
    bool feasible = true;
    for (const auto& c : cons) {
      if (dot(c.plane.normal, intent) < c.plane.offset) feasible = false;
    }
    if (!feasible) continue;
    ++done;
    const OrcaSolution sol = solve_orca_qp(cons, intent, params);
    CHECK(norm(sol.velocity - intent) <= 1e-8);
    CHECK(sol.slack <= 1e-10);
  }
}

TEST_CASE("projection distance is monotone under added hard constraints") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const OrcaParams params = test_params(1.4, 1e4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<OrcaConstraint> cons;
    const Vec2 intent{1.3 * u(rng), 1.3 * u(rng)};
    double prev_dist = 0.0;
    for (int i = 0; i < 5; ++i) {
      Vec2 n{u(rng), u(rng)};
      if (norm(n) < 1e-3) n = {1.0, 0.0};
      cons.push_back({{normalized(n), 0.6 * u(rng)}, false});
      OrcaSolution sol;
      try {
        sol = solve_orca_qp(cons, intent, params);
      } catch (const InfeasibleGeometryError&) {
        break;
      }
      const double dist = norm(sol.velocity - intent);
      CHECK(dist >= prev_dist - 1e-9);
      prev_dist = dist;
    }
  }
}

TEST_CASE("reciprocity: symmetric head-on solutions mirror") {
  OrcaParams params = test_params(1.4, 1e4);
  params.time_horizon_agents = 3.0;
  const Vec2 pa{-1.5, 0.0}, pb{1.5, 0.0};
  const Vec2 va{1.0, 0.0}, vb{-1.0, 0.0};
  const HalfPlane ha = agent_halfplane(pa, va, pb, vb, 0.6, 3.0, 0.5);
  const HalfPlane hb = agent_halfplane(pb, vb, pa, va, 0.6, 3.0, 0.5);
  const OrcaSolution sa = solve_orca_qp({{ha, true}}, va, params);
  const OrcaSolution sb = solve_orca_qp({{hb, true}}, vb, params);
  CHECK(sa.velocity.x == doctest::Approx(-sb.velocity.x).epsilon(1e-8));
  CHECK(sa.velocity.y == doctest::Approx(-sb.velocity.y).epsilon(1e-8));
}

TEST_CASE("kkt_residuals sensitivity") {
  const OrcaParams params = test_params(1.4, 100.0);
  const HalfPlane hp{{0.0, 1.0}, 0.4};
  const Vec2 intent{0.3, 0.0};
  const std::vector<OrcaConstraint> cons{{hp, false}};
  OrcaSolution sol = solve_orca_qp(cons, intent, params);
  CHECK(kkt_residuals(cons, sol, intent, params).infinity_norm() <= 1e-8);

  SUBCASE("perturbing v along an active normal shows up at first order") {
    OrcaSolution bad = sol;
    bad.velocity += hp.normal * 1e-3;
    const double r = kkt_residuals(cons, bad, intent, params).infinity_norm();
    CHECK(r >= 1e-4);
    CHECK(r <= 1e-1);
  }
  SUBCASE("feasible point with zero duals leaves exactly the pull toward the intent") {
    OrcaSolution free;
    free.velocity = {0.1, 0.9};
    free.duals = {0.0};
    free.slack = 0.0;
    free.disc_dual = 0.0;
    const OrcaKktResiduals res = kkt_residuals(cons, free, intent, params);
    CHECK(norm(res.stationarity) == doctest::Approx(2.0 * norm(free.velocity - intent)).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch rejected") {
    OrcaSolution bad = sol;
    bad.duals = {0.0, 0.0};
    CHECK_THROWS_AS(kkt_residuals(cons, bad, intent, params), DimensionError);
  }
}
