#include <cmath>
#include <random>

#include <doctest.h>

#include "crowdnav/core.hpp"

using namespace crowdnav;

TEST_CASE("wrap_angle maps into (-pi, pi] and is idempotent") {
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = ang(rng);
    const double w = wrap_angle(a);
    CHECK(w > -M_PI - 1e-15);
    CHECK(w <= M_PI + 1e-15);
    CHECK(wrap_angle(w) == doctest::Approx(w).epsilon(1e-14));
    CHECK(std::remainder(w - a, 2.0 * M_PI) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("unicycle_step") {
  SUBCASE("zero action is a fixed point") {
    RobotState s({0.0, 0.0}, 0.0, 0.0);
    const RobotState out = unicycle_step(s, {0.0, 0.0}, 0.25);
    CHECK(out.position.x == doctest::Approx(0.0));
    CHECK(out.position.y == doctest::Approx(0.0));
    CHECK(out.heading == doctest::Approx(0.0));
  }
  SUBCASE("axis-aligned Euler step") {
    RobotState s({0.0, 0.0}, 0.0, 0.0);
    const RobotState out = unicycle_step(s, {1.0, 0.0}, 0.25);
    CHECK(out.position.x == doctest::Approx(0.25));
    CHECK(out.position.y == doctest::Approx(0.0));
    CHECK(out.heading == doctest::Approx(0.0));
    CHECK(out.speed == doctest::Approx(1.0));
  }
  SUBCASE("matches an independent scalar evaluation of the Euler formula") {
    RobotState s({1.0, 1.0}, M_PI / 2.0, 0.0);
    const RobotAction a{0.8, 0.4};
    const double dt = 0.25;
    const RobotState out = unicycle_step(s, a, dt);
    // oracle computed componentwise with plain scalar arithmetic
    const double ox = 1.0 + dt * 0.8 * std::cos(M_PI / 2.0);
    const double oy = 1.0 + dt * 0.8 * std::sin(M_PI / 2.0);
    const double oth = M_PI / 2.0 + dt * 0.4;
    CHECK(out.position.x == doctest::Approx(ox).epsilon(1e-15));
    CHECK(out.position.y == doctest::Approx(oy).epsilon(1e-15));
    CHECK(out.heading == doctest::Approx(oth).epsilon(1e-15));
  }
  SUBCASE("displacement magnitude is |v| dt exactly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
      RobotState s({u(rng), u(rng)}, u(rng), u(rng));
      const RobotAction a{u(rng), u(rng)};
      const RobotState out = unicycle_step(s, a, 0.25);
      CHECK(norm(out.position - s.position) == doctest::Approx(std::abs(a.linear) * 0.25).epsilon(1e-12));
    }
  }
  SUBCASE("non-finite input rejected") {
    RobotState s({0.0, 0.0}, 0.0, 0.0);
    CHECK_THROWS_AS(unicycle_step(s, {std::nan(""), 0.0}, 0.25), InvalidStateError);
    CHECK_THROWS_AS(unicycle_step(s, {0.0, 0.0}, 0.0), InvalidStateError);
  }
}

TEST_CASE("integrator_step") {
  CHECK(integrator_step({{0, 0}, {0, 0}}, {0, 0}, 0.25).position.x == doctest::Approx(0.0));
  const HumanState h = integrator_step({{2.0, -1.0}, {0, 0}}, {0.4, 0.8}, 0.25);
  CHECK(h.position.x == doctest::Approx(2.1));
  CHECK(h.position.y == doctest::Approx(-0.8));
  CHECK(h.velocity.x == doctest::Approx(0.4));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 v{u(rng), u(rng)};
    const double dt = 0.05 + std::abs(u(rng));
    const HumanState out = integrator_step({p, {0, 0}}, v, dt);
    CHECK(out.position.x == doctest::Approx(p.x + dt * v.x).epsilon(1e-14));
    CHECK(out.position.y == doctest::Approx(p.y + dt * v.y).epsilon(1e-14));
  }
  CHECK_THROWS_AS(integrator_step({{0, 0}, {0, 0}}, {std::nan(""), 0.0}, 0.25), InvalidStateError);
}

TEST_CASE("position_of selects robot and humans") {
  SystemState st;
  st.robot = RobotState({1.0, 2.0}, 0.3, 0.5);
  st.humans = {HumanState{{3.0, 4.0}, {0, 0}}, HumanState{{5.0, 6.0}, {0, 0}}};
  st.weights = WeightVector::uniform(1);
  CHECK(position_of(st, 0).x == doctest::Approx(1.0));
  CHECK(position_of(st, 1).y == doctest::Approx(4.0));
  CHECK(position_of(st, 2).x == doctest::Approx(5.0));
  CHECK_THROWS_AS(position_of(st, 3), DimensionError);

  // relative distance equals the explicit selector-matrix quadratic form
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 100; ++i) {
    SystemState s2;
    s2.robot = RobotState({u(rng), u(rng)}, 0.0, 0.0);
    s2.humans = {HumanState{{u(rng), u(rng)}, {0, 0}}};
    s2.weights = WeightVector::uniform(1);
    // oracle: x' P x with P the selector difference outer product, built longhand
    const double dx[4] = {s2.robot.position.x, s2.robot.position.y, s2.humans[0].position.x,
                          s2.humans[0].position.y};
    const double qf = (dx[0] - dx[2]) * (dx[0] - dx[2]) + (dx[1] - dx[3]) * (dx[1] - dx[3]);
    const double d = norm(position_of(s2, 0) - position_of(s2, 1));
    CHECK(d * d == doctest::Approx(qf).epsilon(1e-12));
  }
}

TEST_CASE("point_segment_distance") {
  const Segment seg{{-1.0, 0.0}, {1.0, 0.0}};
  CHECK(point_segment_distance({0.5, 0.0}, seg) == doctest::Approx(0.0));
  CHECK(point_segment_distance({0.0, 1.0}, seg) == doctest::Approx(1.0));

  // dense-sampling oracle
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const Segment s{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (norm_sq(s.b - s.a) < 1e-6) continue;
    const Vec2 p{u(rng), u(rng)};
    double best = 1e100;
    for (int k = 0; k <= 10000; ++k) {
      const double t = static_cast<double>(k) / 10000.0;
      best = std::min(best, norm(p - (s.a + (s.b - s.a) * t)));
    }
    CHECK(point_segment_distance(p, s) == doctest::Approx(best).epsilon(1e-6));
  }
  CHECK_THROWS_AS(point_segment_distance({0, 0}, Segment{{1, 1}, {1, 1}}), DegenerateGeometryError);
}

TEST_CASE("WeightVector simplex invariant") {
  CHECK_THROWS_AS(WeightVector({0.5, 0.6}), InvalidStateError);
  CHECK_THROWS_AS(WeightVector({-0.1, 1.1}), InvalidStateError);
  const WeightVector w = WeightVector::from_unnormalized({2.0, 6.0});
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.75));
  const WeightVector u9 = WeightVector::uniform(9);
  double sum = 0.0;
  for (std::size_t i = 0; i < u9.size(); ++i) sum += u9[i];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  // all-zero masses degrade to uniform
  const WeightVector z = WeightVector::from_unnormalized({0.0, 0.0, 0.0});
  CHECK(z[1] == doctest::Approx(1.0 / 3.0));
}
