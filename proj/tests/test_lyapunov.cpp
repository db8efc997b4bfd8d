#include <doctest.h>

#include <cmath>

#include "hbl/lyapunov.hpp"

using namespace hbl;

TEST_CASE("qr exponents at a fixed saddle match the multiplier logs") {
  auto p = MapParams::make(2.0, 1e-4, +1);
  FixedSaddles fs = fixed_points(p);
  auto [chi_s_o, chi_u_o] = orbit_exponents(fs.Q);

  ExponentEstimate e = qr_exponents(p, fs.Q.points[0], 6);
  CHECK(e.chi_u == doctest::Approx(chi_u_o).epsilon(1e-8));
  CHECK(e.chi_s == doctest::Approx(chi_s_o).epsilon(1e-6));
  CHECK(e.short_run);
  CHECK(e.chi_s + e.chi_u == doctest::Approx(std::log(p.b)).epsilon(1e-6));
}

TEST_CASE("cycle-driven qr matches multiplier logs to 1e-8 on longer cycles") {
  auto p = MapParams::make(2.2, 1e-3, +1);
  auto orbits = enumerate_periodic(p, 5);
  REQUIRE(orbits.size() >= 5);
  for (auto& o : orbits) {
    auto [chi_s_o, chi_u_o] = orbit_exponents(o);
    ExponentEstimate e = qr_exponents_cycle(p, o);
    CHECK(e.converged);
    CHECK(e.n_steps % o.period == 0);
    CHECK(std::abs(e.chi_u - chi_u_o) < 1e-8);
    CHECK(std::abs(e.chi_s - chi_s_o) < 1e-8);
  }
}

TEST_CASE("qr exponent sum equals log det on a bounded orbit") {
  auto p = MapParams::make(1.8, 1e-3, +1);
  ExponentEstimate e = qr_exponents(p, {0.1, 0.0}, 20000);
  CHECK(e.chi_s + e.chi_u == doctest::Approx(std::log(p.b)).epsilon(1e-6));
  CHECK(e.chi_s <= e.chi_u);
  CHECK(static_cast<long>(e.history.size()) == 20000 / 1000);
  CHECK(!e.short_run);
}

TEST_CASE("qr estimate is shift invariant at matched run length") {
  auto p = MapParams::make(1.8, 1e-3, +1);
  Point z{0.1, 0.0};
  ExponentEstimate e0 = qr_exponents(p, z, 200000);
  ExponentEstimate e1 = qr_exponents(p, apply(p, z), 200000);
  CHECK(std::abs(e0.chi_u - e1.chi_u) < 1e-3);
  // strict check: same tail, aligned start
  ExponentEstimate f0 = qr_exponents(p, fixed_points(p).Q.points[0], 8);
  ExponentEstimate f1 = qr_exponents(p, apply(p, fixed_points(p).Q.points[0]), 8);
  CHECK(std::abs(f0.chi_u - f1.chi_u) < 1e-6);
}

TEST_CASE("near one-dimensional regime tracks the quadratic map exponent") {
  double a = 1.99, b = 1e-9;
  auto p = MapParams::make(a, b, +1);
  double x0 = 0.1;
  long n = 200000;
  ExponentEstimate e = qr_exponents(p, {x0, 0.0}, n);

  // direct Birkhoff average for x -> 1 - a x^2, same start and warmup
  double x = x0;
  for (int k = 0; k < 4; ++k) x = 1 - a * x * x;
  double s = 0.0;
  for (long k = 0; k < n; ++k) {
    s += std::log(std::abs(-2 * a * x));
    x = 1 - a * x * x;
  }
  CHECK(std::abs(e.chi_u - s / n) < 0.05);
}

TEST_CASE("qr reports the escape step") {
  auto p = MapParams::make(2.5, 1e-3, +1);
  bool threw = false;
  try {
    qr_exponents(p, {0.0, 0.0}, 1000);
  } catch (const EscapeError& err) {
    threw = true;
    CHECK(err.index > 0);
    CHECK(err.index < 60);
  }
  CHECK(threw);
}

TEST_CASE("unstable direction at a saddle matches the eigenvector") {
  auto p = MapParams::make(2.0, 1e-3, +1);
  FixedSaddles fs = fixed_points(p);
  Point q = fs.Q.points[0];
  UnstableDirection u = estimate_Eu(p, q);
  CHECK(u.converged);

  Eigen2 eg = eigen2(jacobian(p, q));
  Vec2 ev = std::abs(eg.lam1) > std::abs(eg.lam2) ? eg.v1 : eg.v2;
  CHECK(line_angle(u.direction, ev) < 1e-8);
  CHECK(std::abs(u.direction.norm() - 1.0) < 1e-12);
}

TEST_CASE("unstable direction field is equivariant and start-independent") {
  auto p = MapParams::make(2.0, 1e-3, +1);
  FixedSaddles fs = fixed_points(p);
  // walk a short stretch of the unstable set: push the saddle off slightly
  Eigen2 eg = eigen2(jacobian(p, fs.Q.points[0]));
  Vec2 ev = std::abs(eg.lam1) > std::abs(eg.lam2) ? eg.v1 : eg.v2;
  Point z = fs.Q.points[0] + 1e-4 * ev;
  for (int k = 0; k < 3; ++k) z = apply(p, z);

  UnstableDirection uz = estimate_Eu(p, z);
  UnstableDirection ufz = estimate_Eu(p, apply(p, z));
  Vec2 pushed = jacobian(p, z) * uz.direction;
  CHECK(line_angle(pushed, ufz.direction) < 1e-7);
}

TEST_CASE("generic points off the unstable set fail the backward test") {
  auto p = MapParams::make(2.0, 1e-3, +1);
  CHECK_THROWS_WITH_AS(estimate_Eu(p, {0.3, 0.9}, 64), "not in bounded set", Error);
}

TEST_CASE("exponent audit clears the bars in the horseshoe regime") {
  auto p = MapParams::make(2.2, 1e-3, +1);
  auto orbits = enumerate_periodic(p, 6);
  ExponentAudit r = audit_exponent_bounds(p, orbits);
  CHECK(r.pass());
  CHECK(r.n_orbits == static_cast<int>(orbits.size()));
  CHECK(r.chi_u_floor == doctest::Approx(0.17328679).epsilon(1e-6));
  CHECK(r.chi_s_ceiling == doctest::Approx(std::log(1e-3) / 3.0).epsilon(1e-12));
  CHECK(r.min_chi_u > r.chi_u_floor);
  CHECK(r.max_chi_s < r.chi_s_ceiling);
}

TEST_CASE("exponent audit flags an attracting cycle") {
  // weak nonlinearity: the fixed point near the positive root attracts
  auto p = MapParams::make(0.5, 0.05, +1);
  PeriodicOrbit o = newton_periodic(p, {1.0, 0.1}, 1);
  CHECK(o.classification == OrbitClass::attracting);
  ExponentAudit r = audit_exponent_bounds(p, {o});
  REQUIRE(r.violations.size() == 1);
  CHECK(!r.pass());
  CHECK(r.violations[0].margin_u < 0.0);
}
