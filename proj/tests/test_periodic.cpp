#include <doctest.h>

#include <cmath>

#include "hbl/periodic.hpp"

using namespace hbl;

namespace {

// necklace count: prime cycles of length n in the full 2-shift
int necklace2(int n) {
  auto mobius = [](int m) {
    int cnt = 0;
    for (int q = 2; q * q <= m; ++q) {
      if (m % q == 0) {
        if (m % (q * q) == 0) return 0;
        ++cnt;
        m /= q;
      }
    }
    if (m > 1) ++cnt;
    return (cnt % 2 == 0) ? 1 : -1;
  };
  long s = 0;
  for (int d = 1; d <= n; ++d)
    if (n % d == 0) s += mobius(n / d) * (1L << d);
  return static_cast<int>(s / n);
}

}  // namespace

TEST_CASE("fixed points approach the degenerate pair as b shrinks") {
  auto p = MapParams::make(2.0, 1e-8, +1);
  FixedSaddles fs = fixed_points(p);
  CHECK(fs.P.points[0].x == doctest::Approx(0.5).epsilon(1e-4));
  CHECK(fs.Q.points[0].x == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(fs.P.classification == OrbitClass::saddle);
  CHECK(fs.Q.classification == OrbitClass::saddle);
}

TEST_CASE("fixed points match the quadratic formula") {
  double a = 2.0, b = 1e-4;
  auto p = MapParams::make(a, b, +1);
  FixedSaddles fs = fixed_points(p);
  double xp = (-(1 + b) + std::sqrt((1 + b) * (1 + b) + 8)) / 4.0;
  CHECK(std::abs(fs.P.points[0].x - xp) < 1e-12);
  CHECK(std::abs(fs.P.points[0].y - std::sqrt(b) * xp) < 1e-12);

  // Q multipliers from an independent closed form of the 2x2 eigenproblem
  double xq = fs.Q.points[0].x;
  double tr = -2 * a * xq;
  double det = b;
  double disc = std::sqrt(tr * tr - 4 * det);
  double l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);
  if (std::abs(l1) < std::abs(l2)) std::swap(l1, l2);
  CHECK(std::abs(fs.Q.mult1) == doctest::Approx(std::abs(l1)).epsilon(1e-10));
  CHECK(std::abs(fs.Q.mult2) == doctest::Approx(std::abs(l2)).epsilon(1e-8));
  CHECK(std::abs(fs.Q.mult1) == doctest::Approx(4.0).epsilon(0.01));
  CHECK(std::abs(fs.Q.mult2) == doctest::Approx(b / 4.0).epsilon(0.01));
  CHECK(std::abs(fs.Q.mult1 * fs.Q.mult2) == doctest::Approx(b).epsilon(1e-8));
}

TEST_CASE("newton refines and reduces to prime period") {
  auto p = MapParams::make(2.0, 1e-3, +1);
  FixedSaddles fs = fixed_points(p);
  PeriodicOrbit o1 = newton_periodic(p, fs.P.points[0], 1);
  CHECK(o1.period == 1);
  CHECK(dist(o1.points[0], fs.P.points[0]) < 1e-10);

  PeriodicOrbit o3 = newton_periodic(p, fs.P.points[0], 3);
  CHECK(o3.period == 1);
  CHECK(dist(o3.points[0], fs.P.points[0]) < 1e-10);
}

TEST_CASE("period-2 orbit sits near its one-dimensional shadow") {
  double a = 1.95, b = 1e-3;
  auto p = MapParams::make(a, b, +1);
  // 1d period-2 of x -> 1 - a x^2: roots of a^2 x^2 - a x - (a - 1) = 0
  double x1 = (1.0 + std::sqrt(4 * a - 3)) / (2 * a);
  double x2 = (1.0 - std::sqrt(4 * a - 3)) / (2 * a);
  PeriodicOrbit o = newton_periodic(p, {x1, std::sqrt(b) * x2}, 2);
  CHECK(o.period == 2);
  CHECK(o.residual < 1e-10);
  double d1 = std::min(std::abs(o.points[0].x - x1), std::abs(o.points[0].x - x2));
  double d2 = std::min(std::abs(o.points[1].x - x1), std::abs(o.points[1].x - x2));
  CHECK(d1 < 0.05);
  CHECK(d2 < 0.05);
}

TEST_CASE("enumeration in the horseshoe regime matches shift counts") {
  auto p = MapParams::make(2.2, 1e-3, +1);
  auto orbits = enumerate_periodic(p, 4);
  int counts[5] = {0, 0, 0, 0, 0};
  for (auto& o : orbits) {
    REQUIRE(o.period <= 4);
    ++counts[o.period];
    CHECK(o.residual < 1e-10);
    // determinant constraint per cycle
    double prod = std::abs(o.mult1 * o.mult2);
    CHECK(prod == doctest::Approx(std::pow(p.b, o.period)).epsilon(1e-8));
    // reverify by direct iteration
    Point z = o.points[0];
    for (int k = 0; k < o.period; ++k) z = apply(p, z);
    CHECK(dist(z, o.points[0]) < 1e-9);
    // prime minimality
    for (int d = 1; d < o.period; ++d) {
      if (o.period % d) continue;
      CHECK(dist(o.points[static_cast<size_t>(d)], o.points[0]) > 1e-6);
    }
  }
  CHECK(counts[1] == necklace2(1));
  CHECK(counts[2] == necklace2(2));
  CHECK(counts[3] == necklace2(3));
  CHECK(counts[4] == necklace2(4));
}

TEST_CASE("period-1 enumeration finds exactly the two saddles") {
  auto p = MapParams::make(2.0, 1e-3, +1);
  auto orbits = enumerate_periodic(p, 1);
  REQUIRE(orbits.size() == 2);
  FixedSaddles fs = fixed_points(p);
  CHECK(dist(orbits[0].points[0], fs.Q.points[0]) < 1e-9);
  CHECK(dist(orbits[1].points[0], fs.P.points[0]) < 1e-9);
}

TEST_CASE("enumeration is deterministic") {
  auto p = MapParams::make(2.1, 2e-3, -1);
  GridSpec g;
  g.nx = 60;
  g.ny = 12;
  auto r1 = enumerate_periodic(p, 3, g);
  auto r2 = enumerate_periodic(p, 3, g);
  REQUIRE(r1.size() == r2.size());
  for (size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].period == r2[i].period);
    for (int k = 0; k < r1[i].period; ++k) {
      CHECK(r1[i].points[static_cast<size_t>(k)].x == r2[i].points[static_cast<size_t>(k)].x);
      CHECK(r1[i].points[static_cast<size_t>(k)].y == r2[i].points[static_cast<size_t>(k)].y);
    }
  }
}

TEST_CASE("orbit exponents and the determinant identity") {
  double a = 2.0, b = 1e-4;
  auto p = MapParams::make(a, b, +1);
  FixedSaddles fs = fixed_points(p);
  auto [chi_s, chi_u] = orbit_exponents(fs.Q);
  CHECK(chi_u == doctest::Approx(std::log(4.0)).epsilon(0.01));
  CHECK(chi_s == doctest::Approx(std::log(b) - std::log(4.0)).epsilon(0.01));
  CHECK(chi_s + chi_u == doctest::Approx(std::log(b)).epsilon(1e-8));

  PeriodicOrbit fake;
  fake.classification = OrbitClass::attracting;
  CHECK_THROWS_AS(orbit_exponents(fake), Error);
}
