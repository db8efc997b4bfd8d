#pragma once

#include <complex>
#include <vector>

#include "hbl/map.hpp"

namespace hbl {

enum class OrbitClass { saddle, attracting, repelling, elliptic };

const char* to_string(OrbitClass c);

struct PeriodicOrbit {
  std::vector<Point> points;  // points[k] = f^k(points[0]), length = period
  int period = 1;
  std::complex<double> mult1, mult2;  // |mult1| >= |mult2|
  OrbitClass classification = OrbitClass::elliptic;
  double residual = 0.0;  // max |f(points[k]) - points[k+1 mod period]|
};

struct FixedSaddles {
  PeriodicOrbit P;  // x > 0 branch
  PeriodicOrbit Q;  // x < 0 branch
};

FixedSaddles fixed_points(const MapParams& p);

PeriodicOrbit newton_periodic(const MapParams& p, Point seed, int period);

struct GridSpec {
  int nx = 200;
  int ny = 40;
  Rect rect{0, 0, 0, 0};  // zero area means "derive from params"
};

// Newton from a seed grid plus symbolic one-dimensional seeds (see the module
// notes); deduplicated prime orbits sorted by period then leading point.
std::vector<PeriodicOrbit> enumerate_periodic(const MapParams& p, int max_period,
                                              const GridSpec& grid = {}, int threads = 0);

// (chi_s, chi_u) per orbit point; requires a saddle
std::pair<double, double> orbit_exponents(const PeriodicOrbit& o);

// full derivative matrix over one cycle, with scale split off to avoid overflow
struct CycleDerivative {
  Mat2 m;
  double log_scale;
};
CycleDerivative cycle_derivative(const MapParams& p, const PeriodicOrbit& o);

}  // namespace hbl
