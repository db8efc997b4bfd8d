#include "hbl/periodic.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "hbl/parallel.hpp"

namespace hbl {

const char* to_string(OrbitClass c) {
  switch (c) {
    case OrbitClass::saddle: return "saddle";
    case OrbitClass::attracting: return "attracting";
    case OrbitClass::repelling: return "repelling";
    case OrbitClass::elliptic: return "elliptic";
  }
  return "?";
}

CycleDerivative cycle_derivative(const MapParams& p, const PeriodicOrbit& o) {
  Mat2 m = Mat2::identity();
  double ls = 0.0;
  for (int k = 0; k < o.period; ++k) {
    m = jacobian(p, o.points[k]) * m;
    if ((k + 1) % 16 == 0) {
      double s = m.max_abs();
      if (s > 0.0) { m = m * (1.0 / s); ls += std::log(s); }
    }
  }
  return {m, ls};
}

namespace {

constexpr double kBigCoord = 1e6;

void classify_and_fill(const MapParams& p, PeriodicOrbit& o) {
  CycleDerivative cd = cycle_derivative(p, o);
  Eigen2 e = eigen2(cd.m);
  double sc = std::exp(cd.log_scale);
  o.mult1 = e.lam1 * sc;
  o.mult2 = e.lam2 * sc;
  if (e.real) {
    // the small multiplier drowns in cancellation inside the product matrix;
    // recover it from the per-step determinants, which carry no cancellation
    double logabs = 0.0, sgn = 1.0;
    for (int k = 0; k < o.period; ++k) {
      double dk = jacobian(p, o.points[static_cast<size_t>(k)]).det();
      logabs += std::log(std::abs(dk));
      if (dk < 0.0) sgn = -sgn;
    }
    double m1 = o.mult1.real();
    if (m1 != 0.0 && std::isfinite(logabs))
      o.mult2 = sgn * std::exp(logabs - std::log(std::abs(m1))) * (m1 > 0.0 ? 1.0 : -1.0);
  }
  double m1 = std::abs(o.mult1), m2 = std::abs(o.mult2);
  if (m1 > 1.0 && m2 < 1.0) o.classification = OrbitClass::saddle;
  else if (m1 < 1.0 - 1e-9) o.classification = OrbitClass::attracting;
  else if (m2 > 1.0) o.classification = OrbitClass::repelling;
  else o.classification = OrbitClass::elliptic;

  o.residual = 0.0;
  for (int k = 0; k < o.period; ++k) {
    Point im = apply(p, o.points[k]);
    o.residual = std::max(o.residual, dist(im, o.points[(k + 1) % o.period]));
  }
}

PeriodicOrbit newton_once(const MapParams& p, Point seed, int period) {
  if (period < 1) throw Error("period must be >= 1");
  if (!seed.finite()) throw Error("non-finite seed");
  Point z = seed;
  std::vector<Point> orbit(static_cast<size_t>(period) + 1);

  auto eval = [&](Point w, std::vector<Point>& pts) -> bool {
    pts[0] = w;
    for (int k = 1; k <= period; ++k) {
      pts[k] = apply(p, pts[k - 1]);
      if (!pts[k].finite() || std::abs(pts[k].x) > kBigCoord || std::abs(pts[k].y) > kBigCoord)
        return false;
    }
    return true;
  };

  std::vector<Point> trial(orbit.size());
  for (int it = 0; it < 50; ++it) {
    if (!eval(z, orbit)) throw Error("newton diverged (orbit escaped)");
    Vec2 F = orbit[period] - z;
    double fn = F.norm();
    if (fn < 1e-13 * (1.0 + z.norm())) {
      PeriodicOrbit o;
      o.period = period;
      o.points.assign(orbit.begin(), orbit.begin() + period);
      classify_and_fill(p, o);
      return o;
    }
    // derivative of the period map along the current orbit
    Mat2 m = Mat2::identity();
    double ls = 0.0;
    for (int k = 0; k < period; ++k) {
      m = jacobian(p, orbit[k]) * m;
      if ((k + 1) % 16 == 0) {
        double s = m.max_abs();
        if (s > 0.0) { m = m * (1.0 / s); ls += std::log(s); }
      }
    }
    double sc = std::exp(ls);
    Eigen2 eg = eigen2(m);
    if (std::abs(eg.lam1 * sc - 1.0) < 1e-8 || std::abs(eg.lam2 * sc - 1.0) < 1e-8)
      throw Error("non-hyperbolic orbit");
    Mat2 A{m.a * sc - 1.0, m.b * sc, m.c * sc, m.d * sc - 1.0};
    double det = A.det();
    if (det == 0.0 || !std::isfinite(det)) throw Error("non-hyperbolic orbit");
    Vec2 d{(-F.x * A.d + F.y * A.b) / det, (-A.a * F.y + A.c * F.x) / det};
    // backtracking keeps the step from overshooting out of the basin
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 25; ++h) {
      Point cand = z + t * d;
      if (eval(cand, trial)) {
        double fn2 = (trial[period] - cand).norm();
        if (fn2 < fn || fn2 < 1e-13) { z = cand; accepted = true; break; }
      }
      t *= 0.5;
    }
    if (!accepted) throw Error("newton stalled");
  }
  throw Error("newton did not converge in 50 iterations");
}

}  // namespace

PeriodicOrbit newton_periodic(const MapParams& p, Point seed, int period) {
  PeriodicOrbit o = newton_once(p, seed, period);
  // prime-period reduction: try divisors in increasing order
  for (int d = 1; d < o.period; ++d) {
    if (o.period % d != 0) continue;
    if (dist(o.points[static_cast<size_t>(d)], o.points[0]) < 1e-6) {
      PeriodicOrbit r = newton_once(p, o.points[0], d);
      if (r.residual < 1e-10) return r;
    }
  }
  if (o.residual >= 1e-10) throw Error("newton residual above contract");
  return o;
}

FixedSaddles fixed_points(const MapParams& p) {
  if (p.a < 1.5 || p.a > 2.5) throw Error("fixed_points: a outside [1.5, 2.5]");
  if (p.b > 0.05) throw Error("fixed_points: b above 0.05");
  // standard form: a x^2 + (1 + orientation b) x - 1 = 0, y = orientation sqrt(b) x
  double c1 = 1.0 + p.orientation * p.b;
  double disc = c1 * c1 + 4.0 * p.a;
  if (disc < 0.0) throw Error("no real fixed points");
  double s = std::sqrt(disc);
  double xp = (-c1 + s) / (2.0 * p.a);
  double xq = (-c1 - s) / (2.0 * p.a);
  FixedSaddles fs;
  fs.P = newton_periodic(p, {xp, p.orientation * p.sqrt_b * xp}, 1);
  fs.Q = newton_periodic(p, {xq, p.orientation * p.sqrt_b * xq}, 1);
  if (!(fs.P.points[0].x > 0.0 && fs.Q.points[0].x < 0.0))
    throw Error("fixed points on unexpected sides");
  return fs;
}

std::pair<double, double> orbit_exponents(const PeriodicOrbit& o) {
  if (o.classification != OrbitClass::saddle) throw Error("exponents not hyperbolic");
  double chi_u = std::log(std::abs(o.mult1)) / o.period;
  double chi_s = std::log(std::abs(o.mult2)) / o.period;
  return {chi_s, chi_u};
}

namespace {

// one-dimensional quadratic family used for seeding: x -> 1 - a x^2
struct Seed1D {
  std::vector<double> xs;  // cycle in forward order
};

std::optional<Seed1D> word_cycle_1d(double a, unsigned word, int period) {
  double x = 0.3;
  const int warm = 64 * period + 128;
  for (int j = warm - 1; j >= 0; --j) {
    int sym = (word >> (j % period)) & 1u;
    double r = (1.0 - x) / a;
    if (r < 0.0) return std::nullopt;
    x = (sym ? 1.0 : -1.0) * std::sqrt(r);
  }
  // verify it closed up into a genuine cycle with the requested symbols
  Seed1D s;
  s.xs.resize(static_cast<size_t>(period));
  double y = x;
  for (int k = 0; k < period; ++k) {
    s.xs[static_cast<size_t>(k)] = y;
    int sym = (word >> (k % period)) & 1u;
    if ((y >= 0.0) != (sym == 1)) return std::nullopt;
    y = 1.0 - a * y * y;
  }
  if (std::abs(y - x) > 1e-8) return std::nullopt;
  return s;
}

std::optional<PeriodicOrbit> continue_from_1d(const MapParams& p, const Seed1D& s) {
  int period = static_cast<int>(s.xs.size());
  // ramp b up from near zero so the seed tracks into the dissipative orbit
  std::vector<double> ladder;
  double b0 = std::min(1e-8, p.b);
  for (int j = 0; j <= 6; ++j)
    ladder.push_back(b0 * std::pow(p.b / b0, j / 6.0));
  Point z{s.xs[0], 0.0};
  z.y = p.orientation * std::sqrt(ladder[0]) * s.xs[s.xs.size() - 1];
  for (double bj : ladder) {
    MapParams pj = MapParams::make(p.a, bj, p.orientation, p.variant, p.phi);
    try {
      PeriodicOrbit o = newton_once(pj, z, period);
      z = o.points[0];
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  try {
    return newton_periodic(p, z, period);
  } catch (const Error&) {
    return std::nullopt;
  }
}

void canonicalize(PeriodicOrbit& o) {
  size_t best = 0;
  for (size_t k = 1; k < o.points.size(); ++k) {
    const Point& a = o.points[k];
    const Point& b = o.points[best];
    if (a.x < b.x || (a.x == b.x && a.y < b.y)) best = k;
  }
  std::rotate(o.points.begin(), o.points.begin() + static_cast<long>(best), o.points.end());
}

bool same_orbit(const PeriodicOrbit& a, const PeriodicOrbit& b) {
  if (a.period != b.period) return false;
  return hausdorff_points(a.points, b.points) < 1e-6;
}

}  // namespace

std::vector<PeriodicOrbit> enumerate_periodic(const MapParams& p, int max_period,
                                              const GridSpec& grid, int threads) {
  if (max_period < 1 || max_period > 20) throw Error("max_period must be in [1, 20]");
  GridSpec g = grid;
  if (g.rect.width() <= 0.0 || g.rect.height() <= 0.0) {
    double yb = 1.35 * p.sqrt_b;
    g.rect = {-1.35, 1.35, -yb, yb};
  }

  struct Job {
    Point seed;
    int period;
    bool symbolic;
    unsigned word;
  };
  std::vector<Job> jobs;
  for (int period = 1; period <= max_period; ++period) {
    for (int i = 0; i < g.nx; ++i) {
      for (int j = 0; j < g.ny; ++j) {
        double x = g.rect.xmin + (i + 0.5) * g.rect.width() / g.nx;
        double y = g.rect.ymin + (j + 0.5) * g.rect.height() / g.ny;
        jobs.push_back({{x, y}, period, false, 0});
      }
    }
  }
  // symbolic seeds: every binary word up to rotation appears anyway, so take all
  if (p.variant == Variant::standard_henon) {
    for (int period = 1; period <= std::min(max_period, 12); ++period) {
      for (unsigned w = 0; w < (1u << period); ++w) {
        jobs.push_back({{0, 0}, period, true, w});
      }
    }
  }

  std::vector<std::optional<PeriodicOrbit>> found(jobs.size());
  Rect keep = g.rect.inflated(0.5 * std::max(g.rect.width(), g.rect.height()));
  parallel_for(jobs.size(), threads, [&](size_t i) {
    const Job& jb = jobs[i];
    try {
      std::optional<PeriodicOrbit> o;
      if (jb.symbolic) {
        auto s = word_cycle_1d(p.a, jb.word, jb.period);
        if (s) o = continue_from_1d(p, *s);
      } else {
        o = newton_periodic(p, jb.seed, jb.period);
      }
      if (!o) return;
      for (auto& pt : o->points)
        if (!keep.contains(pt)) return;
      found[i] = std::move(o);
    } catch (const Error&) {
      // failed seeds are expected; they are simply skipped
    }
  });

  std::vector<PeriodicOrbit> out;
  for (auto& cand : found) {
    if (!cand) continue;
    canonicalize(*cand);
    bool dup = false;
    for (auto& acc : out)
      if (same_orbit(acc, *cand)) { dup = true; break; }
    if (!dup) out.push_back(std::move(*cand));
  }
  std::sort(out.begin(), out.end(), [](const PeriodicOrbit& a, const PeriodicOrbit& b) {
    if (a.period != b.period) return a.period < b.period;
    if (a.points[0].x != b.points[0].x) return a.points[0].x < b.points[0].x;
    return a.points[0].y < b.points[0].y;
  });
  return out;
}

}  // namespace hbl
