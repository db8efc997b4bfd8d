#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace hbl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double c) const { return {c * x, c * y}; }
  Vec2 operator/(double c) const { return {x / c, y / c}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }

  double norm() const { return std::hypot(x, y); }
  double norm2() const { return x * x + y * y; }
  Vec2 normalized() const { double n = norm(); return {x / n, y / n}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

using Point = Vec2;

inline Vec2 operator*(double c, Vec2 v) { return {c * v.x, c * v.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dist(Point a, Point b) { return (a - b).norm(); }

// slope of a tangent vector as |dy/dx|; vertical vectors get +inf
inline double slope(Vec2 v) {
  if (v.x == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(v.y / v.x);
}

// unsigned angle between lines spanned by a and b, in [0, pi/2]
inline double line_angle(Vec2 a, Vec2 b) {
  double c = std::abs(dot(a, b));
  double s = std::abs(cross(a, b));
  return std::atan2(s, c);
}

struct Mat2 {
  // row-major: [a b; c d]
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

  double det() const { return a * d - b * c; }
  double trace() const { return a + d; }

  Vec2 operator*(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  Mat2 operator*(const Mat2& m) const {
    return {a * m.a + b * m.c, a * m.b + b * m.d,
            c * m.a + d * m.c, c * m.b + d * m.d};
  }
  Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }

  double max_abs() const {
    return std::max(std::max(std::abs(a), std::abs(b)),
                    std::max(std::abs(c), std::abs(d)));
  }

  // spectral norm, exact for 2x2 via singular values
  double op_norm() const {
    double f = a * a + b * b + c * c + d * d;
    double dt = det();
    double disc = std::sqrt(std::max(0.0, f * f - 4.0 * dt * dt));
    return std::sqrt(0.5 * (f + disc));
  }
};

struct Eigen2 {
  std::complex<double> lam1, lam2;  // |lam1| >= |lam2|
  bool real = false;
  Vec2 v1, v2;  // unit eigenvectors, valid only when real
};

inline Eigen2 eigen2(const Mat2& m) {
  Eigen2 e;
  double tr = m.trace(), dt = m.det();
  double disc = tr * tr - 4.0 * dt;
  if (disc >= 0.0) {
    double s = std::sqrt(disc);
    // stable quadratic roots
    double l1 = (tr >= 0.0) ? 0.5 * (tr + s) : 2.0 * dt / (tr - s);
    double l2 = (tr >= 0.0) ? 2.0 * dt / (tr + s) : 0.5 * (tr - s);
    if (tr == 0.0) { l1 = 0.5 * s; l2 = -0.5 * s; }
    if (std::abs(l1) < std::abs(l2)) std::swap(l1, l2);
    e.lam1 = l1;
    e.lam2 = l2;
    e.real = true;
    auto evec = [&](double lam) -> Vec2 {
      // pick the better-conditioned row of (m - lam I)
      Vec2 r1{m.a - lam, m.b}, r2{m.c, m.d - lam};
      Vec2 r = (r1.norm2() >= r2.norm2()) ? r1 : r2;
      if (r.norm2() == 0.0) return {1.0, 0.0};
      return Vec2{-r.y, r.x}.normalized();
    };
    e.v1 = evec(l1);
    e.v2 = evec(l2);
  } else {
    double s = std::sqrt(-disc);
    e.lam1 = {0.5 * tr, 0.5 * s};
    e.lam2 = {0.5 * tr, -0.5 * s};
    e.real = false;
  }
  return e;
}

struct Rect {
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;

  bool contains(Point p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  Rect inflated(double m) const { return {xmin - m, xmax + m, ymin - m, ymax + m}; }
  bool intersects(const Rect& o) const {
    return xmin <= o.xmax && o.xmin <= xmax && ymin <= o.ymax && o.ymin <= ymax;
  }
};

// default working rectangle for boundedness tests
inline constexpr Rect kWorkingRect{-3.0, 3.0, -1.0, 1.0};

struct SegmentHit {
  bool hit = false;
  Point p;
  double t1 = 0.0, t2 = 0.0;  // params on [a1,b1] and [a2,b2]
  bool degenerate = false;    // near-parallel overlap
};

inline SegmentHit segment_intersect(Point a1, Point b1, Point a2, Point b2) {
  SegmentHit h;
  Vec2 d1 = b1 - a1, d2 = b2 - a2, r = a2 - a1;
  double den = cross(d1, d2);
  double scale = std::max(d1.norm() * d2.norm(), 1e-300);
  if (std::abs(den) < 1e-14 * scale) {
    // parallel: report overlap midpoint if collinear and overlapping
    if (std::abs(cross(r, d1)) < 1e-12 * std::max(r.norm() * d1.norm(), 1e-300)) {
      double len2 = d1.norm2();
      if (len2 == 0.0) return h;
      double ta = dot(r, d1) / len2;
      double tb = dot(a2 + d2 - a1, d1) / len2;
      double lo = std::max(0.0, std::min(ta, tb));
      double hi = std::min(1.0, std::max(ta, tb));
      if (lo <= hi) {
        h.hit = true;
        h.degenerate = true;
        h.t1 = 0.5 * (lo + hi);
        h.p = a1 + h.t1 * d1;
      }
    }
    return h;
  }
  double t1 = cross(r, d2) / den;
  double t2 = cross(r, d1) / den;
  if (t1 < 0.0 || t1 > 1.0 || t2 < 0.0 || t2 > 1.0) return h;
  h.hit = true;
  h.t1 = t1;
  h.t2 = t2;
  h.p = a1 + t1 * d1;
  return h;
}

inline double polyline_length(std::span<const Point> pts) {
  double s = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) s += dist(pts[i - 1], pts[i]);
  return s;
}

// point at cumulative arclength s along the polyline (clamped)
inline Point polyline_at(std::span<const Point> pts, double s) {
  if (pts.empty()) return {};
  if (s <= 0.0) return pts[0];
  for (size_t i = 1; i < pts.size(); ++i) {
    double el = dist(pts[i - 1], pts[i]);
    if (s <= el) {
      double t = (el == 0.0) ? 0.0 : s / el;
      return pts[i - 1] + t * (pts[i] - pts[i - 1]);
    }
    s -= el;
  }
  return pts.back();
}

struct ClosestPt {
  double d = std::numeric_limits<double>::infinity();
  Point p;          // the closest point on the polyline
  size_t seg = 0;   // segment index
  double t = 0.0;   // param on that segment
};

inline ClosestPt polyline_closest(std::span<const Point> pts, Point q) {
  ClosestPt best;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    Vec2 d = pts[i + 1] - pts[i];
    double len2 = d.norm2();
    double t = (len2 == 0.0) ? 0.0 : std::clamp(dot(q - pts[i], d) / len2, 0.0, 1.0);
    Point p = pts[i] + t * d;
    double dd = dist(p, q);
    if (dd < best.d) { best.d = dd; best.p = p; best.seg = i; best.t = t; }
  }
  return best;
}

// directed Hausdorff-style distance between finite point sets (max over a of min over b)
inline double hausdorff_points(std::span<const Point> a, std::span<const Point> b) {
  double worst = 0.0;
  for (auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (auto& q : b) best = std::min(best, dist(p, q));
    worst = std::max(worst, best);
  }
  for (auto& q : b) {
    double best = std::numeric_limits<double>::infinity();
    for (auto& p : a) best = std::min(best, dist(p, q));
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace hbl
