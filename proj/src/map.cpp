#include "hbl/map.hpp"

#include <cmath>

namespace hbl {

MapParams MapParams::make(double a, double b, int orientation, Variant variant,
                          std::shared_ptr<const CustomPhi> phi) {
  if (!(b > 0.0)) throw Error("b must be positive");
  if (!(b < 1.0)) throw Error("b must be well below 1");
  if (orientation != +1 && orientation != -1) throw Error("orientation must be +1 or -1");
  if (!std::isfinite(a)) throw Error("non-finite parameter a");
  if (variant == Variant::custom_phi && (!phi || !phi->value))
    throw Error("custom_phi requires a perturbation handle");
  MapParams p;
  p.a = a;
  p.b = b;
  p.orientation = orientation;
  p.variant = variant;
  p.phi = std::move(phi);
  p.sqrt_b = std::sqrt(b);
  return p;
}

Point apply(const MapParams& p, Point z) {
  if (!z.finite()) throw Error("non-finite point");
  if (p.variant == Variant::standard_henon) {
    return {1.0 - p.a * z.x * z.x - p.sqrt_b * z.y, p.orientation * p.sqrt_b * z.x};
  }
  Vec2 phi = p.phi->value(p.a, p.b, z.x, z.y);
  return {1.0 - p.a * z.x * z.x + p.b * phi.x, p.b * phi.y};
}

Point apply_inverse(const MapParams& p, Point z) {
  if (!z.finite()) throw Error("non-finite point");
  if (p.variant == Variant::custom_phi) {
    if (p.phi && p.phi->inverse) return p.phi->inverse(p.a, p.b, z);
    throw Error("inverse unavailable");
  }
  if (!(p.b > 0.0)) throw Error("non-invertible");
  double x = z.y / (p.orientation * p.sqrt_b);
  double y = (1.0 - p.a * x * x - z.x) / p.sqrt_b;
  return {x, y};
}

Mat2 jacobian(const MapParams& p, Point z) {
  if (p.variant == Variant::standard_henon) {
    return {-2.0 * p.a * z.x, -p.sqrt_b, p.orientation * p.sqrt_b, 0.0};
  }
  Mat2 dphi;
  if (p.phi->jac) {
    dphi = p.phi->jac(p.a, p.b, z.x, z.y);
  } else {
    const double h = 1e-7;
    Vec2 fx1 = p.phi->value(p.a, p.b, z.x + h, z.y);
    Vec2 fx0 = p.phi->value(p.a, p.b, z.x - h, z.y);
    Vec2 fy1 = p.phi->value(p.a, p.b, z.x, z.y + h);
    Vec2 fy0 = p.phi->value(p.a, p.b, z.x, z.y - h);
    dphi = {(fx1.x - fx0.x) / (2 * h), (fy1.x - fy0.x) / (2 * h),
            (fx1.y - fx0.y) / (2 * h), (fy1.y - fy0.y) / (2 * h)};
  }
  return {-2.0 * p.a * z.x + p.b * dphi.a, p.b * dphi.b,
          p.b * dphi.c, p.b * dphi.d};
}

OrbitSegment iterate(const MapParams& p, Point z, int n, const Rect& rect) {
  if (n < 0) throw Error("negative iteration count");
  OrbitSegment seg;
  seg.start = z;
  seg.points.reserve(static_cast<size_t>(n) + 1);
  seg.points.push_back(z);
  if (!rect.contains(z)) seg.escaped_at = 0;
  for (int k = 1; k <= n; ++k) {
    if (seg.escaped_at) break;
    Point w = apply(p, seg.points.back());
    if (!w.finite() || !rect.contains(w)) {
      seg.points.push_back(w);
      seg.escaped_at = k;
      break;
    }
    seg.points.push_back(w);
  }
  return seg;
}

namespace {
constexpr int kRenormEvery = 32;
}

Cocycle cocycle(const MapParams& p, Point z, int n, const Rect& rect) {
  if (n < 1) throw Error("cocycle needs n >= 1");
  Cocycle c;
  c.m = Mat2::identity();
  c.log_scale = 0.0;
  Vec2 w{1.0, 0.0};
  double wlog = 0.0;
  Point cur = apply(p, z);  // chain starts at f(z)
  for (int j = 1; j <= n - 1; ++j) {
    if (!cur.finite() || !rect.contains(cur))
      throw EscapeError("orbit escaped during cocycle", j);
    Mat2 J = jacobian(p, cur);
    c.m = J * c.m;
    w = J * w;
    if (j % kRenormEvery == 0) {
      double s = c.m.max_abs();
      if (s > 0.0) { c.m = c.m * (1.0 / s); c.log_scale += std::log(s); }
      double wn = w.norm();
      if (wn > 0.0) { w = w / wn; wlog += std::log(wn); }
    }
    cur = apply(p, cur);
  }
  double wn = w.norm();
  c.w_dir = (wn > 0.0) ? w / wn : Vec2{1.0, 0.0};
  c.w_log_norm = wlog + std::log(wn);
  c.n = n;
  return c;
}

PushForward push_forward(const MapParams& p, Point z, Vec2 v, int n, const Rect& rect) {
  if (n < 0) throw Error("negative iteration count");
  double lg = std::log(v.norm());
  Vec2 w = v.normalized();
  Point cur = z;
  for (int j = 0; j < n; ++j) {
    if (!cur.finite() || !rect.contains(cur))
      throw EscapeError("orbit escaped during push_forward", j);
    w = jacobian(p, cur) * w;
    double wn = w.norm();
    w = w / wn;
    lg += std::log(wn);
    cur = apply(p, cur);
  }
  return {w, lg};
}

}  // namespace hbl
