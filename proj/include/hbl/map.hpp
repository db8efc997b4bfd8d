#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hbl/geometry.hpp"

namespace hbl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EscapeError : Error {
  int index;  // first step at which the orbit left the working rectangle
  EscapeError(const std::string& what, int idx) : Error(what), index(idx) {}
};

enum class Variant { standard_henon, custom_phi };

// Bounded perturbation supplied by the caller. value gives (u,v), jac its
// derivative in (x,y); when jac is absent a central difference is used.
// inverse (full-map inverse) is optional; without it backward operations error.
struct CustomPhi {
  std::function<Vec2(double a, double b, double x, double y)> value;
  std::function<Mat2(double a, double b, double x, double y)> jac;
  std::function<Point(double a, double b, Point z)> inverse;
  double sup_norm = 0.0;  // caller-declared ||Phi||_inf on the working rectangle
  double c1_bound = 0.0;  // caller-declared C^1 bound
};

struct MapParams {
  double a = 2.0;
  double b = 1e-3;
  int orientation = +1;  // sign of det Df
  Variant variant = Variant::standard_henon;
  std::shared_ptr<const CustomPhi> phi;

  double sqrt_b = 0.0;  // cached

  static MapParams make(double a, double b, int orientation = +1,
                        Variant variant = Variant::standard_henon,
                        std::shared_ptr<const CustomPhi> phi = nullptr);
};

struct TangentVec {
  Vec2 v;
  Point base;
};

inline double slope(const TangentVec& t) {
  if (t.v.x == 0.0 && t.v.y == 0.0) throw Error("slope of zero vector");
  return slope(t.v);
}

struct OrbitSegment {
  Point start;
  std::vector<Point> points;          // points[0] = start, points[k] = f^k(start)
  std::optional<int> escaped_at;      // first k with points[k] outside the rectangle
};

Point apply(const MapParams& p, Point z);
Point apply_inverse(const MapParams& p, Point z);
Mat2 jacobian(const MapParams& p, Point z);

OrbitSegment iterate(const MapParams& p, Point z, int n, const Rect& working_rect = kWorkingRect);

// w_n(z) = D_{fz} f^{n-1} (1,0): the derivative chain starts at f(z) and has
// n-1 factors, so n=1 is the empty product.
struct Cocycle {
  Mat2 m;             // renormalized accumulated matrix, scale split off below
  double log_scale;   // D_{fz}f^{n-1} = exp(log_scale) * m
  Vec2 w_dir;         // unit vector along w_n
  double w_log_norm;  // log ||w_n||
  int n;
};

Cocycle cocycle(const MapParams& p, Point z, int n, const Rect& working_rect = kWorkingRect);

// log ||D_z f^n v|| with renormalized accumulation; also reports the final
// direction. Escape handling matches cocycle.
struct PushForward {
  Vec2 dir;
  double log_norm;
};
PushForward push_forward(const MapParams& p, Point z, Vec2 v, int n,
                         const Rect& working_rect = kWorkingRect);

}  // namespace hbl
