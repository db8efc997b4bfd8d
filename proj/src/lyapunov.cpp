#include "hbl/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hbl {

namespace {

constexpr int kAlignWarmup = 4;
constexpr long kHistoryStride = 1000;

struct Frame {
  Vec2 q1, q2;
};

// one QR step: push the frame through D, return the two log stretches
std::pair<double, double> qr_step(const Mat2& d, Frame& f) {
  Vec2 a1 = d * f.q1;
  Vec2 a2 = d * f.q2;
  double r11 = a1.norm();
  if (r11 == 0.0 || !std::isfinite(r11)) throw Error("degenerate frame");
  f.q1 = a1 * (1.0 / r11);
  double r12 = f.q1.x * a2.x + f.q1.y * a2.y;
  Vec2 v{a2.x - r12 * f.q1.x, a2.y - r12 * f.q1.y};
  double r22 = v.norm();
  if (r22 == 0.0 || !std::isfinite(r22)) throw Error("degenerate frame");
  f.q2 = v * (1.0 / r22);
  return {std::log(r11), std::log(r22)};
}

}  // namespace

ExponentEstimate qr_exponents(const MapParams& p, Point z, long n, const Rect& rect) {
  if (n < 1) throw Error("n must be >= 1");
  if (!z.finite()) throw Error("non-finite start");
  Point w = z;
  Frame f{{1.0, 0.0}, {0.0, 1.0}};
  long step = 0;  // steps taken from z, warmup included
  auto advance = [&]() {
    if (!rect.contains(w)) throw EscapeError("orbit left the working rectangle", static_cast<int>(step));
    qr_step(jacobian(p, w), f);
    w = apply(p, w);
    ++step;
    if (!w.finite()) throw EscapeError("orbit left the working rectangle", static_cast<int>(step));
  };

  for (int k = 0; k < kAlignWarmup; ++k) advance();

  ExponentEstimate est;
  est.short_run = n < 100;
  double s1 = 0.0, s2 = 0.0;
  for (long k = 0; k < n; ++k) {
    if (!rect.contains(w)) throw EscapeError("orbit left the working rectangle", static_cast<int>(step));
    auto [l1, l2] = qr_step(jacobian(p, w), f);
    s1 += l1;
    s2 += l2;
    w = apply(p, w);
    ++step;
    if (!w.finite()) throw EscapeError("orbit left the working rectangle", static_cast<int>(step));
    if ((k + 1) % kHistoryStride == 0)
      est.history.emplace_back(s2 / (k + 1), s1 / (k + 1));
  }
  est.n_steps = n;
  est.chi_u = s1 / n;
  est.chi_s = s2 / n;
  if (est.history.size() >= 2) {
    auto& a = est.history[est.history.size() - 2];
    auto& b = est.history.back();
    est.converged = std::abs(a.second - b.second) < 1e-7 && std::abs(a.first - b.first) < 1e-7;
  }
  return est;
}

ExponentEstimate qr_exponents_cycle(const MapParams& p, const PeriodicOrbit& o) {
  if (o.points.empty()) throw Error("empty orbit");
  int period = o.period;
  Frame f{{1.0, 0.0}, {0.0, 1.0}};
  ExponentEstimate est;
  double prev1 = 0.0, prev2 = 0.0;
  bool have_prev = false;
  constexpr int kMaxPeriods = 500;
  for (int rep = 0; rep < kMaxPeriods; ++rep) {
    double d1 = 0.0, d2 = 0.0;
    for (int k = 0; k < period; ++k) {
      auto [l1, l2] = qr_step(jacobian(p, o.points[static_cast<size_t>(k)]), f);
      d1 += l1;
      d2 += l2;
    }
    est.n_steps += period;
    est.chi_u = d1 / period;
    est.chi_s = d2 / period;
    est.history.emplace_back(est.chi_s, est.chi_u);
    if (have_prev && std::abs(d1 - prev1) < 1e-13 && std::abs(d2 - prev2) < 1e-13) {
      est.converged = true;
      return est;
    }
    prev1 = d1;
    prev2 = d2;
    have_prev = true;
  }
  return est;
}

UnstableDirection estimate_Eu(const MapParams& p, Point z, int depth, const Rect& rect) {
  if (depth < 2) throw Error("depth must be >= 2");
  if (!z.finite() || !rect.contains(z)) throw Error("not in bounded set");

  // deepest backward chain that stays inside rect; rounding grows along the
  // forward-stable direction under f^{-1}, so the usable depth is finite even
  // on an exactly invariant set, and pushing forward through a chain that has
  // drifted that way still lands on the same expanding line
  std::vector<Point> back;  // back[k] = k+1 steps before z
  Point w = z;
  while (static_cast<int>(back.size()) < depth) {
    Point prev;
    try {
      prev = apply_inverse(p, w);
    } catch (const Error&) {
      break;
    }
    if (!prev.finite() || !rect.contains(prev)) break;
    back.push_back(prev);
    w = prev;
  }
  int m_feas = static_cast<int>(back.size());
  if (m_feas < 2) throw Error("not in bounded set");

  auto dir_at = [&](int m, Vec2 v) {
    for (int k = m - 1; k >= 0; --k) {
      v = jacobian(p, back[static_cast<size_t>(k)]) * v;
      double nv = v.norm();
      if (nv == 0.0 || !std::isfinite(nv)) throw Error("degenerate pushforward");
      v = v * (1.0 / nv);
    }
    if (v.x < 0.0 || (v.x == 0.0 && v.y < 0.0)) v = v * -1.0;
    return v;
  };

  std::vector<int> depths;
  for (int m = 8; m < depth; m *= 2) depths.push_back(std::min(m, m_feas));
  depths.push_back(std::min(depth, m_feas));
  if (depths.front() >= m_feas) depths.insert(depths.begin(), m_feas - 1);
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());

  UnstableDirection out;
  out.base = z;
  Vec2 prev_dir{0.0, 0.0};
  bool have_prev = false;
  for (int m : depths) {
    Vec2 d = dir_at(m, {1.0, 0.0});
    out.direction = d;
    out.pullback_depth = m;
    if (have_prev) {
      out.residual = line_angle(prev_dir, d);
      if (out.residual < 1e-10) {
        out.converged = true;
        return out;
      }
    }
    prev_dir = d;
    have_prev = true;
  }
  return out;
}

ExponentAudit audit_exponent_bounds(const MapParams& p,
                                    const std::vector<PeriodicOrbit>& orbits) {
  ExponentAudit r;
  r.a = p.a;
  r.b = p.b;
  r.n_orbits = static_cast<int>(orbits.size());
  r.chi_u_floor = 0.25 * std::log(2.0);
  r.chi_s_ceiling = std::log(p.b) / 3.0;
  r.min_chi_u = std::numeric_limits<double>::infinity();
  r.max_chi_s = -std::numeric_limits<double>::infinity();
  r.note = "audits only the cycles it was given; a clean result bounds the sampled family, not every invariant set";
  for (const auto& o : orbits) {
    double chi_u = std::log(std::abs(o.mult1)) / o.period;
    double chi_s = std::log(std::abs(o.mult2)) / o.period;
    r.min_chi_u = std::min(r.min_chi_u, chi_u);
    r.max_chi_s = std::max(r.max_chi_s, chi_s);
    std::string reason;
    if (o.classification != OrbitClass::saddle)
      reason = std::string("non-saddle cycle (") + to_string(o.classification) + ")";
    if (!(chi_u > r.chi_u_floor))
      reason += reason.empty() ? "chi_u at or below floor" : "; chi_u at or below floor";
    if (!(chi_s < r.chi_s_ceiling))
      reason += reason.empty() ? "chi_s at or above ceiling" : "; chi_s at or above ceiling";
    if (!reason.empty()) {
      ExponentViolation v;
      v.period = o.period;
      v.representative = o.points[0];
      v.chi_s = chi_s;
      v.chi_u = chi_u;
      v.margin_u = chi_u - r.chi_u_floor;
      v.margin_s = r.chi_s_ceiling - chi_s;
      v.reason = reason;
      r.violations.push_back(std::move(v));
    }
  }
  return r;
}

}  // namespace hbl
