#include "hbl/critical.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace hbl {

bool AnalysisConstants::valid() const {
  return alpha > 0.0 && alpha < lambda && lambda < lambda_hat &&
         lambda_hat < std::log(2.0) && delta > 0.0 && delta < 1.0 &&
         kappa0 > 0.0 && kappa0 < 1.0;
}

AnalysisConstants AnalysisConstants::make(const MapParams& p, double delta) {
  AnalysisConstants k;
  k.delta = delta;
  // sampled sup of the partial derivative magnitudes of both components in
  // (a, x, y) over the working rectangle and the admissible a interval
  double sup = 0.0;
  for (int ia = 0; ia <= 10; ++ia) {
    double a = 1.5 + 0.1 * ia;
    for (int ix = 0; ix <= 24; ++ix) {
      double x = -3.0 + 0.25 * ix;
      double c = std::max({2.0 * a * std::abs(x), x * x, 2.0 * a,
                           2.0 * std::abs(x), p.sqrt_b});
      sup = std::max(sup, c);
    }
  }
  if (p.phi) sup += p.phi->sup_norm + p.phi->c1_bound;
  k.C0 = std::max(5.0, 1.1 * sup);
  k.kappa0 = std::pow(k.C0, -10.0);
  return k;
}

Rect critical_domain(const MapParams& p) {
  double h = 1.5 * p.sqrt_b;
  return Rect{-1.1, 1.1, -h, h};
}

bool in_critical_region(const MapParams& p, const AnalysisConstants& k,
                        Point z) {
  return critical_domain(p).contains(z) && std::abs(z.x) < k.delta;
}

CurveClassVerdict classify_curve(std::span<const Point> poly, double b) {
  if (poly.size() < 3) throw Error("classify_curve needs at least 3 vertices");
  CurveClassVerdict v;
  double sb = std::sqrt(b);
  for (size_t i = 0; i + 1 < poly.size(); ++i)
    v.max_slope = std::max(v.max_slope, slope(poly[i + 1] - poly[i]));
  for (size_t i = 0; i + 2 < poly.size(); ++i) {
    Vec2 u = poly[i + 1] - poly[i], w = poly[i + 2] - poly[i + 1];
    double c = dist(poly[i], poly[i + 2]);
    double den = u.norm() * w.norm() * c;
    if (den == 0.0) continue;  // repeated vertex carries no curvature
    v.max_curvature = std::max(v.max_curvature,
                               2.0 * std::abs(cross(u, u + w)) / den);
  }
  v.is_C2b = v.max_slope <= sb && v.max_curvature <= sb;
  v.is_h_curve = v.max_slope <= sb && v.max_curvature <= 1.0;
  return v;
}

OutsideExpansionReport check_outside_expansion(const MapParams& p,
                                               const AnalysisConstants& k,
                                               Point z, int n) {
  if (n < 1) throw Error("expansion check needs n >= 1");
  OrbitSegment seg = iterate(p, z, n);
  if (seg.escaped_at && *seg.escaped_at <= n)
    throw Error("expansion check: orbit leaves the working rectangle at step " +
                std::to_string(*seg.escaped_at));
  Rect dom = critical_domain(p);
  for (int j = 0; j < n; ++j) {
    if (!dom.contains(seg.points[j]))
      throw Error("expansion check: orbit leaves the domain at step " +
                  std::to_string(j));
    if (std::abs(seg.points[j].x) < k.delta)
      throw Error("expansion check: orbit enters the critical strip at step " +
                  std::to_string(j));
  }

  OutsideExpansionReport r;
  r.n = n;
  r.required = k.delta * std::exp(k.lambda_hat * n);
  r.required_inside = std::exp(k.lambda_hat * n);
  r.ends_inside = in_critical_region(p, k, seg.points[n]);
  r.min_growth = std::numeric_limits<double>::infinity();
  const int m = 64;
  for (int i = 0; i <= m; ++i) {
    double s = p.sqrt_b * (2.0 * i / m - 1.0);
    Vec2 v = Vec2{1.0, s}.normalized();
    PushForward pf = push_forward(p, z, v, n);
    r.min_growth = std::min(r.min_growth, std::exp(pf.log_norm));
    r.worst_slope = std::max(r.worst_slope, slope(pf.dir));
  }
  r.slope_ok = r.worst_slope <= p.sqrt_b;
  double need = r.ends_inside ? r.required_inside : r.required;
  r.pass = r.slope_ok && r.min_growth >= need;
  return r;
}

namespace {

Vec2 tangent_on(std::span<const Point> poly, double s, double len) {
  double h = std::max(len / 512.0, 1e-300);
  Point a = polyline_at(poly, s - h), b = polyline_at(poly, s + h);
  Vec2 d = b - a;
  if (d.norm2() == 0.0) throw Error("degenerate arc tangent");
  return d.normalized();
}

double golden_min(const std::function<double(double)>& f, double lo, double hi,
                  int iters) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 <= f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - r * (hi - lo); f1 = f(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + r * (hi - lo); f2 = f(x2);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

CriticalPointApprox find_critical_point(const MapParams& p,
                                        const AnalysisConstants& k,
                                        std::span<const Point> segment,
                                        int order, size_t segment_id) {
  if (order < 1) throw Error("critical point order must be positive");
  if (!classify_curve(segment, p.b).is_C2b)
    throw Error("critical point search needs a flat arc");
  for (const Point& q : segment)
    if (!in_critical_region(p, k, q))
      throw Error("search arc leaves the critical strip");

  double len = polyline_length(segment);
  auto g = [&](double s) {
    return push_forward(p, polyline_at(segment, s), tangent_on(segment, s, len),
                        order)
        .log_norm;
  };

  const int m = 128;
  std::vector<double> gs(m + 1);
  for (int j = 0; j <= m; ++j) gs[j] = g(len * j / m);

  // interior minima with a prominence floor, so flat-tail noise does not
  // masquerade as a second root
  int found = -1;
  for (int j = 1; j < m; ++j) {
    if (!(gs[j] < gs[j - 1] && gs[j] <= gs[j + 1])) continue;
    double up = 0.0;
    for (int l = j - 1; l >= 0 && gs[l] >= gs[l + 1]; --l)
      up = std::max(up, gs[l] - gs[j]);
    double dn = 0.0;
    for (int l = j + 1; l <= m && gs[l] >= gs[l - 1]; ++l)
      dn = std::max(dn, gs[l] - gs[j]);
    if (std::min(up, dn) < 1e-9) continue;
    if (found >= 0) throw Error("uniqueness violated");
    found = j;
  }
  if (found < 0) throw Error("no critical point on segment");

  double lo = len * (found - 1) / m, hi = len * (found + 1) / m;
  double s_star = golden_min(g, lo, hi, 80);

  CriticalPointApprox c;
  c.order = order;
  c.segment_id = segment_id;
  c.location = polyline_at(segment, s_star);
  c.tangent = tangent_on(segment, s_star, len);

  Point fz = apply(p, c.location);
  Vec2 u = (jacobian(p, c.location) * c.tangent).normalized();
  // both readings of the growth condition are recorded. The image tangent
  // is the contracted direction of the forward derivative, so the tangent
  // reading fails at a genuine fold while the matrix reading grows; the
  // verdict reports the tangent reading and gates nothing
  c.expansion_ok = true;
  Mat2 acc = Mat2::identity();
  Point w = fz;
  for (int j = 1; j <= order; ++j) {
    c.expansion_tangent.push_back(std::exp(push_forward(p, fz, u, j).log_norm));
    acc = jacobian(p, w) * acc;
    w = apply(p, w);
    c.expansion_matrix.push_back(acc.op_norm());
    if (c.expansion_tangent.back() < 1.0) c.expansion_ok = false;
  }

  // at a genuine fold the image tangent lines up with the most contracted
  // direction of the one-step derivative at the image point
  Mat2 M = jacobian(p, fz);
  Mat2 MtM{M.a * M.a + M.c * M.c, M.a * M.b + M.c * M.d,
           M.a * M.b + M.c * M.d, M.b * M.b + M.d * M.d};
  c.alignment_residual = line_angle(u, eigen2(MtM).v2);
  return c;
}

long bound_period(const MapParams& p, const AnalysisConstants& k, Point x,
                  Vec2 t, long cap) {
  if (!in_critical_region(p, k, x))
    throw Error("bound period needs a critical-strip start");
  if (t.norm2() == 0.0) throw Error("bound period needs a direction");
  Vec2 v = t.normalized();
  Point z = x;
  double acc = 0.0;
  for (long pp = 1; pp <= cap; ++pp) {
    v = jacobian(p, z) * v;
    double nn = v.norm();
    acc += std::log(nn);
    v = v / nn;
    z = apply(p, z);
    if (!kWorkingRect.contains(z)) throw Error("unbounded bound period");
    if (acc >= k.lambda / 3.0 * pp && slope(v) <= p.sqrt_b) return pp;
  }
  throw Error("bound period cap hit");
}

namespace {

// vertical offset of z from the arc, read at the x of z; arcs are graphs
// over x since their slopes stay below sqrt(b)
std::optional<double> arc_vdist(const std::vector<Point>& arc, Point z) {
  for (size_t i = 0; i + 1 < arc.size(); ++i) {
    double x0 = arc[i].x, x1 = arc[i + 1].x;
    if ((z.x - x0) * (z.x - x1) > 0.0) continue;
    double t = (x1 == x0) ? 0.0 : (z.x - x0) / (x1 - x0);
    return std::abs(z.y - (arc[i].y + t * (arc[i + 1].y - arc[i].y)));
  }
  return std::nullopt;
}

}  // namespace

const CriticalCache::Entry* CriticalCache::deepest_near(Point z, double b,
                                                        int k_hi) const {
  for (int k = std::min(k_hi, max_order); k >= 1; --k) {
    const Entry* best = nullptr;
    double best_dx = 0.0;
    for (const Entry& e : points) {
      if (e.order != k) continue;
      auto vd = arc_vdist(arcs[e.arc], z);
      if (!vd || *vd > 10.0 * std::pow(b, 0.5 * k)) continue;
      double dx = std::abs(e.zeta.x - z.x);
      if (!best || dx < best_dx) { best = &e; best_dx = dx; }
    }
    if (best) return best;
  }
  return nullptr;
}

CriticalCache build_critical_cache(const MapParams& p,
                                   const AnalysisConstants& k,
                                   const ManifoldCurve& wu, int max_order) {
  CriticalCache cache;
  cache.consts = k;
  cache.max_order = max_order;

  // maximal connected polyline runs inside the critical strip, endpoints
  // interpolated onto the strip boundary
  const auto& P = wu.polyline;
  double edge = k.delta * (1.0 - 1e-9);
  auto inside = [&](Point q) { return in_critical_region(p, k, q); };
  auto clip_to_edge = [&](Point out, Point in) {
    if (std::abs(out.x) <= edge) return out;
    double xb = out.x > 0.0 ? edge : -edge;
    double t = (xb - out.x) / (in.x - out.x);
    return out + t * (in - out);
  };
  std::vector<Point> run;
  auto flush = [&]() {
    if (run.size() >= 5 && polyline_length(run) >= 0.5 * k.delta) {
      try {
        if (classify_curve(run, p.b).is_C2b) cache.arcs.push_back(run);
      } catch (const Error&) {
      }
    }
    run.clear();
  };
  for (size_t i = 0; i < P.size(); ++i) {
    if (i > 0 && wu.chain_start[i]) flush();
    if (inside(P[i])) {
      if (run.empty() && i > 0 && !wu.chain_start[i] && !inside(P[i - 1]))
        run.push_back(clip_to_edge(P[i - 1], P[i]));
      run.push_back(P[i]);
    } else {
      if (!run.empty()) {
        run.push_back(clip_to_edge(P[i], run.back()));
        flush();
      }
    }
  }
  flush();

  for (size_t a = 0; a < cache.arcs.size(); ++a) {
    const std::vector<Point>& arc = cache.arcs[a];
    size_t prev_seg = 0;
    bool have_prev = false;
    for (int n = 1; n <= max_order; ++n) {
      std::span<const Point> seg(arc);
      if (have_prev) {
        // deeper images fold the arc again away from the critical point,
        // creating minima of their own. The order n point sits within
        // O(b^{n/2}) of the order n-1 point, so search only a window
        // around the previous hit
        double r = std::max(10.0 * std::pow(p.b, 0.5 * n),
                            5.0 * polyline_length(arc) / double(arc.size()));
        size_t i0 = prev_seg, i1 = prev_seg + 1;
        for (double s = 0.0; i0 > 0 && s < r; --i0)
          s += dist(arc[i0 - 1], arc[i0]);
        for (double s = 0.0; i1 + 1 < arc.size() && s < r; ++i1)
          s += dist(arc[i1], arc[i1 + 1]);
        seg = std::span<const Point>(arc.data() + i0, i1 - i0 + 1);
      }
      try {
        // membership is decided by the root search alone; the expansion
        // verdicts are recorded data, not a gate
        CriticalPointApprox c = find_critical_point(p, k, seg, n, a);
        cache.points.push_back({n, c.location, c.tangent, a});
        prev_seg = polyline_closest(arc, c.location).seg;
        have_prev = true;
      } catch (const Error&) {
        break;
      }
    }
  }
  std::sort(cache.points.begin(), cache.points.end(),
            [](const CriticalCache::Entry& l, const CriticalCache::Entry& r) {
              return l.order != r.order ? l.order < r.order : l.arc < r.arc;
            });
  return cache;
}

BoundFreeDecomposition decompose_orbit(const MapParams& p,
                                       const AnalysisConstants& k,
                                       const CriticalCache& cache, Point x,
                                       long horizon) {
  BoundFreeDecomposition d;
  d.x0 = x;
  d.horizon = horizon;
  d.controlled_up_to = horizon;

  Point z = x, prev = x;
  Vec2 v{1.0, 0.0};
  long last_reset = in_critical_region(p, k, x) ? 0 : -1;
  long bound_until = 1;
  long first_close = -1;

  for (long n = 1; n <= horizon; ++n) {
    prev = z;
    z = apply(p, z);
    if (!kWorkingRect.contains(z))
      throw Error("decomposition needs a bounded orbit");
    if (n > 1) v = (jacobian(p, prev) * v).normalized();

    if (!in_critical_region(p, k, z)) continue;
    if (last_reset < 0) last_reset = n;

    if (n > last_reset) {
      long m = n - last_reset;
      int k_req = static_cast<int>(std::min<long>(m, cache.max_order));
      const auto* e = cache.deepest_near(z, p.b, k_req);
      if (e && e->order == k_req &&
          std::abs(z.x - e->zeta.x) < std::pow(k.delta, 0.5 * m)) {
        d.close_returns.push_back(m);
        if (first_close < 0) first_close = n;
        last_reset = n;
      }
    }

    if (n < bound_until) continue;
    int k_hi = static_cast<int>(std::min<long>(n, cache.max_order));
    const auto* e = cache.deepest_near(z, p.b, k_hi);
    int ki = e ? e->order : 0;
    if (!e) {
      for (const auto& entry : cache.points)
        if (entry.order == 1) { e = &entry; break; }
      if (!e) throw Error("pairing failed: no critical points available");
    }
    double dx = std::abs(z.x - e->zeta.x), dy = std::abs(z.y - e->zeta.y);
    if (dy > 3.0 * p.sqrt_b * dx + std::pow(p.b, 0.5 * std::max(ki, 1)))
      throw Error("pairing failed: return sits outside the tangent cone");
    long pi = bound_period(p, k, z, n == 1 ? Vec2{1.0, 0.0} : v);
    d.returns.push_back({n, ki, pi});
    bound_until = n + pi;
  }

  if (first_close >= 0) {
    d.controlled_up_to = first_close;
    d.verdict = BoundFreeDecomposition::Verdict::close_return;
  }
  return d;
}

SegmentLemmaReport check_segment_lemma(const MapParams& p,
                                       const AnalysisConstants& k,
                                       std::span<const Point> ell, long nu,
                                       long n) {
  if (nu < 1) throw Error("segment lemma needs nu >= 1");
  if (n < 1 || n >= 2 * nu)
    throw Error("segment lemma window needs 1 <= n < 2 nu");
  if (ell.empty()) throw Error("segment lemma needs a curve");

  SegmentLemmaReport r;
  r.nu = nu;
  r.n = n;
  r.initial_length = polyline_length(ell);
  r.bound = std::pow(k.delta, nu / 3.0);
  if (r.initial_length > 2.0 * std::pow(k.delta, 0.5 * nu))
    throw Error("segment too long for its depth");

  Rect dom = critical_domain(p);
  std::vector<Point> src(ell.begin(), ell.end());
  std::vector<double> S(src.size());
  for (size_t i = 1; i < src.size(); ++i)
    S[i] = S[i - 1] + dist(src[i - 1], src[i]);

  auto deep = [&](double s, long j) {
    Point q = polyline_at(src, s);
    for (long l = 0; l < j; ++l) q = apply(p, q);
    return q;
  };

  std::vector<Point> img(src);
  r.stayed_inside = true;
  double cap = std::max(r.bound / 50.0, 1e-6);
  for (long j = 1; j <= n; ++j) {
    for (auto& q : img) {
      q = apply(p, q);
      if (!q.finite() || std::abs(q.x) > 20.0 || std::abs(q.y) > 20.0)
        throw Error("segment escapes under iteration");
      if (!dom.contains(q)) r.stayed_inside = false;
    }
    for (size_t i = 0; i + 1 < img.size();) {
      if (dist(img[i], img[i + 1]) > cap && S[i + 1] - S[i] > 1e-12) {
        double sm = 0.5 * (S[i] + S[i + 1]);
        Point q = deep(sm, j);
        if (!q.finite()) throw Error("segment escapes under iteration");
        if (!dom.contains(q)) r.stayed_inside = false;
        S.insert(S.begin() + i + 1, sm);
        img.insert(img.begin() + i + 1, q);
      } else {
        ++i;
      }
    }
  }

  bool meets = false;
  for (const Point& q : img)
    if (in_critical_region(p, k, q)) meets = true;
  if (!meets) throw Error("segment image misses the critical strip");

  r.final_length = polyline_length(img);
  r.pass = r.stayed_inside && r.final_length <= r.bound;
  return r;
}

}  // namespace hbl
