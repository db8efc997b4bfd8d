#include "hbl/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <span>

#include "hbl/rng.hpp"

namespace hbl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// undirected turn at the middle point, in [0, pi]; a hairpin reads as ~pi
double turn_angle(Point a, Point m, Point b) {
  Vec2 u = m - a, v = b - m;
  double c = cross(u, v), d = dot(u, v);
  if (c == 0.0 && d == 0.0) return 0.0;
  return std::atan2(std::abs(c), d);
}

Rect pair_box(Point a, Point b) {
  return {std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y),
          std::max(a.y, b.y)};
}

Vec2 canonical(Vec2 v) {
  if (v.x < 0.0 || (v.x == 0.0 && v.y < 0.0)) return {-v.x, -v.y};
  return v;
}

struct Stepper {
  const MapParams* p;
  ManifoldKind kind;
  int order;
  double escape;

  std::optional<Point> operator()(Point z) const {
    for (int i = 0; i < order; ++i) {
      z = (kind == ManifoldKind::unstable) ? apply(*p, z) : apply_inverse(*p, z);
      if (!z.finite() || std::abs(z.x) > escape || std::abs(z.y) > escape)
        return std::nullopt;
    }
    return z;
  }
};

Point lerp(Point a, Point b, double t) { return a + t * (b - a); }

// curve-length stretch per generation; the step is f^(period) applied once or
// twice depending on the sign of the driving multiplier
double gen_expansion(const PeriodicOrbit& s, ManifoldKind k) {
  if (k == ManifoldKind::unstable) {
    double m1 = std::abs(s.mult1.real());
    return std::pow(m1, s.mult1.real() < 0.0 ? 2 : 1);
  }
  double m2 = std::abs(s.mult2.real());
  return std::pow(1.0 / m2, s.mult2.real() < 0.0 ? 2 : 1);
}

// offset small enough that the first image stays in the linear range
double effective_seed(const PeriodicOrbit& s, ManifoldKind k, double requested) {
  return std::min(requested, 0.02 / gen_expansion(s, k));
}

}  // namespace

const char* to_string(ManifoldKind k) {
  return k == ManifoldKind::stable ? "stable" : "unstable";
}

const char* to_string(TangencyKind k) {
  return k == TangencyKind::homoclinic ? "homoclinic" : "heteroclinic";
}

std::optional<Point> ManifoldCurve::try_eval(int gen, double t) const {
  if (gen < 0) return saddle.points[0];
  Stepper st{&params, kind, step_order, opts.escape_radius};
  std::optional<Point> z = lerp(seed0, seed1, t);
  for (int k = 0; k < gen && z; ++k) z = st(*z);
  return z;
}

Point ManifoldCurve::eval(int gen, double t) const {
  auto z = try_eval(gen, t);
  if (!z) throw Error("curve point left the escape region");
  return *z;
}

ManifoldCurve::SegParam ManifoldCurve::seg_param(size_t i) const {
  const ManifoldVertex& a = verts[poly_vert[i]];
  const ManifoldVertex& b = verts[poly_vert[i + 1]];
  if (a.gen == b.gen) return {a.gen, a.t, b.t};
  if (a.gen + 1 == b.gen && a.t == 1.0) return {b.gen, 0.0, b.t};
  return {b.gen, b.t, b.t};  // anchor or chain gap, not refinable
}

ManifoldCurve grow_manifold(const MapParams& p, const PeriodicOrbit& saddle,
                            ManifoldKind kind, const GrowOptions& opts_in) {
  if (saddle.classification != OrbitClass::saddle)
    throw Error("manifold growth needs a saddle orbit");
  if (kind == ManifoldKind::stable && p.variant == Variant::custom_phi &&
      (!p.phi || !p.phi->inverse))
    throw Error("stable manifold growth needs an invertible map");
  if (saddle.mult1.imag() != 0.0 || saddle.mult2.imag() != 0.0)
    throw Error("manifold growth needs real multipliers");

  GrowOptions opts = opts_in;
  if (opts.target_arclength <= 0.0)
    opts.target_arclength = (kind == ManifoldKind::unstable) ? 50.0 : 20.0;
  opts.side = opts.side >= 0 ? +1 : -1;
  opts.seed_offset = effective_seed(saddle, kind, opts.seed_offset);

  ManifoldCurve c;
  c.params = p;
  c.saddle = saddle;
  c.kind = kind;
  c.side = opts.side;
  c.opts = opts;

  Eigen2 eg = eigen2(cycle_derivative(p, saddle).m);
  if (!eg.real) throw Error("manifold growth needs real multipliers");
  bool uns = (kind == ManifoldKind::unstable);
  Vec2 v = canonical((uns ? eg.v1 : eg.v2).normalized());
  double lam = uns ? saddle.mult1.real() : saddle.mult2.real();
  c.step_order = saddle.period * (lam < 0.0 ? 2 : 1);
  c.eig_dir = v;

  Point base = saddle.points[0];
  c.seed0 = base + (opts.side * opts.seed_offset) * v;
  Stepper step{&c.params, kind, c.step_order, opts.escape_radius};
  auto s1 = step(c.seed0);
  if (!s1) throw Error("degenerate seed");
  c.seed1 = *s1;
  double d0 = dist(c.seed0, base), d1 = dist(c.seed1, base);
  if (!(d1 > 1.2 * d0) || !(d1 < 1.0)) throw Error("degenerate seed");

  const double theta_half = 0.5 * opts.theta_max;
  const Rect clip = opts.clip;
  const double diag = std::max(clip.width(), clip.height());
  const Rect touch_rect = clip.inflated(0.03 * diag + 4.0 * opts.h_max);

  c.verts.push_back({-1, 0.0, base, true});
  c.verts.push_back({0, 0.0, c.seed0, true});

  bool any_valid = false;
  auto emit = [&](int gen, double t, Point pos, bool valid) {
    const ManifoldVertex& prev = c.verts.back();
    if (valid && prev.valid && pair_box(prev.pos, pos).intersects(clip))
      c.clip_length += dist(prev.pos, pos);
    c.verts.push_back({gen, t, pos, valid});
    if (valid) any_valid = true;
  };

  for (int gen = 0; gen < opts.gen_cap; ++gen) {
    any_valid = false;
    const ManifoldVertex start = c.verts.back();
    auto e1 = c.try_eval(gen, 1.0);

    auto rec = [&](auto&& self, double t0, Point p0, bool v0, double t1,
                   Point p1, bool v1, int depth) -> void {
      if (c.verts.size() >= opts.max_vertices) {
        c.budget_hit = true;
        emit(gen, t1, p1, v1);
        return;
      }
      double dt = t1 - t0;
      if (dt <= 5e-16 || depth >= 54) {
        emit(gen, t1, p1, v1);
        return;
      }
      double tm = 0.5 * (t0 + t1);
      auto em = c.try_eval(gen, tm);
      Point pm = em ? *em : Point{};
      bool vm = em.has_value();

      Rect bb{kInf, -kInf, kInf, -kInf};
      auto grow_bb = [&](Point q, bool ok) {
        if (!ok) return;
        bb.xmin = std::min(bb.xmin, q.x);
        bb.xmax = std::max(bb.xmax, q.x);
        bb.ymin = std::min(bb.ymin, q.y);
        bb.ymax = std::max(bb.ymax, q.y);
      };
      grow_bb(p0, v0);
      grow_bb(pm, vm);
      grow_bb(p1, v1);
      bool touch =
          bb.xmin <= bb.xmax &&
          bb.inflated(0.25 * (bb.width() + bb.height())).intersects(touch_rect);

      bool mixed = (v0 != v1) || (vm != v0);
      bool split = false;
      if (mixed && dt > 1e-9) split = true;
      if (!split && touch) {
        double chord = 0.0;
        if (v0 && v1) chord = dist(p0, p1);
        else if (v0 && vm) chord = dist(p0, pm);
        else if (vm && v1) chord = dist(pm, p1);
        if (chord > opts.coarse_cap) split = true;
        // the length floor sits far below h_max so that fold tips smaller
        // than h_max still get refined; without it a hairpin shorter than
        // h_max is replaced by its chord and the tip is lost. The dot test
        // catches hairpins whose arms overlap so tightly that the sampled
        // midpoint looks collinear while the path direction reverses.
        if (!split && v0 && vm && v1 && dist(p0, p1) > 1e-4 * opts.h_max &&
            (dot(pm - p0, p1 - pm) < 0.0 ||
             turn_angle(p0, pm, p1) > theta_half))
          split = true;
      }
      if (split) {
        self(self, t0, p0, v0, tm, pm, vm, depth + 1);
        self(self, tm, pm, vm, t1, p1, v1, depth + 1);
      } else {
        emit(gen, t1, p1, v1);
      }
    };

    rec(rec, 0.0, start.pos, start.valid, 1.0, e1 ? *e1 : Point{},
        e1.has_value(), 0);
    c.generations = gen + 1;
    if (!any_valid || c.budget_hit) break;
    if (c.clip_length >= opts.target_arclength) break;
  }

  // each recursion interval is tested only through its own midpoint, so a
  // fold tip landing almost exactly on an emitted vertex leaves a sharp
  // corner at the join of two intervals that both look straight from
  // inside. Re-refine such joins until the corner straightens or shrinks
  // under the accuracy scale.
  for (int round = 0; round < 60; ++round) {
    // keyed by insertion slot: neighboring corners share an arm and must
    // not insert its midpoint twice
    std::map<size_t, ManifoldVertex> add;
    for (size_t i = 1; i + 1 < c.verts.size(); ++i) {
      const ManifoldVertex &a = c.verts[i - 1], &m = c.verts[i],
                           &b = c.verts[i + 1];
      if (!a.valid || !m.valid || !b.valid || m.gen < 0) continue;
      if (dist(a.pos, b.pos) <= 0.5 * opts.h_max) continue;
      if (turn_angle(a.pos, m.pos, b.pos) <= theta_half) continue;
      auto mid = [&](const ManifoldVertex& u,
                     const ManifoldVertex& v) -> std::optional<ManifoldVertex> {
        double t0 = (u.gen == v.gen) ? u.t : 0.0;
        if (v.t - t0 <= 5e-16) return std::nullopt;
        double tm = 0.5 * (t0 + v.t);
        auto q = c.try_eval(v.gen, tm);
        if (!q) return std::nullopt;
        if ((q->x == u.pos.x && q->y == u.pos.y) ||
            (q->x == v.pos.x && q->y == v.pos.y))
          return std::nullopt;
        return ManifoldVertex{v.gen, tm, *q, true};
      };
      if (auto w = mid(a, m)) add.emplace(i, *w);
      if (auto w = mid(m, b)) add.emplace(i + 1, *w);
    }
    if (add.empty() || c.verts.size() + add.size() > opts.max_vertices) break;
    for (auto it = add.rbegin(); it != add.rend(); ++it)
      c.verts.insert(c.verts.begin() + it->first, it->second);
    c.refined += add.size();
  }

  double s = 0.0;
  bool prev_valid = false;
  for (size_t i = 0; i < c.verts.size(); ++i) {
    const ManifoldVertex& w = c.verts[i];
    if (!w.valid) { prev_valid = false; continue; }
    uint8_t brk = prev_valid ? 0 : 1;
    if (!brk) s += dist(c.polyline.back(), w.pos);
    c.polyline.push_back(w.pos);
    c.arclen.push_back(s);
    c.chain_start.push_back(brk);
    c.poly_vert.push_back(i);
    prev_valid = true;
  }
  return c;
}

namespace {

Point point_on(const ManifoldCurve& c, const ManifoldCurve::SegParam& sp,
               double w) {
  return c.eval(sp.gen, sp.t0 + w * (sp.t1 - sp.t0));
}

// 3-point tangent blended along segment i (falls back to the chord)
Vec2 tangent_at(const ManifoldCurve& c, size_t i, double w) {
  const auto& P = c.polyline;
  Vec2 chord = P[i + 1] - P[i];
  Vec2 n1 = chord, n2 = chord;
  if (i > 0 && !c.chain_start[i]) n1 = P[i + 1] - P[i - 1];
  if (i + 2 < P.size() && !c.chain_start[i + 2]) n2 = P[i + 2] - P[i];
  Vec2 t = (1.0 - w) * n1.normalized() + w * n2.normalized();
  double n = t.norm();
  return n > 0.0 ? t / n : chord.normalized();
}

struct SegIndex {
  double cell = 1.0;
  double x0 = 0.0, y0 = 0.0;
  int nx = 1, ny = 1;
  std::vector<std::vector<uint32_t>> bins;

  void build(const Rect& win, double cell_size) {
    cell = cell_size;
    x0 = win.xmin;
    y0 = win.ymin;
    nx = std::max(1, (int)std::ceil(win.width() / cell));
    ny = std::max(1, (int)std::ceil(win.height() / cell));
    bins.assign((size_t)nx * (size_t)ny, {});
  }
  template <class F>
  void cells(const Rect& bb, F&& f) const {
    int ax = std::clamp((int)std::floor((bb.xmin - x0) / cell), 0, nx - 1);
    int bx = std::clamp((int)std::floor((bb.xmax - x0) / cell), 0, nx - 1);
    int ay = std::clamp((int)std::floor((bb.ymin - y0) / cell), 0, ny - 1);
    int by = std::clamp((int)std::floor((bb.ymax - y0) / cell), 0, ny - 1);
    for (int gy = ay; gy <= by; ++gy)
      for (int gx = ax; gx <= bx; ++gx) f((size_t)gy * (size_t)nx + (size_t)gx);
  }
};

}  // namespace

std::vector<IntersectionPoint> find_intersections(const ManifoldCurve& c1,
                                                  const ManifoldCurve& c2,
                                                  const Rect& window,
                                                  const IntersectOptions& opts) {
  std::vector<uint32_t> segs1, segs2;
  auto collect = [&](const ManifoldCurve& c, std::vector<uint32_t>& out) {
    for (size_t i = 0; i + 1 < c.polyline.size(); ++i) {
      if (!c.seg_connected(i)) continue;
      if (pair_box(c.polyline[i], c.polyline[i + 1]).intersects(window))
        out.push_back((uint32_t)i);
    }
  };
  collect(c1, segs1);
  collect(c2, segs2);

  SegIndex grid;
  grid.build(window, std::max(4.0 * c1.opts.h_max,
                              std::min(window.width(), window.height()) / 256.0));
  for (uint32_t id : segs1)
    grid.cells(pair_box(c1.polyline[id], c1.polyline[id + 1]),
               [&](size_t k) { grid.bins[k].push_back(id); });

  struct RawHit {
    IntersectionPoint ip;
    uint32_t i = 0, j = 0;
    bool pinned = false;  // endpoint-to-endpoint contact
  };
  std::vector<RawHit> raw;
  std::set<std::pair<uint32_t, uint32_t>> overlap_pairs;

  std::vector<IntersectionPoint> out;
  std::vector<uint32_t> cand;
  for (uint32_t j : segs2) {
    Point b0 = c2.polyline[j], b1 = c2.polyline[j + 1];
    cand.clear();
    grid.cells(pair_box(b0, b1), [&](size_t k) {
      for (uint32_t id : grid.bins[k]) cand.push_back(id);
    });
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (uint32_t i : cand) {
      Point a0 = c1.polyline[i], a1 = c1.polyline[i + 1];
      SegmentHit hit = segment_intersect(a0, a1, b0, b1);
      if (!hit.hit) continue;

      IntersectionPoint ip;
      ip.location = hit.p;
      double u = hit.t1, v = hit.t2;
      if (hit.degenerate) {
        ip.degenerate_overlap = true;
        ip.angle = 0.0;
        ip.transverse = false;
      } else {
        Vec2 tg1, tg2;
        bool param_tangents = false;
        auto sp1 = c1.seg_param(i);
        auto sp2 = c2.seg_param(j);
        if (sp1.t1 != sp1.t0 && sp2.t1 != sp2.t0) {
          double uu = u, vv = v;
          bool ok = true;
          for (int it = 0; it < 10 && ok; ++it) {
            try {
              Vec2 F = point_on(c1, sp1, uu) - point_on(c2, sp2, vv);
              if (F.norm() < 1e-13) break;
              double h = 1e-6;
              Vec2 d1 =
                  (point_on(c1, sp1, uu + h) - point_on(c1, sp1, uu - h)) / (2.0 * h);
              Vec2 d2 =
                  (point_on(c2, sp2, vv + h) - point_on(c2, sp2, vv - h)) / (2.0 * h);
              Mat2 J{d1.x, -d2.x, d1.y, -d2.y};
              double det = J.det();
              if (std::abs(det) < 1e-300) { ok = false; break; }
              double du = (-F.x * J.d + F.y * J.b) / det;
              double dv = (F.x * J.c - F.y * J.a) / det;
              uu = std::clamp(uu + du, -0.25, 1.25);
              vv = std::clamp(vv + dv, -0.25, 1.25);
            } catch (const Error&) { ok = false; }
          }
          if (ok) {
            try {
              Point q1 = point_on(c1, sp1, uu);
              Point q2 = point_on(c2, sp2, vv);
              Point q = 0.5 * (q1 + q2);
              if (dist(q1, q2) < 1e-7 && dist(q, hit.p) < 4.0 * c1.opts.coarse_cap) {
                ip.location = q;
                u = uu;
                v = vv;
                double h = 1e-6;
                tg1 = (point_on(c1, sp1, uu + h) - point_on(c1, sp1, uu - h))
                          .normalized();
                tg2 = (point_on(c2, sp2, vv + h) - point_on(c2, sp2, vv - h))
                          .normalized();
                param_tangents = tg1.finite() && tg2.finite();
              }
            } catch (const Error&) {}
          }
        }
        if (!param_tangents) {
          tg1 = tangent_at(c1, i, std::clamp(u, 0.0, 1.0));
          tg2 = tangent_at(c2, j, std::clamp(v, 0.0, 1.0));
        }
        ip.angle = line_angle(tg1, tg2);
        ip.transverse = ip.angle > opts.theta_transverse;
      }
      if (!window.contains(ip.location)) continue;
      bool near_saddle = false;
      for (const Point& sp : c1.saddle.points)
        if (dist(ip.location, sp) < opts.saddle_exclusion) near_saddle = true;
      for (const Point& sp : c2.saddle.points)
        if (dist(ip.location, sp) < opts.saddle_exclusion) near_saddle = true;
      if (near_saddle) continue;
      ip.s_param = c1.arclen[i] + std::clamp(u, 0.0, 1.0) *
                                      dist(c1.polyline[i], c1.polyline[i + 1]);
      ip.u_param = c2.arclen[j] + std::clamp(v, 0.0, 1.0) *
                                      dist(c2.polyline[j], c2.polyline[j + 1]);
      RawHit rh;
      rh.ip = ip;
      rh.i = i;
      rh.j = j;
      auto at_end = [](double t) {
        return std::abs(t) < 1e-9 || std::abs(t - 1.0) < 1e-9;
      };
      rh.pinned = at_end(hit.t1) && at_end(hit.t2);
      if (ip.degenerate_overlap) overlap_pairs.insert({i, j});
      raw.push_back(rh);
    }
  }

  // a vertex contact beside an exact overlap is the same coincidence seen
  // again through the neighboring segments, not a crossing of its own
  for (const RawHit& rh : raw) {
    if (!rh.ip.degenerate_overlap && rh.pinned) {
      bool beside_overlap = false;
      for (int di = -1; di <= 1 && !beside_overlap; ++di)
        for (int dj = -1; dj <= 1 && !beside_overlap; ++dj) {
          int64_t ni = (int64_t)rh.i + di, nj = (int64_t)rh.j + dj;
          if (ni < 0 || nj < 0) continue;
          if (overlap_pairs.count({(uint32_t)ni, (uint32_t)nj}))
            beside_overlap = true;
        }
      if (beside_overlap) continue;
    }
    out.push_back(rh.ip);
  }

  std::sort(out.begin(), out.end(), [](const IntersectionPoint& a,
                                       const IntersectionPoint& b) {
    if (a.location.x != b.location.x) return a.location.x < b.location.x;
    if (a.location.y != b.location.y) return a.location.y < b.location.y;
    return a.s_param < b.s_param;
  });
  std::vector<IntersectionPoint> dedup;
  for (const auto& ip : out) {
    bool dup = false;
    for (auto it = dedup.rbegin(); it != dedup.rend(); ++it) {
      if (ip.location.x - it->location.x > opts.dedup_tol) break;
      if (dist(ip.location, it->location) <= opts.dedup_tol) { dup = true; break; }
    }
    if (!dup) dedup.push_back(ip);
  }
  std::sort(dedup.begin(), dedup.end(), [](const IntersectionPoint& a,
                                           const IntersectionPoint& b) {
    if (a.s_param != b.s_param) return a.s_param < b.s_param;
    return a.u_param < b.u_param;
  });
  return dedup;
}

namespace {

// piecewise parametrization over the two polyline segments around vertex i;
// lam in [0,2] with the vertex at lam = 1
struct TripleParam {
  const ManifoldCurve* c;
  ManifoldCurve::SegParam left, right;

  Point at(double lam) const {
    if (lam <= 1.0) return point_on(*c, left, lam);
    return point_on(*c, right, lam - 1.0);
  }
  std::pair<int, double> param(double lam) const {
    if (lam <= 1.0) return {left.gen, left.t0 + lam * (left.t1 - left.t0)};
    return {right.gen, right.t0 + (lam - 1.0) * (right.t1 - right.t0)};
  }
};

std::optional<TripleParam> triple_at(const ManifoldCurve& c, size_t i) {
  if (i == 0 || i + 1 >= c.polyline.size()) return std::nullopt;
  if (c.chain_start[i] || c.chain_start[i + 1]) return std::nullopt;
  TripleParam tp{&c, c.seg_param(i - 1), c.seg_param(i)};
  if (tp.left.t0 == tp.left.t1 || tp.right.t0 == tp.right.t1) return std::nullopt;
  return tp;
}

double ternary_max(const std::function<double(double)>& f, double lo, double hi,
                   int iters, double* arg) {
  for (int k = 0; k < iters; ++k) {
    double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
    if (f(m1) < f(m2)) lo = m1; else hi = m2;
  }
  if (arg) *arg = 0.5 * (lo + hi);
  return f(0.5 * (lo + hi));
}

}  // namespace

std::vector<FoldTip> find_fold_tips(const ManifoldCurve& c, const Rect& window) {
  std::vector<FoldTip> tips;
  const auto& P = c.polyline;
  for (size_t i = 1; i + 1 < P.size(); ++i) {
    if (c.chain_start[i] || c.chain_start[i + 1]) continue;
    int sense = 0;
    if (P[i].x > P[i - 1].x && P[i].x >= P[i + 1].x) sense = +1;
    if (P[i].x < P[i - 1].x && P[i].x <= P[i + 1].x) sense = -1;
    if (sense == 0) continue;
    if (!window.inflated(2.0 * c.opts.h_max).contains(P[i])) continue;

    FoldTip tip;
    tip.sense = sense;
    tip.arclen = c.arclen[i];
    tip.pos = P[i];
    const ManifoldVertex& w = c.verts[c.poly_vert[i]];
    tip.gen = w.gen;
    tip.t = w.t;
    if (auto tp = triple_at(c, i)) {
      double lam = 1.0;
      std::function<double(double)> f = [&](double l) {
        try { return sense * tp->at(l).x; } catch (const Error&) { return -kInf; }
      };
      ternary_max(f, 0.0, 2.0, 90, &lam);
      try {
        Point q = tp->at(lam);
        auto [pg, pt] = tp->param(lam);
        tip.pos = q;
        tip.gen = pg;
        tip.t = pt;
      } catch (const Error&) {}
    }
    if (!window.contains(tip.pos)) continue;
    if (!tips.empty() && tips.back().sense == sense &&
        dist(tips.back().pos, tip.pos) < 1e-10)
      continue;
    tips.push_back(tip);
  }
  return tips;
}

// ---- stable strip arcs ----

namespace {

struct StrandRun {
  int branch;
  size_t p_lo, p_hi;  // first and last touching segment index
  double ymin, ymax;  // band coverage of the chords
  bool holds_start;
};

std::vector<StrandRun> band_runs(const ManifoldCurve& c, int branch, double s) {
  std::vector<StrandRun> runs;
  const auto& P = c.polyline;
  auto touches = [&](size_t i) {
    if (!c.seg_connected(i)) return false;
    Rect bb = pair_box(P[i], P[i + 1]);
    return bb.ymin <= s && bb.ymax >= -s && bb.xmin <= 2.0 && bb.xmax >= -2.0;
  };
  size_t i = 0;
  while (i + 1 < P.size()) {
    if (!touches(i)) { ++i; continue; }
    StrandRun r{branch, i, i, kInf, -kInf, i == 0};
    while (i + 1 < P.size() && touches(i)) {
      r.p_hi = i;
      double lo = std::max(std::min(P[i].y, P[i + 1].y), -s);
      double hi = std::min(std::max(P[i].y, P[i + 1].y), s);
      if (lo <= hi) {
        r.ymin = std::min(r.ymin, lo);
        r.ymax = std::max(r.ymax, hi);
      }
      ++i;
    }
    if (r.ymin <= r.ymax) runs.push_back(r);
  }
  return runs;
}

// parametric root pos(t).y == y within segment i
Point segment_y_root(const ManifoldCurve& c, size_t i, double y) {
  auto sp = c.seg_param(i);
  Point a = c.polyline[i], b = c.polyline[i + 1];
  if (sp.t0 == sp.t1) {
    double w = (b.y != a.y) ? (y - a.y) / (b.y - a.y) : 0.5;
    return lerp(a, b, std::clamp(w, 0.0, 1.0));
  }
  double wl = 0.0, wh = 1.0, fl = a.y - y;
  for (int k = 0; k < 80; ++k) {
    double wm = 0.5 * (wl + wh);
    double fm;
    try { fm = point_on(c, sp, wm).y - y; } catch (const Error&) { break; }
    if ((fm <= 0.0) == (fl <= 0.0)) { wl = wm; fl = fm; } else { wh = wm; }
  }
  double w = 0.5 * (wl + wh);
  try { return point_on(c, sp, w); } catch (const Error&) { return lerp(a, b, w); }
}

double run_x_at(const ManifoldCurve& c, size_t p_lo, size_t p_hi, double y,
                Point* pt) {
  const auto& P = c.polyline;
  for (size_t i = p_lo; i <= p_hi && i + 1 < P.size(); ++i) {
    if (!c.seg_connected(i)) continue;
    double ya = P[i].y, yb = P[i + 1].y;
    if ((ya - y) * (yb - y) <= 0.0 && ya != yb) {
      Point q = segment_y_root(c, i, y);
      if (pt) *pt = q;
      return q.x;
    }
  }
  throw Error("strip strand does not reach the requested height");
}

}  // namespace

double StripArcs::strand_x_at(const StripStrand& s, double y) const {
  return run_x_at(curve(s.branch), s.p_lo, s.p_hi, y, nullptr);
}

std::vector<Point> StripArcs::strand_points(const StripStrand& s, double y_lo,
                                            double y_hi, double max_dy) const {
  const ManifoldCurve& c = curve(s.branch);
  int n = std::clamp(
      (int)std::ceil(std::abs(y_hi - y_lo) / std::max(max_dy, 1e-9)), 8, 4000);
  std::vector<Point> out;
  out.reserve((size_t)n + 1);
  for (int k = 0; k <= n; ++k) {
    // endpoints sampled exactly, the lerp form can overshoot by an ulp
    double y = k == 0   ? y_lo
               : k == n ? y_hi
                        : y_lo + (y_hi - y_lo) * (double)k / n;
    Point q;
    run_x_at(c, s.p_lo, s.p_hi, y, &q);
    out.push_back(q);
  }
  return out;
}

StripArcs stable_strip_arcs(const MapParams& p, const PeriodicOrbit& saddle,
                            const StripOptions& opts) {
  if (saddle.classification != OrbitClass::saddle)
    throw Error("strip arcs need a saddle orbit");
  Point base = saddle.points[0];
  double s = opts.strip_scale * std::max(p.sqrt_b, std::abs(base.y));

  double expand = gen_expansion(saddle, ManifoldKind::stable);
  if (!(expand > 1.0)) throw Error("strip arcs need a saddle orbit");
  double seed = effective_seed(saddle, ManifoldKind::stable,
                               opts.grow.seed_offset > 0.0 ? opts.grow.seed_offset
                                                           : 1e-7);
  double m2 = std::abs(saddle.mult2.real());
  double span_needed = 3.0 * (2.0 * s + std::abs(base.y)) / m2;
  int cap = (int)std::ceil(std::log(std::max(span_needed / seed, 10.0)) /
                           std::log(expand));
  cap = std::clamp(cap + opts.extra_gens, 2, 12);

  GrowOptions g = opts.grow;
  g.target_arclength = 1e30;
  g.gen_cap = cap;
  g.escape_radius = std::max(g.escape_radius, 10.0 / p.sqrt_b);

  StripArcs arcs;
  arcs.strip_half = s;
  g.side = +1;
  arcs.branch_pos = grow_manifold(p, saddle, ManifoldKind::stable, g);
  g.side = -1;
  arcs.branch_neg = grow_manifold(p, saddle, ManifoldKind::stable, g);

  auto runs_pos = band_runs(arcs.branch_pos, +1, s);
  auto runs_neg = band_runs(arcs.branch_neg, -1, s);

  auto as_strand = [&](const StrandRun& r, double ylo, double yhi) {
    StripStrand st;
    st.branch = r.branch;
    st.p_lo = r.p_lo;
    st.p_hi = r.p_hi;
    const ManifoldCurve& c = r.branch > 0 ? arcs.branch_pos : arcs.branch_neg;
    run_x_at(c, r.p_lo, r.p_hi, ylo, &st.entry);
    run_x_at(c, r.p_lo, r.p_hi, yhi, &st.exit);
    st.x_mean = 0.5 * (st.entry.x + st.exit.x);
    return st;
  };

  // the leaf through the saddle: per branch, the run holding the curve start
  bool have_up = false, have_dn = false;
  for (const auto* runs : {&runs_pos, &runs_neg}) {
    for (const auto& r : *runs) {
      if (!r.holds_start) continue;
      if (r.ymax >= 0.95 * s && !have_up) {
        arcs.left_upper = as_strand(r, base.y, r.ymax);
        have_up = true;
      } else if (r.ymin <= -0.95 * s && !have_dn) {
        arcs.left_lower = as_strand(r, r.ymin, base.y);
        have_dn = true;
      }
    }
  }
  if (!have_up || !have_dn)
    throw Error("stable leaf arc does not span the strip");

  // first full-height return strand on the positive side, near sqrt(2/a)
  double x_target = std::sqrt(2.0 / p.a);
  bool found = false;
  double best = kInf;
  size_t best_lo = 0;
  StrandRun best_run{+1, 0, 0, 0.0, 0.0, false};
  for (const auto* runs : {&runs_pos, &runs_neg}) {
    for (const auto& r : *runs) {
      if (r.holds_start) continue;
      if (r.ymin > -0.95 * s || r.ymax < 0.95 * s) continue;
      const ManifoldCurve& c = r.branch > 0 ? arcs.branch_pos : arcs.branch_neg;
      double x0;
      try { x0 = run_x_at(c, r.p_lo, r.p_hi, 0.0, nullptr); }
      catch (const Error&) { continue; }
      if (x0 < 0.35 || x0 > 1.5) continue;
      double d = std::abs(x0 - x_target);
      if (d < best || (d == best && r.p_lo < best_lo)) {
        best = d;
        best_lo = r.p_lo;
        best_run = r;
        found = true;
      }
    }
  }
  if (!found) throw Error("right stable strip arc not found");
  arcs.right = as_strand(best_run, best_run.ymin, best_run.ymax);
  return arcs;
}

// ---- first tangency ----

namespace {

struct GapDetail {
  double g = -kInf;
  double second = -kInf;
  FoldTip tip;
  const ManifoldCurve* tip_curve = nullptr;
  size_t tip_pidx = 0;
  Point fold_pt;
  double arc_x = 0.0;
};

// deepest signed penetration of one fold through the right strip arc:
// maximize x_fold - x_arc(y_fold) over the fold's local parameter
double fold_penetration(const ManifoldCurve& c, size_t pidx,
                        const StripArcs& arcs, Point* fold_pt, double* arc_x_out,
                        double* lam_out) {
  auto tp = triple_at(c, pidx);
  if (!tp) {
    Point q = c.polyline[pidx];
    double ax = arcs.strand_x_at(arcs.right, q.y);
    if (fold_pt) *fold_pt = q;
    if (arc_x_out) *arc_x_out = ax;
    if (lam_out) *lam_out = 1.0;
    return q.x - ax;
  }
  double lam = 1.0;
  std::function<double(double)> f = [&](double l) {
    try {
      Point q = tp->at(l);
      return q.x - arcs.strand_x_at(arcs.right, q.y);
    } catch (const Error&) { return -kInf; }
  };
  double g = ternary_max(f, 0.0, 2.0, 80, &lam);
  try {
    Point q = tp->at(lam);
    if (fold_pt) *fold_pt = q;
    if (arc_x_out) *arc_x_out = arcs.strand_x_at(arcs.right, q.y);
  } catch (const Error&) {}
  if (lam_out) *lam_out = lam;
  return g;
}

struct TangencyScratch {
  MapParams p;
  FixedSaddles fs;
  StripArcs arcs;
  ManifoldCurve wu_pos, wu_neg;
};

GapDetail eval_gap(TangencyScratch& sc, double a, double b, int orientation,
                   const PeriodicOrbit& usaddle, const TangencyOptions& topts) {
  sc.p = MapParams::make(a, b, orientation);
  sc.fs = fixed_points(sc.p);
  StripOptions so;
  so.grow.h_max = topts.h_max;
  so.grow.theta_max = topts.theta_max;
  sc.arcs = stable_strip_arcs(sc.p, sc.fs.Q, so);

  GrowOptions g;
  g.h_max = topts.h_max;
  g.theta_max = topts.theta_max;
  g.target_arclength = topts.wu_target;
  g.gen_cap = topts.wu_gen_cap;
  double yh = std::max(0.3, 3.0 * sc.p.sqrt_b);
  g.clip = Rect{-1.7, 1.9, -yh, yh};
  g.side = +1;
  sc.wu_pos = grow_manifold(sc.p, usaddle, ManifoldKind::unstable, g);
  g.side = -1;
  sc.wu_neg = grow_manifold(sc.p, usaddle, ManifoldKind::unstable, g);

  double ty = 0.5 * sc.p.sqrt_b + 2e-3;
  Rect tip_window{std::sqrt(2.0 / a) - 0.25, 1.9, -ty, ty};

  GapDetail d;
  for (const ManifoldCurve* c : {&sc.wu_pos, &sc.wu_neg}) {
    const auto& P = c->polyline;
    for (size_t i = 1; i + 1 < P.size(); ++i) {
      if (c->chain_start[i] || c->chain_start[i + 1]) continue;
      if (!(P[i].x > P[i - 1].x && P[i].x >= P[i + 1].x)) continue;
      if (!tip_window.inflated(2.0 * c->opts.h_max).contains(P[i])) continue;
      Point fp;
      double ax = 0.0;
      double g1;
      try { g1 = fold_penetration(*c, i, sc.arcs, &fp, &ax, nullptr); }
      catch (const Error&) { continue; }
      if (g1 == -kInf) continue;
      if (g1 > d.g) {
        d.second = d.g;
        d.g = g1;
        d.tip = FoldTip{fp, c->verts[c->poly_vert[i]].gen,
                        c->verts[c->poly_vert[i]].t, c->arclen[i], +1};
        d.tip_curve = c;
        d.tip_pidx = i;
        d.fold_pt = fp;
        d.arc_x = ax;
      } else if (g1 > d.second) {
        d.second = g1;
      }
    }
  }
  if (!d.tip_curve) throw Error("fold vertex not found");
  return d;
}

PeriodicOrbit designated_saddle(const FixedSaddles& fs, int orientation) {
  return orientation > 0 ? fs.Q : fs.P;
}

}  // namespace

double tangency_gap(const MapParams& p, const TangencyOptions& opts) {
  TangencyScratch sc;
  FixedSaddles fs = fixed_points(p);
  return eval_gap(sc, p.a, p.b, p.orientation,
                  designated_saddle(fs, p.orientation), opts)
      .g;
}

TangencyReport locate_first_tangency(double b, int orientation,
                                     const TangencyOptions& opts) {
  TangencyReport rep;
  rep.b = b;
  rep.orientation = orientation;
  rep.kind =
      orientation > 0 ? TangencyKind::homoclinic : TangencyKind::heteroclinic;

  double lo = opts.bracket.first, hi = opts.bracket.second;
  if (!(lo < hi)) throw Error("bracket invalid");

  TangencyScratch sc;
  auto gap_at = [&](double a) {
    MapParams p = MapParams::make(a, b, orientation);
    FixedSaddles fs = fixed_points(p);
    ++rep.evaluations;
    return eval_gap(sc, a, b, orientation, designated_saddle(fs, orientation),
                    opts);
  };

  double glo = gap_at(lo).g;
  double ghi = gap_at(hi).g;
  if (!(glo < 0.0 && ghi > 0.0)) throw Error("bracket invalid");

  double gap_target = std::max(
      opts.gap_floor,
      opts.theta_transverse * opts.theta_transverse * std::sqrt(b) / 8.0);
  double a_best = 0.5 * (lo + hi), g_best = kInf;
  for (int it = 0; it < opts.max_bisect; ++it) {
    double mid = 0.5 * (lo + hi);
    double gm = gap_at(mid).g;
    if (std::abs(gm) < std::abs(g_best)) { g_best = gm; a_best = mid; }
    if (gm < 0.0) lo = mid; else hi = mid;
    if (hi - lo < opts.bracket_tol &&
        (std::abs(g_best) < gap_target || hi - lo < 1e-12))
      break;
  }
  rep.bracket_width = hi - lo;
  rep.a_star = a_best;

  GapDetail d = gap_at(a_best);
  rep.gap = d.g;
  rep.second_gap = d.second;
  Point fold_pt = d.fold_pt;
  rep.contact_point = 0.5 * (fold_pt + Point{d.arc_x, fold_pt.y});

  // tangent comparison at the contact, chords sized against fold curvature
  {
    double kappa = 2.0 * sc.p.a / sc.p.sqrt_b;
    double chord = std::sqrt(4e-14 / kappa);
    Vec2 tf;
    auto tp = triple_at(*d.tip_curve, d.tip_pidx);
    if (tp) {
      double lam = 1.0;
      fold_penetration(*d.tip_curve, d.tip_pidx, sc.arcs, nullptr, nullptr,
                       &lam);
      double probe = 1e-4;
      Vec2 v =
          tp->at(std::min(lam + probe, 2.0)) - tp->at(std::max(lam - probe, 0.0));
      double speed = v.norm() / (2.0 * probe);
      double step = speed > 0.0 ? 0.5 * chord / speed : probe;
      double l0 = std::max(lam - step, 0.0), l1 = std::min(lam + step, 2.0);
      tf = (tp->at(l1) - tp->at(l0)).normalized();
    } else {
      tf = tangent_at(*d.tip_curve, d.tip_pidx, 0.0);
    }
    const ManifoldCurve& rc = sc.arcs.curve(sc.arcs.right.branch);
    double dy = std::max(chord, 1e-9);
    Point q0, q1;
    run_x_at(rc, sc.arcs.right.p_lo, sc.arcs.right.p_hi, fold_pt.y - dy, &q0);
    run_x_at(rc, sc.arcs.right.p_lo, sc.arcs.right.p_hi, fold_pt.y + dy, &q1);
    rep.residual_angle = line_angle(tf, (q1 - q0).normalized());
  }

  rep.tangency_point = apply_inverse(sc.p, rep.contact_point);

  if (opts.check_rival) {
    PeriodicOrbit rival = orientation > 0 ? sc.fs.P : sc.fs.Q;
    TangencyScratch rsc;
    try {
      GapDetail rd = eval_gap(rsc, rep.a_star, b, orientation, rival, opts);
      rep.rival_gap = rd.g;
      rep.rival_crossed_first = rd.g > 1e-9;
    } catch (const Error&) {
      rep.rival_gap = std::numeric_limits<double>::quiet_NaN();
      rep.rival_crossed_first = false;
    }
  }
  return rep;
}

// ---- trapping region ----

namespace {

struct WalkCross {
  double s;
  size_t seg;
  Point pt;
};

std::vector<WalkCross> polyline_crossings(const ManifoldCurve& c,
                                          std::span<const Point> arc) {
  std::vector<WalkCross> out;
  if (arc.size() < 2) return out;
  Rect bb{kInf, -kInf, kInf, -kInf};
  for (const Point& q : arc) {
    bb.xmin = std::min(bb.xmin, q.x);
    bb.xmax = std::max(bb.xmax, q.x);
    bb.ymin = std::min(bb.ymin, q.y);
    bb.ymax = std::max(bb.ymax, q.y);
  }
  bb = bb.inflated(1e-6);
  for (size_t i = 0; i + 1 < c.polyline.size(); ++i) {
    if (!c.seg_connected(i)) continue;
    Point a0 = c.polyline[i], a1 = c.polyline[i + 1];
    if (!pair_box(a0, a1).intersects(bb)) continue;
    for (size_t j = 0; j + 1 < arc.size(); ++j) {
      SegmentHit hit = segment_intersect(a0, a1, arc[j], arc[j + 1]);
      if (!hit.hit || hit.degenerate) continue;
      double s = c.arclen[i] + hit.t1 * dist(a0, a1);
      if (!out.empty() && std::abs(out.back().s - s) < 1e-12) continue;
      out.push_back({s, i, hit.p});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const WalkCross& a, const WalkCross& b) { return a.s < b.s; });
  return out;
}

std::vector<Point> curve_piece(const ManifoldCurve& c, double s_from, Point from,
                               double s_to, Point to) {
  std::vector<Point> out;
  out.push_back(from);
  for (size_t i = 0; i < c.polyline.size(); ++i) {
    if (c.arclen[i] > s_from && c.arclen[i] < s_to) out.push_back(c.polyline[i]);
    if (c.arclen[i] >= s_to) break;
  }
  out.push_back(to);
  return out;
}

double signed_area(std::span<const Point> poly) {
  double a = 0.0;
  for (size_t i = 0; i + 1 < poly.size(); ++i) a += cross(poly[i], poly[i + 1]);
  return 0.5 * a;
}

}  // namespace

bool TrappingRegion::contains(Point z) const {
  bool in = false;
  for (size_t i = 0; i + 1 < boundary.size(); ++i) {
    const Point& a = boundary[i];
    const Point& b = boundary[i + 1];
    if ((a.y > z.y) != (b.y > z.y)) {
      double xi = a.x + (z.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (xi > z.x) in = !in;
    }
  }
  return in;
}

double TrappingRegion::boundary_distance(Point z) const {
  double best = kInf;
  for (size_t i = 0; i + 1 < boundary.size(); ++i) {
    const Point& a = boundary[i];
    const Point& b = boundary[i + 1];
    Vec2 ab = b - a;
    double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0
                   ? std::clamp(((z.x - a.x) * ab.x + (z.y - a.y) * ab.y) / len2,
                                0.0, 1.0)
                   : 0.0;
    best = std::min(best, dist(z, Point{a.x + t * ab.x, a.y + t * ab.y}));
  }
  return best;
}

TrappingRegion build_trapping_region(const MapParams& p,
                                     const RegionOptions& opts) {
  FixedSaddles fs = fixed_points(p);

  StripOptions so;
  so.strip_scale = opts.strip_scale;
  so.grow.h_max = opts.h_max;
  so.grow.theta_max = opts.theta_max;
  so.grow.coarse_cap = opts.coarse_cap;
  StripArcs arcs = stable_strip_arcs(p, fs.Q, so);
  double s = arcs.strip_half;

  GrowOptions g;
  g.h_max = opts.h_max;
  g.theta_max = opts.theta_max;
  g.coarse_cap = opts.coarse_cap;
  g.target_arclength = opts.wu_target;
  g.gen_cap = opts.wu_gen_cap;
  double yh = std::max(0.3, 3.0 * p.sqrt_b);
  g.clip = Rect{-1.7, 1.9, -yh, yh};
  g.side = +1;
  ManifoldCurve wu = grow_manifold(p, fs.Q, ManifoldKind::unstable, g);

  Point q0 = fs.Q.points[0];
  double dy = std::max(1e-3 * s, 1e-9);
  std::vector<Point> right_pts =
      arcs.strand_points(arcs.right, -0.98 * s, 0.98 * s, dy);
  std::vector<Point> left_lo = arcs.strand_points(
      arcs.left_lower, std::max(arcs.left_lower.entry.y, -0.98 * s), q0.y, dy);
  std::vector<Point> left_up = arcs.strand_points(
      arcs.left_upper, q0.y, std::min(arcs.left_upper.exit.y, 0.98 * s), dy);
  std::vector<Point> left_pts = left_lo;
  left_pts.insert(left_pts.end(), left_up.begin() + 1, left_up.end());

  auto crossR = polyline_crossings(wu, std::span<const Point>(right_pts));
  auto crossL = polyline_crossings(wu, std::span<const Point>(left_pts));

  double ty = 0.5 * p.sqrt_b + 2e-3;
  Rect tip_window{std::sqrt(2.0 / p.a) - 0.25, 1.9, -ty, ty};
  auto tips = find_fold_tips(wu, tip_window);
  double s_tip = kInf, s_next = kInf;
  Point tip_pt;
  for (const auto& t : tips) {
    if (t.sense != +1) continue;
    if (!std::isfinite(s_tip)) { s_tip = t.arclen; tip_pt = t.pos; }
    else { s_next = t.arclen; break; }
  }
  if (!std::isfinite(s_tip)) throw Error("unstable fold vertex not found");

  // only the first excursion counts: crossings past the next fold belong to
  // later passes of the unstable curve, which accumulate on the region from
  // inside and must not be drafted into its boundary
  const WalkCross* c1 = nullptr;
  const WalkCross* c2 = nullptr;
  for (const auto& w : crossR) {
    if (w.s >= s_next) break;
    if (w.s < s_tip) c1 = &w;
    else { c2 = &w; break; }
  }
  if (!c1 && !c2)
    throw Error("unstable fold does not reach the right stable arc");
  if ((c1 != nullptr) != (c2 != nullptr))
    throw Error("unstable fold does not cross the stable strip cleanly");
  const WalkCross* c3 = nullptr;
  for (const auto& w : crossL) {
    if (w.s > s_tip && w.s < s_next) { c3 = &w; break; }
  }
  if (!c3) throw Error("returning unstable arc does not reach the stable leaf");

  TrappingRegion r;
  r.unstable_out = curve_piece(wu, 0.0, q0, c1->s, c1->pt);
  {
    std::vector<Point> piece =
        arcs.strand_points(arcs.right, c1->pt.y, c2->pt.y, dy);
    piece.front() = c1->pt;
    piece.back() = c2->pt;
    r.stable_right = piece;
  }
  r.unstable_back = curve_piece(wu, c2->s, c2->pt, c3->s, c3->pt);
  r.corners = {q0, c1->pt, c2->pt, c3->pt};
  {
    const StripStrand& half =
        c3->pt.y >= q0.y ? arcs.left_upper : arcs.left_lower;
    std::vector<Point> piece = arcs.strand_points(half, c3->pt.y, q0.y, dy);
    piece.front() = c3->pt;
    piece.back() = q0;
    r.stable_left = piece;
  }

  r.boundary = r.unstable_out;
  auto append = [&](const std::vector<Point>& arc) {
    for (size_t i = 1; i < arc.size(); ++i) r.boundary.push_back(arc[i]);
  };
  if (!r.stable_right.empty()) append(r.stable_right);
  append(r.unstable_back);
  append(r.stable_left);
  if (dist(r.boundary.front(), r.boundary.back()) > 1e-6)
    throw Error("region boundary does not close");
  r.boundary.back() = r.boundary.front();
  if (signed_area(std::span<const Point>(r.boundary)) < 0.0)
    std::reverse(r.boundary.begin(), r.boundary.end());

  Rect bb{kInf, -kInf, kInf, -kInf};
  for (const Point& q : r.boundary) {
    bb.xmin = std::min(bb.xmin, q.x);
    bb.xmax = std::max(bb.xmax, q.x);
    bb.ymin = std::min(bb.ymin, q.y);
    bb.ymax = std::max(bb.ymax, q.y);
  }
  r.bbox = bb;
  return r;
}

// The image of a point near the lower unstable arc is pinned to the upper
// one at transversal distance shrunk by roughly b, far below what a polyline
// of finite sag can classify. Exits therefore only count beyond the margin;
// shallower outside landings are tallied as boundary cases. Returns are held
// to the same margin so a skimming orbit cannot fake a re-entry.
RegionEscapeStats region_escape_check(const MapParams& p,
                                      const TrappingRegion& r, int n_samples,
                                      int horizon, uint64_t seed,
                                      double exit_margin) {
  RegionEscapeStats st;
  st.horizon = horizon;
  st.exit_margin = exit_margin;
  Rng rng{seed, 17};
  uint64_t draw = 0;
  uint64_t cap = 400ull * (uint64_t)std::max(n_samples, 1);
  while (st.sampled < n_samples && draw < cap) {
    double ux = rng.uniform(2 * draw);
    double uy = rng.uniform(2 * draw + 1);
    ++draw;
    Point z{r.bbox.xmin + ux * r.bbox.width(),
            r.bbox.ymin + uy * r.bbox.height()};
    if (!r.contains(z)) continue;
    Point w = apply(p, z);
    if (r.contains(w)) continue;
    if (r.boundary_distance(w) <= exit_margin) {
      ++st.boundary;
      continue;
    }
    ++st.sampled;
    for (int n = 2; n <= horizon; ++n) {
      w = apply(p, w);
      if (!w.finite() || std::abs(w.x) > 50.0 || std::abs(w.y) > 50.0) break;
      if (r.contains(w) && r.boundary_distance(w) > exit_margin) {
        ++st.returned;
        break;
      }
    }
  }
  return st;
}

// ---- transversality sweep at the tangency parameter ----

namespace {

// The stable set re-enters the window only after excursions far beyond the
// escape fence, so generation growth cannot reach the deeper strands. They
// are exact inverse images of arcs already computed; the turn criterion
// keeps chord sag near 1e-7, so levels can be chained without drift.
std::vector<std::vector<Point>> inverse_chains(
    const MapParams& p, const std::vector<std::vector<Point>>& src,
    const Rect& fine, double fence) {
  auto pull = [&](Point z) -> std::optional<Point> {
    Point w;
    try {
      w = apply_inverse(p, z);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (!w.finite() || std::abs(w.x) > fence || std::abs(w.y) > fence)
      return std::nullopt;
    return w;
  };
  auto cap_for = [&](Point q0, Point q1) {
    return (fine.contains(q0) || fine.contains(q1)) ? 2e-3 : 8e-2;
  };

  std::vector<std::vector<Point>> out;
  std::vector<Point> open;
  auto flush = [&] {
    if (open.size() >= 2) out.push_back(std::move(open));
    open.clear();
  };
  auto put = [&](const std::optional<Point>& fa, Point q) {
    if (open.empty()) open.push_back(*fa);
    open.push_back(q);
  };
  auto rec = [&](auto&& self, Point a, Point b, const std::optional<Point>& fa,
                 const std::optional<Point>& fb, int depth) -> void {
    if (!fa && !fb) {
      flush();
      return;
    }
    if (depth <= 0) {
      if (fa && fb) put(fa, *fb);
      else flush();
      return;
    }
    Point m = lerp(a, b, 0.5);
    std::optional<Point> fm;
    if (fa && fb) {
      double chord = dist(*fa, *fb);
      if (chord <= cap_for(*fa, *fb)) {
        if (chord <= 2e-4) {
          put(fa, *fb);
          return;
        }
        fm = pull(m);
        if (!fm || turn_angle(*fa, *fm, *fb) <= 0.01) {
          if (fm) put(fa, *fm);
          put(fa, *fb);
          return;
        }
      }
    }
    if (!fm) fm = pull(m);
    self(self, a, m, fa, fm, depth - 1);
    self(self, m, b, fm, fb, depth - 1);
  };

  for (const auto& ch : src) {
    for (size_t i = 0; i + 1 < ch.size(); ++i) {
      Point a = ch[i], b = ch[i + 1];
      if (std::max({std::abs(a.x), std::abs(a.y), std::abs(b.x),
                    std::abs(b.y)}) > fence) {
        flush();
        continue;
      }
      rec(rec, a, b, pull(a), pull(b), 26);
    }
    flush();
  }
  return out;
}

// crossings of plain point chains against a grown curve inside the window;
// angles come from chord directions, the chains carry no parametrization
struct ChainCross {
  Point at;
  double angle = 0.0;
};

std::vector<ChainCross> chain_curve_crossings(
    const std::vector<std::vector<Point>>& chains, const ManifoldCurve& cv,
    const Rect& window) {
  SegIndex grid;
  grid.build(window,
             std::max(8e-3, std::min(window.width(), window.height()) / 256.0));
  for (size_t i = 0; i + 1 < cv.polyline.size(); ++i) {
    if (!cv.seg_connected(i)) continue;
    Rect bb = pair_box(cv.polyline[i], cv.polyline[i + 1]);
    if (!bb.intersects(window)) continue;
    grid.cells(bb, [&](size_t k) { grid.bins[k].push_back((uint32_t)i); });
  }

  std::vector<ChainCross> out;
  std::vector<uint32_t> cand;
  for (const auto& ch : chains) {
    for (size_t i = 0; i + 1 < ch.size(); ++i) {
      Rect bb = pair_box(ch[i], ch[i + 1]);
      if (!bb.intersects(window)) continue;
      cand.clear();
      grid.cells(bb, [&](size_t k) {
        for (uint32_t id : grid.bins[k]) cand.push_back(id);
      });
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
      for (uint32_t j : cand) {
        SegmentHit hit = segment_intersect(ch[i], ch[i + 1], cv.polyline[j],
                                           cv.polyline[j + 1]);
        if (!hit.hit || hit.degenerate) continue;
        if (!window.contains(hit.p)) continue;
        out.push_back(
            {hit.p, line_angle(ch[i + 1] - ch[i], tangent_at(cv, j, hit.t2))});
      }
    }
  }
  return out;
}

}  // namespace

TransversalityReport audit_tangency_transversality(
    const MapParams& p, const TangencyReport& t,
    const TransversalityOptions& opts) {
  TransversalityReport rep;
  rep.a = p.a;
  rep.b = p.b;
  rep.theta_transverse = opts.theta_transverse;
  rep.r_tube = opts.r_tube;

  Rect window = opts.window;
  if (window.width() <= 0.0 || window.height() <= 0.0) {
    double yh = std::max(0.06, 4.0 * p.sqrt_b);
    window = Rect{-1.3, 1.3, -yh, yh};
  }

  // orbit of the tangency point: exact forward, two exact backward steps,
  // then the one-dimensional backbone toward the source saddle
  {
    Point z = t.tangency_point;
    rep.tube.push_back(z);
    Point w = z;
    for (int k = 0; k < opts.tube_forward; ++k) {
      w = apply(p, w);
      if (!w.finite() || std::abs(w.x) > 4.0 || std::abs(w.y) > 4.0) break;
      rep.tube.push_back(w);
    }
    double disc = std::sqrt(1.0 + 4.0 * p.a);
    double target = (t.kind == TangencyKind::homoclinic)
                        ? (-1.0 - disc) / (2.0 * p.a)
                        : (-1.0 + disc) / (2.0 * p.a);
    std::vector<double> shadow;
    try {
      Point z1 = apply_inverse(p, z);
      Point z2 = apply_inverse(p, z1);
      rep.tube.push_back(z1);
      rep.tube.push_back(z2);
      shadow.push_back(z2.x);
    } catch (const Error&) {
      shadow.push_back(z.x);
    }
    for (int k = 0; k < opts.tube_backward; ++k) {
      double rad = (1.0 - shadow.back()) / p.a;
      if (rad < 0.0) break;
      double root = std::sqrt(rad);
      shadow.push_back(std::abs(-root - target) <= std::abs(root - target)
                           ? -root
                           : root);
    }
    for (size_t k = 0; k + 1 < shadow.size(); ++k)
      rep.tube.push_back({shadow[k], p.orientation * p.sqrt_b * shadow[k + 1]});
  }

  FixedSaddles fs = fixed_points(p);
  std::vector<std::pair<std::string, ManifoldCurve>> stables, unstables;
  for (const auto& [name, saddle] :
       {std::pair{std::string("Q"), fs.Q}, std::pair{std::string("P"), fs.P}}) {
    double expand = gen_expansion(saddle, ManifoldKind::stable);
    double seed = effective_seed(saddle, ManifoldKind::stable, 1e-7);
    double s = 1.1 * std::max(p.sqrt_b, std::abs(saddle.points[0].y));
    double span = 3.0 * (2.0 * s + std::abs(saddle.points[0].y)) /
                  std::abs(saddle.mult2.real());
    int cap = (int)std::ceil(std::log(std::max(span / seed, 10.0)) /
                             std::log(expand));
    for (int side : {+1, -1}) {
      GrowOptions gs;
      gs.side = side;
      gs.gen_cap = std::clamp(cap + opts.ws_extra_gens, 2, 12);
      gs.target_arclength = 1e30;
      gs.coarse_cap = 2e-3;  // straight strands still need dense chords here
      stables.emplace_back("stable(" + name + (side > 0 ? ")+" : ")-"),
                           grow_manifold(p, saddle, ManifoldKind::stable, gs));
      GrowOptions gu;
      gu.side = side;
      gu.target_arclength = opts.wu_target;
      gu.coarse_cap = 2e-3;
      unstables.emplace_back(
          "unstable(" + name + (side > 0 ? ")+" : ")-"),
          grow_manifold(p, saddle, ManifoldKind::unstable, gu));
    }
  }

  IntersectOptions io;
  io.theta_transverse = opts.theta_transverse;
  double min_angle = kInf, tangency_angle = kInf;

  // the unstable curves shadow one another far below polyline resolution, so
  // sweeps against different curves detect one physical crossing many times;
  // credit the first detection (distinct crossings here sit > 1e-6 apart)
  std::vector<Point> found;
  auto fresh = [&](Point q) {
    for (const Point& w : found)
      if (dist(w, q) < 1e-6) return false;
    found.push_back(q);
    return true;
  };
  auto record = [&](const std::string& sname, const std::string& uname,
                    auto&& pts, auto&& at_of, auto&& angle_of) {
    int kept = 0, excl = 0;
    double local_min = kInf;
    for (const auto& ip : pts) {
      if (!fresh(at_of(ip))) continue;
      bool in_tube = false;
      for (const Point& q : rep.tube)
        if (dist(at_of(ip), q) < opts.r_tube) { in_tube = true; break; }
      ++rep.n_intersections;
      if (in_tube) {
        ++rep.n_excluded;
        ++excl;
        tangency_angle = std::min(tangency_angle, angle_of(ip));
      } else {
        ++kept;
        local_min = std::min(local_min, angle_of(ip));
        min_angle = std::min(min_angle, angle_of(ip));
      }
    }
    if (kept + excl > 0)
      rep.pair_notes.push_back(
          sname + " x " + uname + ": " + std::to_string(kept + excl) +
          " crossings, " + std::to_string(excl) + " near the tangency orbit" +
          (kept ? ", min angle " + std::to_string(local_min) : std::string()));
  };

  for (const auto& [sname, scv] : stables)
    for (const auto& [uname, ucv] : unstables)
      record(sname, uname, find_intersections(scv, ucv, window, io),
             [](const IntersectionPoint& ip) { return ip.location; },
             [](const IntersectionPoint& ip) { return ip.angle; });

  // strands whose backward excursion leaves the escape fence never enter the
  // grown polylines; two inverse-image sweeps recover them along with the
  // near-tangency cascade (fence 12 keeps the image of every window point)
  Rect fine = window.inflated(0.05);
  for (const auto& [sname, scv] : stables) {
    std::vector<std::vector<Point>> level;
    {
      std::vector<Point> cur;
      for (size_t i = 0; i < scv.polyline.size(); ++i) {
        if (scv.chain_start[i]) {
          if (cur.size() >= 2) level.push_back(cur);
          cur.clear();
        }
        cur.push_back(scv.polyline[i]);
      }
      if (cur.size() >= 2) level.push_back(cur);
    }
    for (int order = 1; order <= 2; ++order) {
      level = inverse_chains(p, level, fine, 12.0);
      if (level.empty()) break;
      for (const auto& [uname, ucv] : unstables)
        record(sname + " pre" + std::to_string(order), uname,
               chain_curve_crossings(level, ucv, window),
               [](const ChainCross& h) { return h.at; },
               [](const ChainCross& h) { return h.angle; });
    }
  }

  rep.min_angle = min_angle;
  // the locator's contact measurement is authoritative at the tangency
  // itself; polyline detections near the orbit can only sit above it
  rep.tangency_angle = std::min(tangency_angle, t.residual_angle);
  return rep;
}

}  // namespace hbl
