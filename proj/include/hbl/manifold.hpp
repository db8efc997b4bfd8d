#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hbl/map.hpp"
#include "hbl/periodic.hpp"

namespace hbl {

enum class ManifoldKind { stable, unstable };

const char* to_string(ManifoldKind k);

struct GrowOptions {
  int side = +1;                  // branch along +eigenvector or -eigenvector
  double target_arclength = 0.0;  // 0: 50 for unstable curves, 20 for stable ones
  double h_max = 1e-3;            // spacing bound inside the clip window
  double theta_max = 0.02;        // turn bound at a vertex (radians)
  double coarse_cap = 0.25;       // baseline spacing near the clip window
  double seed_offset = 1e-7;      // distance of the seed from the saddle
  int gen_cap = 40;
  double escape_radius = 1e6;     // beyond this a vertex is marked invalid
  Rect clip = kWorkingRect;       // refinement and length accounting happen here
  size_t max_vertices = 400000;
};

// gen/t locate a vertex exactly: position = step^gen(lerp(seed0, seed1, t)).
// gen == -1 is the saddle anchor itself.
struct ManifoldVertex {
  int gen = 0;
  double t = 0.0;
  Point pos;
  bool valid = true;
};

struct ManifoldCurve {
  MapParams params;
  PeriodicOrbit saddle;
  ManifoldKind kind = ManifoldKind::unstable;
  int side = +1;
  int step_order = 1;  // map applications per generation step
  Point seed0, seed1;  // fundamental domain endpoints
  Vec2 eig_dir;        // unit eigenvector used for seeding

  std::vector<ManifoldVertex> verts;  // in curve order, saddle anchor first

  // valid vertices only, in curve order; arclen is cumulative and does not
  // advance across a chain break
  std::vector<Point> polyline;
  std::vector<double> arclen;
  std::vector<uint8_t> chain_start;  // 1: no connection to the previous point
  std::vector<size_t> poly_vert;     // polyline index -> verts index

  int generations = 0;
  double clip_length = 0.0;
  size_t refined = 0;
  bool budget_hit = false;
  GrowOptions opts;

  // exact parametric point; throws if the point leaves the escape radius
  Point eval(int gen, double t) const;
  std::optional<Point> try_eval(int gen, double t) const;

  // segment i is polyline[i] -> polyline[i+1]; params are expressed in the
  // generation of the right-hand vertex
  struct SegParam {
    int gen = 0;
    double t0 = 0.0, t1 = 0.0;
  };
  SegParam seg_param(size_t i) const;
  bool seg_connected(size_t i) const {
    return i + 1 < polyline.size() && !chain_start[i + 1];
  }
};

ManifoldCurve grow_manifold(const MapParams& p, const PeriodicOrbit& saddle,
                            ManifoldKind kind, const GrowOptions& opts = {});

struct IntersectionPoint {
  Point location;
  double angle = 0.0;  // between tangents, radians in [0, pi/2]
  double s_param = 0.0;  // arclength along the first curve
  double u_param = 0.0;  // arclength along the second curve
  bool transverse = false;
  bool degenerate_overlap = false;
};

struct IntersectOptions {
  double theta_transverse = 1e-4;
  double saddle_exclusion = 1e-6;
  double dedup_tol = 1e-9;
};

std::vector<IntersectionPoint> find_intersections(const ManifoldCurve& c1,
                                                  const ManifoldCurve& c2,
                                                  const Rect& window,
                                                  const IntersectOptions& opts = {});

// local extremum of x along the curve, refined in parameter space
struct FoldTip {
  Point pos;
  int gen = 0;
  double t = 0.0;
  double arclen = 0.0;
  int sense = +1;  // +1: local maximum of x, -1: local minimum
};

std::vector<FoldTip> find_fold_tips(const ManifoldCurve& c, const Rect& window);

// the two stable branches of a saddle together with the arcs they cut out of
// the horizontal strip |y| <= strip_half: the leaf through the saddle and the
// first preimage strand on the positive side
struct StripStrand {
  int branch = +1;        // which branch curve carries it
  size_t p_lo = 0, p_hi = 0;  // polyline index range [p_lo, p_hi]
  Point entry, exit;      // strip boundary points, bottom and top
  double x_mean = 0.0;
};

struct StripArcs {
  ManifoldCurve branch_pos, branch_neg;
  StripStrand left_lower, left_upper;  // leaf through the saddle, split there
  StripStrand right;                   // preimage strand near x = sqrt(2/a)
  double strip_half = 0.0;

  const ManifoldCurve& curve(int branch) const {
    return branch > 0 ? branch_pos : branch_neg;
  }
  // x-coordinate of a strand at height y (parametric root, not a chord cut)
  double strand_x_at(const StripStrand& s, double y) const;
  // dense polyline of a strand from y_lo to y_hi
  std::vector<Point> strand_points(const StripStrand& s, double y_lo, double y_hi,
                                   double max_dy) const;
};

struct StripOptions {
  double strip_scale = 1.1;  // half height = strip_scale * max(sqrt(b), |y_saddle|)
  int extra_gens = 0;        // grow past the first preimage strand
  GrowOptions grow;          // side/target are managed internally
};

StripArcs stable_strip_arcs(const MapParams& p, const PeriodicOrbit& saddle,
                            const StripOptions& opts = {});

enum class TangencyKind { homoclinic, heteroclinic };
const char* to_string(TangencyKind k);

struct TangencyOptions {
  std::pair<double, double> bracket{1.7, 2.4};
  double bracket_tol = 1e-6;   // reported bracket width
  double gap_floor = 5e-13;    // numerical floor for the gap refinement target
  int max_bisect = 80;
  double wu_target = 14.0;     // in-clip arclength for the unstable growth
  int wu_gen_cap = 26;
  double h_max = 1e-3;
  double theta_max = 0.02;
  double theta_transverse = 1e-4;
  bool check_rival = true;     // evaluate the other saddle's folds at the answer
};

struct TangencyReport {
  double b = 0.0;
  int orientation = +1;
  double a_star = 0.0;
  double bracket_width = 0.0;
  TangencyKind kind = TangencyKind::homoclinic;
  Point tangency_point;   // preimage of the contact, lands near the origin
  Point contact_point;    // where the fold meets the stable arc, near (1, 0)
  double residual_angle = 0.0;  // between the two tangents at the contact
  double gap = 0.0;             // signed penetration of the fold at a_star
  double second_gap = 0.0;      // runner-up fold on the same manifold
  double rival_gap = 0.0;       // best fold of the other saddle's manifold
  bool rival_crossed_first = false;
  int evaluations = 0;
};

// signed penetration of the deepest fold of the designated unstable manifold
// through the right stable strip arc; negative when separated
double tangency_gap(const MapParams& p, const TangencyOptions& opts = {});

TangencyReport locate_first_tangency(double b, int orientation,
                                     const TangencyOptions& opts = {});

struct RegionOptions {
  double strip_scale = 1.1;
  double h_max = 1e-3;
  double theta_max = 0.02;
  double coarse_cap = 2e-3;  // region boundary arcs need dense chords
  double wu_target = 12.0;
  int wu_gen_cap = 26;
};

struct TrappingRegion {
  std::vector<Point> boundary;  // closed polyline, back() == front()
  std::vector<Point> stable_left, stable_right;   // pieces of the strip arcs
  std::vector<Point> unstable_out, unstable_back; // spanning arc and its return
  std::vector<Point> corners;   // saddle, fold entry, fold exit, return
  Rect bbox;

  bool contains(Point z) const;           // even-odd crossing rule
  double boundary_distance(Point z) const;
};

TrappingRegion build_trapping_region(const MapParams& p, const RegionOptions& opts = {});

struct RegionEscapeStats {
  int sampled = 0;   // images left the region by more than the margin
  int boundary = 0;  // images left it by less: too close to call
  int returned = 0;  // of the sampled, how many re-enter within the horizon
  int horizon = 0;
  double exit_margin = 0.0;
};

RegionEscapeStats region_escape_check(const MapParams& p, const TrappingRegion& r,
                                      int n_samples, int horizon, uint64_t seed,
                                      double exit_margin = 1e-5);

struct TransversalityOptions {
  Rect window{0.0, 0.0, 0.0, 0.0};  // zero area: auto from b
  double r_tube = 1e-2;             // exclusion radius around the tangency orbit
  double theta_transverse = 1e-4;
  double wu_target = 50.0;
  int ws_extra_gens = 1;
  int tube_backward = 30;
  int tube_forward = 60;
};

struct TransversalityReport {
  double a = 0.0, b = 0.0;
  int n_intersections = 0;
  int n_excluded = 0;
  double min_angle = 0.0;       // over intersections outside the tube
  double tangency_angle = 0.0;  // smallest angle inside the tube
  double theta_transverse = 0.0;
  double r_tube = 0.0;
  std::vector<Point> tube;
  std::vector<std::string> pair_notes;

  bool pass() const { return n_intersections == n_excluded || min_angle > theta_transverse; }
};

TransversalityReport audit_tangency_transversality(const MapParams& p,
                                                   const TangencyReport& t,
                                                   const TransversalityOptions& opts = {});

}  // namespace hbl
