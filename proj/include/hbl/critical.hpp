#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hbl/manifold.hpp"
#include "hbl/map.hpp"

namespace hbl {

// Constants steering the critical-region machinery. lambda_hat and lambda
// are fixed fractions of log 2; C0 is a sampled derivative sup over the
// working rectangle and the admissible parameter interval, never below 5.
struct AnalysisConstants {
  double lambda_hat = 0.99 * std::log(2.0);
  double lambda = 0.99 * lambda_hat;
  double alpha = 0.01;
  double delta = 0.1;
  double C0 = 5.0;
  double kappa0 = std::pow(C0, -10.0);

  // invariants: 0 < alpha < lambda < lambda_hat < log 2, delta in (0,1),
  // kappa0 in (0,1)
  bool valid() const;

  static AnalysisConstants make(const MapParams& p, double delta = 0.1);
};

// operational stand-in for the trapping region: a slab slightly wider than
// the measured region box, tall enough to hold both fixed points
Rect critical_domain(const MapParams& p);

// the critical strip: inside the domain with |x| < delta
bool in_critical_region(const MapParams& p, const AnalysisConstants& k,
                        Point z);

struct CurveClassVerdict {
  bool is_C2b = false;     // slopes and curvature both at most sqrt(b)
  bool is_h_curve = false; // slopes at most sqrt(b), curvature at most 1
  double max_slope = 0.0;
  double max_curvature = 0.0;
};

// finite-difference slopes per segment, Menger curvature per vertex triple
CurveClassVerdict classify_curve(std::span<const Point> poly, double b);

struct OutsideExpansionReport {
  int n = 0;
  double min_growth = 0.0;   // min over the slope cone of |Df^n v| / |v|
  double required = 0.0;     // delta * exp(lambda_hat * n)
  double required_inside = 0.0;  // exp(lambda_hat * n), binding when the
                                 // endpoint lands in the critical strip
  bool ends_inside = false;
  double worst_slope = 0.0;  // max slope of the pushed cone vectors
  bool slope_ok = false;
  bool pass = false;
};

// verifies the uniform expansion estimate for an orbit segment that stays
// outside the critical strip; throws naming the offending step otherwise
OutsideExpansionReport check_outside_expansion(const MapParams& p,
                                               const AnalysisConstants& k,
                                               Point z, int n);

struct CriticalPointApprox {
  int order = 0;
  Point location;
  size_t segment_id = 0;
  Vec2 tangent;  // unit tangent of the host arc at the location
  // angle between the image tangent and the most contracted direction of
  // the one-step derivative at the image point. At a fold the image curve
  // turns along that direction, so this vanishes with the arc spacing
  double alignment_residual = 0.0;
  std::vector<double> expansion_tangent;  // |Df^k u| along the image tangent
  std::vector<double> expansion_matrix;   // full one-to-k step matrix norms
  bool expansion_ok = false;              // every tangent entry at least 1
};

// locates the unique interior minimum of log |Df^n t(s)| along the arc,
// then verifies the order conditions a posteriori. The arc must classify
// as flat and lie inside the critical strip.
CriticalPointApprox find_critical_point(const MapParams& p,
                                        const AnalysisConstants& k,
                                        std::span<const Point> segment,
                                        int order, size_t segment_id = 0);

// smallest p >= 1 with |Df^p t| >= exp(lambda p / 3) and the pushed slope
// back under sqrt(b); throws on escape or when the cap is hit
long bound_period(const MapParams& p, const AnalysisConstants& k, Point x,
                  Vec2 t, long cap = 10000);

// critical points of orders 1..max_order on the flat unstable arcs inside
// the critical strip, shared read-only between decompositions
struct CriticalCache {
  AnalysisConstants consts;
  int max_order = 0;
  std::vector<std::vector<Point>> arcs;

  struct Entry {
    int order = 0;
    Point zeta;
    Vec2 tangent;
    size_t arc = 0;
  };
  std::vector<Entry> points;  // sorted by order, then arc

  // deepest k <= k_hi with an order-k point whose host arc passes within
  // vertical distance 10 b^(k/2) of z; picks the horizontally nearest entry
  const Entry* deepest_near(Point z, double b, int k_hi) const;
};

CriticalCache build_critical_cache(const MapParams& p,
                                   const AnalysisConstants& k,
                                   const ManifoldCurve& wu,
                                   int max_order = 30);

struct ReturnEvent {
  long n = 0;  // free return time into the critical strip
  int k = 0;   // pairing depth
  long p = 0;  // bound period issued at this return
};

struct BoundFreeDecomposition {
  Point x0;
  long horizon = 0;
  std::vector<ReturnEvent> returns;
  // close-return clocks, each measured from the previous reset point
  std::vector<long> close_returns;
  long controlled_up_to = 0;  // first close return, or the horizon
  enum class Verdict { controlled, close_return } verdict = Verdict::controlled;
};

// the inductive bound/free construction over a finite horizon; close
// returns reset the clock and the construction carries on behind them
BoundFreeDecomposition decompose_orbit(const MapParams& p,
                                       const AnalysisConstants& k,
                                       const CriticalCache& cache, Point x,
                                       long horizon);

struct SegmentLemmaReport {
  long nu = 0;
  long n = 0;
  double initial_length = 0.0;
  double final_length = 0.0;
  double bound = 0.0;  // delta^(nu/3)
  bool stayed_inside = false;
  bool pass = false;
};

// iterates a short curve with chordwise refinement and checks that the
// image stays in the domain and remains shorter than delta^(nu/3)
SegmentLemmaReport check_segment_lemma(const MapParams& p,
                                       const AnalysisConstants& k,
                                       std::span<const Point> ell, long nu,
                                       long n);

}  // namespace hbl
