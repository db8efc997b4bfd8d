#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hbl/map.hpp"
#include "hbl/periodic.hpp"

namespace hbl {

struct ExponentEstimate {
  double chi_u = 0.0;
  double chi_s = 0.0;
  long n_steps = 0;
  // running (chi_s, chi_u) snapshots every 1000 accumulated steps
  std::vector<std::pair<double, double>> history;
  bool converged = false;   // last two snapshots within 1e-7
  bool short_run = false;   // n < 100
};

// QR cocycle along the forward orbit of z. A short alignment warmup runs
// first so the leading frame vector enters the expanding direction before
// accumulation starts. Throws EscapeError if the orbit leaves rect.
ExponentEstimate qr_exponents(const MapParams& p, Point z, long n,
                              const Rect& rect = kWorkingRect);

// Same cocycle driven cyclically through the stored points of a periodic
// orbit. Per-period increments are measured until they stabilize, so the
// result matches the multiplier logs of the cycle to rounding.
ExponentEstimate qr_exponents_cycle(const MapParams& p, const PeriodicOrbit& o);

struct UnstableDirection {
  Point base;
  Vec2 direction;      // unit, normalized to x >= 0
  int pullback_depth = 0;
  double residual = 0.0;  // angle change between the last two depths
  bool converged = false;
};

// Pulls z back while the computed preimages stay inside rect, then pushes a
// generic vector forward again with per-step renormalization. Depths follow
// a doubling schedule capped by both `depth` and backward feasibility.
UnstableDirection estimate_Eu(const MapParams& p, Point z, int depth = 4096,
                              const Rect& rect = kWorkingRect);

struct ExponentViolation {
  int period = 0;
  Point representative;
  double chi_s = 0.0;
  double chi_u = 0.0;
  double margin_u = 0.0;  // chi_u - chi_u_floor
  double margin_s = 0.0;  // chi_s_ceiling - chi_s
  std::string reason;
};

struct ExponentAudit {
  double a = 0.0;
  double b = 0.0;
  int n_orbits = 0;
  double chi_u_floor = 0.0;    // (1/4) log 2
  double chi_s_ceiling = 0.0;  // (1/3) log b
  double min_chi_u = 0.0;
  double max_chi_s = 0.0;
  std::vector<ExponentViolation> violations;
  std::string note;
  bool pass() const { return violations.empty(); }
};

// Checks every enumerated cycle against the exponent bars: the unstable
// exponent must clear (1/4) log 2 and the stable exponent must sit below
// (1/3) log b. Exponents come from the stored multipliers.
ExponentAudit audit_exponent_bounds(const MapParams& p,
                                    const std::vector<PeriodicOrbit>& orbits);

}  // namespace hbl
