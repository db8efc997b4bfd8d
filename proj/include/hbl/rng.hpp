#pragma once

#include <cstdint>

namespace hbl {

// Counter-based generator: value = hash(seed, stream, counter). Stateless draws,
// so parallel consumers can index into disjoint streams and results do not
// depend on evaluation order.
struct Rng {
  uint64_t seed = 0;
  uint64_t stream = 0;

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t bits(uint64_t counter) const {
    uint64_t h = mix(seed ^ 0x243f6a8885a308d3ULL);
    h = mix(h ^ stream);
    return mix(h ^ counter);
  }

  // uniform in [0,1)
  double uniform(uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // uniform in [lo,hi)
  double uniform(uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  Rng substream(uint64_t s) const { return {seed, mix(stream ^ s)}; }
};

}  // namespace hbl
