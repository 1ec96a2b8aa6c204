#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "relight/types.hpp"

namespace relight {

// Counter-free deterministic generator (splitmix64). Every consumer derives
// its own stream from (seed, stream_id) so that checkpoint/resume and
// re-runs see identical random sequences without saving generator state.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : state_(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1))) {
    next_u64();  // decorrelate nearby seeds
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Box-Muller; no cached second value so the stream stays stateless-ish.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    u1 = std::max(u1, 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 unit_vector() {
    // Marsaglia-free: z uniform in [-1,1], azimuth uniform
    double z = uniform(-1.0, 1.0);
    double phi = uniform(0.0, 2.0 * M_PI);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

  Vec3 in_ball(double radius) {
    double r = radius * std::cbrt(uniform());
    return r * unit_vector();
  }

  // Fisher-Yates; deterministic for a given stream position.
  std::vector<uint32_t> permutation(uint32_t n) {
    std::vector<uint32_t> p(n);
    std::iota(p.begin(), p.end(), 0u);
    for (uint32_t i = n; i > 1; --i) {
      uint32_t j = uint32_t(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  uint64_t state_;
};

// Stream ids so independent consumers never collide on (seed, stream).
namespace rng_stream {
inline constexpr uint64_t kInit = 1;        // initial gaussians + networks
inline constexpr uint64_t kEpoch = 2;       // per-epoch view permutation
inline constexpr uint64_t kDensify = 3;     // split sampling
inline constexpr uint64_t kStage2 = 4;      // decoder re-init at stage switch
inline constexpr uint64_t kDataset = 5;     // camera/light sampling
}  // namespace rng_stream

}  // namespace relight
