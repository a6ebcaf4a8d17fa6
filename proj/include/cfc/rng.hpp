#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cfc {

/// Named substream identifiers; a master seed plus an id define a stream.
enum class Stream : std::uint64_t {
  ProcessNoise = 1,
  MeasurementNoise = 2,
  MonteCarlo = 3,
  Particles = 4,
  InitJitter = 5,
};

/// Deterministic Gaussian/uniform stream.
///
/// Substreams are derived from one master seed by fixed offsets (splitmix64
/// over seed and stream id), and normal variates use an explicit Box-Muller
/// transform of the uniform bits, so a run is reproducible within this
/// implementation regardless of standard-library distribution details.
class SeededStream {
 public:
  SeededStream(std::uint64_t master_seed, Stream id)
      : engine_(mix(master_seed, static_cast<std::uint64_t>(id))) {}

  /// Uniform double in (0, 1].
  double uniform() {
    const std::uint64_t bits = engine_();
    return (double(bits >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t raw() { return engine_(); }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t id) {
    // splitmix64 of (seed advanced id times) — distinct, well-separated states
    std::uint64_t x = seed + 0x9E3779B97F4A7C15ull * (id + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cfc
