#pragma once

#include <cstdint>
#include <random>

namespace raresim {

// splitmix64 finalizer; used to turn seed material into substream keys.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded stream of random numbers with cheap, collision-resistant substream
// derivation. Replication i always draws from substream(i) of the experiment
// stream, so results do not depend on execution order or worker count.
class RngStream {
 public:
  static RngStream root(std::uint64_t seed) { return RngStream(mix64(seed)); }

  RngStream substream(std::uint64_t index) const {
    return RngStream(mix64(key_ ^ mix64(index + 0x517cc1b727220a95ULL)));
  }
  RngStream substream(std::uint64_t a, std::uint64_t b) const {
    return substream(a).substream(b);
  }

  // uniform double in [0, 1), 53 random bits
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next() { return engine_(); }

  // uniform integer in [0, n); n must be positive (modulo bias is fine for
  // the test-corpus use this has)
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  std::uint64_t key() const { return key_; }

 private:
  explicit RngStream(std::uint64_t key) : engine_(key), key_(key) {}

  std::mt19937_64 engine_;
  std::uint64_t key_;
};

}  // namespace raresim
