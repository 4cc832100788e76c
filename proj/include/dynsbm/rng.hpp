#pragma once

#include <cstdint>
#include <vector>

namespace dynsbm {

// Counter-based splittable RNG built on the SplitMix64 finalizer.
// Every random quantity in the project is drawn from a substream keyed by
// a (seed, tag, indices...) tuple, so parallel and serial generation of the
// same objects are bit-identical and independent of evaluation order.
//
// Substream conventions:
//   kStreamLatent : one stream per node i            -> key(seed, kStreamLatent, i)
//   kStreamEdge   : one value per (t, i<j) edge slot -> key(seed, kStreamEdge, t, i, j)
//   kStreamInit   : variational initialisation       -> key(seed, kStreamInit, restart)
//   kStreamSearch : optimizer restarts               -> key(seed, kStreamSearch, restart)
//   kStreamReplicate : experiment replicates         -> key(seed, kStreamReplicate, cell, rep)

inline constexpr std::uint64_t kStreamLatent = 1;
inline constexpr std::uint64_t kStreamEdge = 2;
inline constexpr std::uint64_t kStreamInit = 3;
inline constexpr std::uint64_t kStreamSearch = 4;
inline constexpr std::uint64_t kStreamReplicate = 5;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t a) {
  return splitmix64(stream_key(seed, tag) ^ splitmix64(a + 0x4F1BBCDCBFA53E0AULL));
}
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                                std::uint64_t b) {
  return splitmix64(stream_key(seed, tag, a) ^ splitmix64(b + 0x2545F4914F6CDD1DULL));
}
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                                std::uint64_t b, std::uint64_t c) {
  return splitmix64(stream_key(seed, tag, a, b) ^ splitmix64(c + 0x9FB21C651E98DF25ULL));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() { return splitmix64(state_ += 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Index into a probability vector by inverse-CDF walk.
  int next_categorical(const std::vector<double>& probs) {
    double u = next_double();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
  }

 private:
  std::uint64_t state_;
};

// Single uniform draw for a keyed slot, used for the per-edge streams where
// instantiating an engine per edge would be wasteful.
inline double uniform_at(std::uint64_t key) {
  return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

}  // namespace dynsbm
