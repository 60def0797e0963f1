#ifndef COMPANDER_RNG_HPP
#define COMPANDER_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace compander {

namespace detail {

// splitmix64 finalizer; full 64-bit avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based 64-bit generator. A stream is identified by
/// (seed, tag0, tag1, tag2); the i-th draw is a pure function of the
/// stream key and i. Distinct phases of a run (init, split, shuffle,
/// data synthesis) take distinct tags, so streams never interleave and
/// resuming a run needs no generator state.
///
/// Tag conventions used by the training harness:
///   (seed, INIT,    param_index)  parameter initialization
///   (seed, SPLIT)                 train/validation split shuffle
///   (seed, SHUFFLE, epoch)        mini-batch order for one epoch
///   (seed, SUBSET)                dataset subset sampling
///   (seed, SYNTH,   role)         synthetic dataset generation
class StreamRng {
 public:
  enum Tag : std::uint64_t {
    kInit = 1,
    kSplit = 2,
    kShuffle = 3,
    kSubset = 4,
    kSynth = 5,
  };

  explicit StreamRng(std::uint64_t seed, std::uint64_t tag0 = 0, std::uint64_t tag1 = 0,
                     std::uint64_t tag2 = 0) {
    std::uint64_t k = detail::mix64(seed);
    k = detail::mix64(k ^ detail::mix64(tag0 + 0x1000));
    k = detail::mix64(k ^ detail::mix64(tag1 + 0x2000));
    k = detail::mix64(k ^ detail::mix64(tag2 + 0x3000));
    key_ = k;
  }

  std::uint64_t next_u64() { return detail::mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  /// Uniform in [0, 1), 53 mantissa bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // (0, 1] for the log argument
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  /// k distinct indices from [0, n), order randomized (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace compander

#endif  // COMPANDER_RNG_HPP
