#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sidforge {

/// Purposes that own an independent random stream. Adding a new purpose
/// must append, never reorder, so existing streams stay stable.
enum class Stream : std::uint64_t {
  kCatalogCenters = 1,
  kCatalogItems = 2,
  kInteractions = 3,
  kKMeansSeeding = 4,
  kCorpus = 5,
  kProbeSplit = 6,
  kTesting = 7,
  kLookAlikeGroups = 8,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: output n is a pure function of
/// (seed, stream, substream, n). Two generators with different keys never
/// share state, so e.g. per-user streams are unaffected by catalog size.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0) noexcept
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^
                        substream)) {}

  std::uint64_t next() noexcept { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sidforge
