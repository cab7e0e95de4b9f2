#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace sorex {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with a sequence of tags (user id, epoch, pass, ...) into
/// an independent stream seed. Order of tags matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

// Stream purposes, used as the first tag so streams never collide.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kInitInteraction = 2;
inline constexpr std::uint64_t kInitSocial = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kNegatives = 5;
inline constexpr std::uint64_t kWalks = 6;
inline constexpr std::uint64_t kDraws = 7;
inline constexpr std::uint64_t kFriends = 8;
inline constexpr std::uint64_t kValNegatives = 9;
inline constexpr std::uint64_t kEvalWalks = 10;
inline constexpr std::uint64_t kEvalDraws = 11;
inline constexpr std::uint64_t kRandomRemoval = 12;
inline constexpr std::uint64_t kAnalysis = 13;
}  // namespace stream

/// Uniform double in [0, 1) from the top 53 bits; identical across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in the open interval (0, 1).
inline double uniform_open01(Rng& rng) {
  double u;
  do {
    u = uniform01(rng);
  } while (u == 0.0);
  return u;
}

/// Unbiased uniform integer in [0, bound) by rejection. bound > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Logistic noise log(u) - log(1 - u), the difference of two Gumbel variates.
inline double logistic_noise(Rng& rng) {
  const double u = uniform_open01(rng);
  return std::log(u) - std::log1p(-u);
}

/// Fisher-Yates shuffle using uniform_below, so orderings do not depend on
/// the standard library's distribution implementations.
template <typename Range>
void shuffle(Range& range, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(range.size());
  for (std::uint64_t i = n; i > 1; --i) {
    const std::uint64_t j = uniform_below(rng, i);
    using std::swap;
    swap(range[i - 1], range[j]);
  }
}

}  // namespace sorex
