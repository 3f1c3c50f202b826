#pragma once

#include <cstdint>
#include <limits>

namespace uhmc {

/// SplitMix64 bit generator. Satisfies UniformRandomBitGenerator, so it
/// plugs straight into the <random> distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

}  // namespace detail

/// Address of one random stream: every draw in the toolkit is a pure
/// function of (seed, chain, transition, stage). Two chains that share a
/// chain id see identical noise, which is how synchronous coupling works;
/// replicas use distinct chain ids and can run on any thread.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t chain = 0;
  std::uint64_t transition = 0;
  std::uint64_t stage = 0;

  constexpr std::uint64_t hash() const noexcept {
    std::uint64_t h = detail::mix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = detail::combine(h, chain);
    h = detail::combine(h, transition);
    return detail::combine(h, stage);
  }

  SplitMix64 engine() const noexcept { return SplitMix64(hash()); }
};

/// Per-chain cursor over the keyed streams. Each call to advance() moves to
/// the next transition index; stage(s) hands out the generator for the s-th
/// random input of the current transition.
class ChainRng {
 public:
  constexpr ChainRng(std::uint64_t seed, std::uint64_t chain) noexcept
      : seed_(seed), chain_(chain) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t chain() const noexcept { return chain_; }
  constexpr std::uint64_t transition() const noexcept { return transition_; }

  SplitMix64 stage(std::uint64_t s) const noexcept {
    return StreamKey{seed_, chain_, transition_, s}.engine();
  }

  constexpr void advance() noexcept { ++transition_; }

 private:
  std::uint64_t seed_;
  std::uint64_t chain_;
  std::uint64_t transition_ = 0;
};

}  // namespace uhmc
