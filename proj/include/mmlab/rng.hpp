#pragma once

#include <cstdint>
#include <vector>

namespace mmlab {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator keyed by (seed, stream_a, stream_b).  Streams with
// distinct keys are independent, so parallel and serial runs produce
// bit-identical draws regardless of scheduling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream_a = 0,
                      std::uint64_t stream_b = 0) {
    std::uint64_t s = seed;
    std::uint64_t k = detail::splitmix64(s);
    s = k ^ (stream_a * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull);
    k = detail::splitmix64(s);
    s = k ^ (stream_b * 0xA24BAED4963EE407ull + 0x9FB21C651E98DF25ull);
    state_ = detail::splitmix64(s);
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform on [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., bound-1} by rejection (unbiased, deterministic).
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    std::uint64_t threshold = (0ull - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  // Index sampled from an unnormalized nonnegative weight vector.
  std::size_t next_categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace mmlab
