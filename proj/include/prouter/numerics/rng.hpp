#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace prouter {

// Seeded generator with portable derived draws. The standard distributions are
// implementation-defined, so uniform, normal and shuffle are done by hand to
// keep generated files identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), rejection-sampled.
  std::uint64_t index(std::uint64_t n);
  // Box-Muller standard normal.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a, 64-bit.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes,
                                    std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
[[nodiscard]] std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                                    std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
// Mixes two 64-bit values (splitmix64 finalizer over a ^ rotated b).
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace prouter
