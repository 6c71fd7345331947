#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace lesa {

// Counter-based deterministic generator (splitmix64). The draw sequence for
// a given seed is identical on every platform, which is what makes
// seed-pinned runs reproducible; std:: distributions are not portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 24-bit resolution.
  float uniform() {
    return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
  }

  // Box-Muller; consumes two uniform draws per call.
  float normal(float mean = 0.0f, float stddev = 1.0f) {
    const double u1 = 1.0 - static_cast<double>(uniform());  // (0, 1]
    const double u2 = static_cast<double>(uniform());
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double z = r * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * static_cast<float>(z);
  }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<__uint128_t>(next_u64()) *
                             static_cast<std::uint64_t>(n)) >>
                            64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace lesa
