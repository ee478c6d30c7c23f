#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sast/geometry.hpp"

namespace sast {

/// Seeded generator with hand-rolled value mappings. std::mt19937_64 output
/// is standardized but the std distributions are not, so all mappings here
/// are explicit to keep sequences identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    // masked rejection keeps the draw unbiased and the sequence deterministic
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
      const std::uint64_t v = next_u64() & mask;
      if (v < n) return v;
    }
  }

  Vec3 point_in(const Aabb& box) {
    return {uniform(box.min.x, box.max.x), uniform(box.min.y, box.max.y),
            uniform(box.min.z, box.max.z)};
  }

  /// Uniform rotation (Shoemake subgroup method).
  Quat rotation() {
    const double u1 = uniform();
    const double u2 = uniform() * 2.0 * M_PI;
    const double u3 = uniform() * 2.0 * M_PI;
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    return Quat{a * std::sin(u2), a * std::cos(u2), b * std::sin(u3), b * std::cos(u3)}
        .normalized();
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derives an independent stream seed; splitmix64 finalizer over the pair.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sast
