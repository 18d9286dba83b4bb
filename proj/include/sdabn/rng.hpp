#pragma once

#include <cmath>
#include <cstdint>

namespace sdabn {

/// SplitMix64 finalizer. Used both as the mixing step of the counter stream
/// and as the seed-derivation hash throughout the project.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and one or two
/// substream labels (sample index, epoch, stage id ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
    return mix64(seed ^ mix64(a));
}
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(derive_seed(seed, a) ^ mix64(b ^ 0x5851f42d4c957f2dull));
}

/// Counter-based 64-bit generator: output k of stream s is
/// mix64(s + k * 0x9e3779b97f4a7c15). The stream is stateless apart from the
/// counter, so any element can be drawn independently and the sequence is
/// identical on every platform.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t next_u64() { return at(counter_++); }

    /// Random draw k of this stream without advancing the cursor.
    std::uint64_t at(std::uint64_t k) const {
        return mix64(seed_ + k * 0x9e3779b97f4a7c15ull);
    }

    /// Uniform double in [0, 1).
    double next_double() { return to_unit(next_u64()); }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double next_double_open() { return to_unit_open(next_u64()); }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(next_double() * static_cast<double>(n)) % n;
    }

    /// Standard normal via Box-Muller on two consecutive counter outputs.
    double next_normal() {
        const double u1 = next_double_open();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t counter() const { return counter_; }

    static double to_unit(std::uint64_t x) {
        return static_cast<double>(x >> 11) * 0x1.0p-53;
    }
    static double to_unit_open(std::uint64_t x) {
        return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// FNV-1a over raw bytes; used for parameter digests and config digests.
inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace sdabn
