#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace r3 {

// Seedable, splittable 64-bit generator. Child streams are derived from the
// parent seed and a stream name, so adding a new consumer never perturbs the
// draws of existing ones.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    Rng stream(std::string_view name) const { return Rng(mix(seed_ ^ fnv1a(name))); }
    Rng stream(std::uint64_t index) const { return Rng(mix(seed_ + 0x9e3779b97f4a7c15ULL * (index + 1))); }

    std::uint64_t operator()() { return engine_(); }
    static constexpr std::uint64_t min() { return std::mt19937_64::min(); }
    static constexpr std::uint64_t max() { return std::mt19937_64::max(); }

    // Uniform in [0, 1) with 53 random bits; independent of the standard
    // library's distribution implementations.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace r3
