#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace trd {

// Deterministic RNG wrapper. Distributions are implemented here (Box-Muller
// for normals) instead of <random>'s, so sequences do not depend on the
// standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }
    double normal(double mu, double sigma) { return mu + sigma * normal(); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable stream derivation: sub-seeds depend only on (base, tag), never on
// call order, so adding modules does not shift unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ base;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index) {
    return derive_seed(derive_seed(base, tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1)), tag);
}

}  // namespace trd
