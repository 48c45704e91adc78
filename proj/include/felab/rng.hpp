#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace felab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed and a role tag.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t role) {
    return splitmix64(master ^ splitmix64(role + 0x51ed2701ULL));
}

// Deterministic RNG used everywhere. Normal draws go through an explicit
// Box-Muller so sequences do not depend on the C++ library's
// std::normal_distribution implementation. State is just the mt19937_64
// engine, which serializes portably as text.
class Rng {
public:
    Rng() : engine_(0x5eedULL) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Deterministic; negligible modulo-free bias.
    std::size_t uniform_index(std::size_t n) {
        std::size_t i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i >= n ? n - 1 : i;
    }

    double normal() {
        // Box-Muller, no cached spare so the state stays serializable.
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Standard normal conditioned on |value| <= bound, by rejection.
    double truncated_normal(double bound) {
        for (;;) {
            double v = normal();
            if (v >= -bound && v <= bound) return v;
        }
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace felab
