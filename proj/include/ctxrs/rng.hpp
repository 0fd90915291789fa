#ifndef CTXRS_RNG_HPP
#define CTXRS_RNG_HPP

#include <cmath>
#include <cstdint>

namespace ctxrs {

/// Deterministic counter-free PRNG with cheap stream splitting.
///
/// Streams are derived from a root seed and up to three stream ids by
/// repeated splitmix64 mixing, so every (replication, design, context)
/// tuple owns an independent stream regardless of scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Derive an independent stream from a root seed and stream ids.
    static Rng stream(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t s = mix(root);
        s = mix(s ^ mix(a + 0x1234567));
        s = mix(s ^ mix(b + 0x89abcdef));
        s = mix(s ^ mix(c + 0xfedcba98));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in (0, 1); never returns exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (first coordinate only, stateless).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) { return next_u64() % bound; }

private:
    std::uint64_t state_;
};

} // namespace ctxrs

#endif
