#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace hsifsl {

/// Deterministic random stream. Wraps mt19937_64 (whose output sequence is
/// fixed by the standard) and implements its own distributions, so identical
/// seeds give identical draws on every platform and standard library.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Unbiased integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n + 1) % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v > limit);
        return v % n;
    }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double next_uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform();
    }

    /// Standard normal via Box-Muller (polar form avoided to keep the
    /// consumption of engine outputs fixed at two per pair).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        // u1 = 0 would take log(0); nudge to the smallest representable draw.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double next_normal(double mean, double stddev) {
        return mean + stddev * next_normal();
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i)
            std::swap(first[i - 1], first[next_below(i)]);
    }

    /// Derives an independent child stream; advances this stream by one draw.
    Rng split() {
        const std::uint64_t s = mix(engine_());
        return Rng(s);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        // the spare travels as its bit pattern so the round-trip is exact
        os << " " << (have_spare_ ? 1 : 0) << " "
           << std::bit_cast<std::uint64_t>(spare_);
        return os.str();
    }

    static Rng deserialize(const std::string& s) {
        Rng r;
        std::istringstream is(s);
        is >> r.engine_;
        int flag = 0;
        std::uint64_t bits = 0;
        is >> flag >> bits;
        r.spare_ = std::bit_cast<double>(bits);
        r.have_spare_ = (flag != 0);
        return r;
    }

    bool operator==(const Rng& other) const {
        return engine_ == other.engine_ && have_spare_ == other.have_spare_ &&
               (!have_spare_ || spare_ == other.spare_);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace hsifsl
