#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dirlearn {

// Deterministic random source. All randomized operations in the library draw
// through this wrapper so that results are a pure function of the seed; the
// distribution transforms are implemented here because the std:: ones are
// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    // Standard normal, Box-Muller with one cached draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * 3.14159265358979323846 * u2;
        spare_ = mag * std::sin(ang);
        has_spare_ = true;
        return mag * std::cos(ang);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Poisson by inversion of the product of uniforms (Knuth); means here stay
    // well below the exp() underflow range (guarded anyway).
    long poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean > 500.0) {
            const double v = std::round(normal(mean, std::sqrt(mean)));
            return v < 0.0 ? 0 : static_cast<long>(v);
        }
        const double limit = std::exp(-mean);
        long k = -1;
        double prod = 1.0;
        do {
            ++k;
            prod *= uniform01();
        } while (prod > limit);
        return k;
    }

    // Independent child stream; consumes one draw from this stream.
    Rng child() { return Rng(engine_()); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dirlearn
