#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hit/errors.hpp"

namespace hit {

// Deterministic random stream. The mt19937 core is fully specified by the
// standard; the distributions are hand-rolled because the std:: distribution
// classes are implementation-defined and would break cross-toolchain
// reproducibility of dropout masks and parameter trajectories.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed & 0xffffffffu)) {}

    uint32_t next_u32() { return gen_(); }

    // [0, 1) with 24-bit resolution
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // [0, 1) with 53-bit resolution
    double uniform_d() {
        const uint64_t a = next_u32() >> 5;  // 27 bits
        const uint64_t b = next_u32() >> 6;  // 26 bits
        return static_cast<double>(a * 67108864.0 + static_cast<double>(b)) / 9007199254740992.0;
    }

    // Box-Muller with cached spare.
    double normal(double mu, double sigma) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + spare_ * sigma;
        }
        const double u1 = 1.0 - uniform_d();  // (0, 1], keeps log finite
        const double u2 = uniform_d();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mu + r * std::cos(theta) * sigma;
    }

    // Uniform integer in [0, n), rejection-sampled so there is no modulo bias.
    int64_t below(int64_t n) {
        if (n <= 0) throw invariant_error("Rng::below: n must be positive");
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        for (;;) {
            const uint64_t r = (static_cast<uint64_t>(next_u32()) << 32) | next_u32();
            if (r < limit) return static_cast<int64_t>(r % un);
        }
    }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hit
