#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hit/params.hpp"

namespace hit {

// Bias-corrected Adam over a ParamMap. Updates walk parameters in name order,
// moments persist across steps, and gradients are cleared after each step.
template <class S>
class AdamT {
  public:
    struct Config {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    explicit AdamT(Config cfg = {}) : cfg_(cfg) {}

    void step(ParamMapT<S>& params) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& [name, e] : params) {
            auto& p = *e.tensor;
            if (p.grad.empty())
                throw invariant_error("adam_step: parameter has no gradient: " + name);
            auto& mv = moments_[name];
            if (mv.m.empty()) {
                mv.m.assign(p.data.size(), 0.0);
                mv.v.assign(p.data.size(), 0.0);
            }
            for (size_t i = 0; i < p.data.size(); ++i) {
                const double g = static_cast<double>(p.grad[i]);
                mv.m[i] = cfg_.beta1 * mv.m[i] + (1.0 - cfg_.beta1) * g;
                mv.v[i] = cfg_.beta2 * mv.v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = mv.m[i] / bc1;
                const double vhat = mv.v[i] / bc2;
                p.data[i] = static_cast<S>(static_cast<double>(p.data[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
        params.zero_grads();
    }

    int64_t step_count() const { return step_; }
    const Config& config() const { return cfg_; }

  private:
    struct Moments {
        std::vector<double> m, v;
    };
    Config cfg_;
    int64_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

using Adam = AdamT<float>;

}  // namespace hit
