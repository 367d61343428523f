#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hit/ops.hpp"
#include "hit/params.hpp"

namespace hit {

struct GradCheckParamResult {
    std::string name;
    double max_rel_err = 0.0;
    int64_t worst_coord = -1;
    int64_t n_checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckParamResult> per_param;
    double max_rel_err = 0.0;
    std::string worst_param;
    double tol = 0.0;
    bool pass = false;
};

// Central-difference check of the reverse-mode gradients of a deterministic
// scalar function against its registered parameters. The loss function must
// be re-evaluable (no dropout, no RNG consumption). `max_coords_per_param`
// limits the checked coordinates per parameter (-1 checks them all; sampling
// is seeded and without replacement).
//
// Step-size guidance: coordinates with near-zero gradients are judged
// against the 1e-8 denominator floor, so the absolute FD error must stay
// around 1e-12; steps in the 2e-4..5e-4 range balance roundoff against
// curvature for double-precision losses. ReLU kinks inside [x-h, x+h] bias
// the estimate, so a failing coordinate should be re-examined at h/4 before
// being treated as a gradient bug.
//
// Relative error per coordinate: |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <class S>
GradCheckReport finite_diff_gradcheck(const std::function<TensorPtrT<S>()>& loss_fn, ParamMapT<S>& params,
                                      double h = 1e-3, double tol = 1e-4, int64_t max_coords_per_param = -1,
                                      uint64_t sample_seed = 0) {
    params.zero_grads();
    TensorPtrT<S> loss = loss_fn();
    if (!loss || loss->numel() != 1) throw invariant_error("gradcheck: loss must be a scalar");
    if (!std::isfinite(static_cast<double>(loss->data[0]))) throw numeric_error("gradcheck: non-finite loss");
    backward(loss);

    // Snapshot analytic gradients, then evaluate numerically with no graph.
    std::map<std::string, std::vector<S>> analytic;
    for (auto& [name, e] : params) analytic[name] = e.tensor->ensure_grad();

    auto eval = [&]() -> double {
        NoGradGuard ng;
        TensorPtrT<S> l = loss_fn();
        const double v = static_cast<double>(l->data[0]);
        if (!std::isfinite(v)) throw numeric_error("gradcheck: non-finite loss during finite differencing");
        return v;
    };

    Rng rng(sample_seed);
    GradCheckReport report;
    report.tol = tol;
    for (auto& [name, e] : params) {
        auto& t = *e.tensor;
        const int64_t n = t.numel();
        std::vector<int64_t> coords;
        if (max_coords_per_param < 0 || n <= max_coords_per_param) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            std::vector<int64_t> all(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
            rng.shuffle(all);
            coords.assign(all.begin(), all.begin() + max_coords_per_param);
        }
        GradCheckParamResult pr;
        pr.name = name;
        pr.n_checked = static_cast<int64_t>(coords.size());
        const auto& g = analytic[name];
        for (int64_t c : coords) {
            const S orig = t.data[static_cast<size_t>(c)];
            const S hi = static_cast<S>(static_cast<double>(orig) + h);
            const S lo = static_cast<S>(static_cast<double>(orig) - h);
            // Effective step from the actually representable values.
            const double h_eff = static_cast<double>(hi) - static_cast<double>(lo);
            t.data[static_cast<size_t>(c)] = hi;
            const double f_hi = eval();
            t.data[static_cast<size_t>(c)] = lo;
            const double f_lo = eval();
            t.data[static_cast<size_t>(c)] = orig;
            const double numeric = (f_hi - f_lo) / h_eff;
            const double ana = static_cast<double>(g[static_cast<size_t>(c)]);
            const double rel = std::abs(ana - numeric) / std::max(1e-8, std::abs(ana) + std::abs(numeric));
            if (rel > pr.max_rel_err) {
                pr.max_rel_err = rel;
                pr.worst_coord = c;
            }
        }
        if (pr.max_rel_err > report.max_rel_err) {
            report.max_rel_err = pr.max_rel_err;
            report.worst_param = name;
        }
        report.per_param.push_back(std::move(pr));
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace hit
