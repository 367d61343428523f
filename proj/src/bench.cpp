#include "hit/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hit/config_io.hpp"
#include "hit/hi_layer.hpp"

namespace hit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Timing {
    double median_s;
    double stddev_s;
};

Timing summarize(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    const double median =
        (n % 2 == 1) ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n - 1);
    return {median, std::sqrt(var)};
}

}  // namespace

int64_t flop_estimate(const std::string& kind, int64_t m_sents, int64_t k_words, int64_t d) {
    if (m_sents < 1 || k_words < 1 || d < 1) throw config_error("flop_estimate: all inputs must be >= 1");
    if (kind == "hi") {
        const int64_t k1 = k_words + 1;
        return 2 * m_sents * k1 * k1 * d + m_sents * m_sents * d;
    }
    if (kind == "flat") {
        const int64_t l = m_sents * k_words;
        return l * l * d;
    }
    throw config_error("flop_estimate: unknown kind: " + kind + " (expected hi|flat)");
}

double estimate_clock_tick_s() {
    double best = 1.0;
    for (int i = 0; i < 256; ++i) {
        const auto t1 = Clock::now();
        auto t2 = Clock::now();
        while (t2 == t1) t2 = Clock::now();
        best = std::min(best, std::chrono::duration<double>(t2 - t1).count());
    }
    return best;
}

double loglog_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw invariant_error("loglog_slope: need at least 2 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto& [x, y] : points) {
        if (x <= 0.0 || y <= 0.0) throw invariant_error("loglog_slope: inputs must be positive");
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(points.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<CostReport> scaling_benchmark(const BenchConfig& cfg, const std::string& csv_path) {
    if (cfg.repeats < 5) throw config_error("scaling_benchmark: repeats must be >= 5");
    if (cfg.m_list.empty()) throw config_error("scaling_benchmark: empty M grid");

    const double tick = estimate_clock_tick_s();
    std::vector<CostReport> reports;

    struct ChecksOff {
        bool prev;
        ChecksOff() : prev(finite_checks_flag()) { finite_checks_flag() = false; }
        ~ChecksOff() { finite_checks_flag() = prev; }
    };

    auto time_fn = [&](auto&& fn) -> Timing {
        NoGradGuard ng;
        std::vector<double> samples;
        {
            ChecksOff off;
            fn();  // warm-up, discarded
            for (int r = 0; r < cfg.repeats; ++r) {
                const auto t0 = Clock::now();
                fn();
                samples.push_back(seconds_since(t0));
            }
        }
        const Timing t = summarize(std::move(samples));
        if (t.median_s < 50.0 * tick)
            throw bench_error("scaling_benchmark: median " + std::to_string(t.median_s) +
                              "s is under 50 clock ticks; use larger shapes");
        return t;
    };

    for (int64_t m : cfg.m_list) {
        if (cfg.run_hi) {
            ParamMapT<float> params;
            auto layer = register_hi_layer(params, "layer0", static_cast<int>(cfg.d), static_cast<int>(4 * cfg.d),
                                           cfg.heads);
            auto pos = params.add("sent_pos", {m, cfg.d}, Init::normal_002);
            Rng init(cfg.seed);
            params.initialize(init);

            HiddenStatesT<float> h;
            h.words = TensorT<float>::create({1, m, cfg.k + 1, cfg.d});
            fill_uniform(*h.words, init, -1.0f, 1.0f);
            h.word_mask = make_zeros<float>({1, m, cfg.k + 1});
            h.sent_mask = make_zeros<float>({1, m});

            TensorPtrT<float> sink;
            Rng fwd(0);
            const Timing t = time_fn([&]() { sink = hi_layer_forward(h, layer, pos, true, 0.0, false, fwd).words; });
            sink->check_finite("hi benchmark forward");
            reports.push_back({"hi", m, cfg.k, cfg.d, 1, flop_estimate("hi", m, cfg.k, cfg.d), t.median_s,
                               t.stddev_s, cfg.repeats});
        }
        if (cfg.run_flat) {
            const int64_t l = m * cfg.k;
            ParamMapT<float> params;
            auto block = register_encoder_block(params, "layer0", static_cast<int>(cfg.d),
                                                static_cast<int>(4 * cfg.d), cfg.heads);
            Rng init(cfg.seed);
            params.initialize(init);
            auto x = TensorT<float>::create({1, l, cfg.d});
            fill_uniform(*x, init, -1.0f, 1.0f);
            auto mask = make_zeros<float>({1, l});

            TensorPtrT<float> sink;
            Rng fwd(0);
            const Timing t = time_fn([&]() { sink = encoder_block_forward(x, mask, block, 0.0, false, fwd); });
            sink->check_finite("flat benchmark forward");
            reports.push_back({"flat", m, cfg.k, cfg.d, 1, flop_estimate("flat", m, cfg.k, cfg.d), t.median_s,
                               t.stddev_s, cfg.repeats});
        }
    }

    if (!csv_path.empty()) {
        const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
        std::ofstream out(csv_path, std::ios::app);
        if (!out) throw data_error("cannot write benchmark csv: " + csv_path);
        if (fresh) out << "kind,L,M,K,d,analytic_units,median_s,stddev_s\n";
        for (const auto& r : reports)
            out << r.kind << "," << r.M * r.K << "," << r.M << "," << r.K << "," << r.d << "," << r.analytic_units
                << "," << format_double(r.median_s, 9) << "," << format_double(r.stddev_s, 9) << "\n";
    }
    return reports;
}

}  // namespace hit
