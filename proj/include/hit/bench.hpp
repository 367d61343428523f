#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hit {

// Attention-cost units per layer: multiply-adds of the score (QK^T) and
// mixing (weights . V) products only; projections, FFN and normalization are
// excluded. One unit pair per encoder pass gives
//   hi:   2 * M * (K+1)^2 * d + M^2 * d   (two sentence passes + document pass)
//   flat: (M * K)^2 * d
int64_t flop_estimate(const std::string& kind, int64_t m_sents, int64_t k_words, int64_t d);

struct CostReport {
    std::string kind;  // "hi" or "flat"
    int64_t M = 0, K = 0, d = 0, layers = 1;
    int64_t analytic_units = 0;
    double median_s = 0.0;
    double stddev_s = 0.0;
    int repeats = 0;
};

struct BenchConfig {
    std::vector<int64_t> m_list = {8, 16, 32, 64};
    int64_t k = 32;
    int64_t d = 64;
    int heads = 8;
    int repeats = 7;  // >= 5
    uint64_t seed = 0;
    bool run_hi = true;
    bool run_flat = true;
};

// Single-threaded per-layer forward timing over the L = M*K grid, one warm-up
// iteration discarded, median over `repeats`. Appends rows to the CSV
// (kind,L,M,K,d,analytic_units,median_s,stddev_s); existing rows are never
// rewritten. Empty csv_path skips the file.
std::vector<CostReport> scaling_benchmark(const BenchConfig& cfg, const std::string& csv_path);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<std::pair<double, double>>& points);

// Smallest observable positive increment of the steady clock, in seconds.
double estimate_clock_tick_s();

}  // namespace hit
