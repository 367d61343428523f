#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hit {

struct PerClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t support = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double macro_f = 0.0;  // unweighted mean of per-class F1 over all classes; absent classes count 0
    std::vector<PerClassMetrics> per_class;
    int64_t n = 0;
};

Metrics evaluate_metrics(const std::vector<int32_t>& predictions, const std::vector<int32_t>& labels, int num_classes);

// Argmax with ties broken toward the lowest class index.
int32_t argmax_lowest(const float* row, int64_t n);

std::string metrics_to_kv_text(const Metrics& m);

}  // namespace hit
