#include "hit/metrics.hpp"

#include <sstream>

#include "hit/config_io.hpp"
#include "hit/errors.hpp"

namespace hit {

Metrics evaluate_metrics(const std::vector<int32_t>& predictions, const std::vector<int32_t>& labels,
                         int num_classes) {
    if (predictions.size() != labels.size())
        throw invariant_error("evaluate_metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw invariant_error("evaluate_metrics: empty inputs");
    if (num_classes < 1) throw invariant_error("evaluate_metrics: num_classes must be >= 1");

    std::vector<int64_t> tp(static_cast<size_t>(num_classes), 0);
    std::vector<int64_t> fp(static_cast<size_t>(num_classes), 0);
    std::vector<int64_t> fn(static_cast<size_t>(num_classes), 0);
    std::vector<int64_t> support(static_cast<size_t>(num_classes), 0);
    int64_t correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int32_t p = predictions[i], y = labels[i];
        if (p < 0 || p >= num_classes || y < 0 || y >= num_classes)
            throw invariant_error("evaluate_metrics: class index out of range at position " + std::to_string(i));
        ++support[static_cast<size_t>(y)];
        if (p == y) {
            ++correct;
            ++tp[static_cast<size_t>(p)];
        } else {
            ++fp[static_cast<size_t>(p)];
            ++fn[static_cast<size_t>(y)];
        }
    }

    Metrics m;
    m.n = static_cast<int64_t>(labels.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
    double f_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        PerClassMetrics pc;
        pc.support = support[static_cast<size_t>(c)];
        const int64_t tpc = tp[static_cast<size_t>(c)];
        const int64_t denom_p = tpc + fp[static_cast<size_t>(c)];
        const int64_t denom_r = tpc + fn[static_cast<size_t>(c)];
        pc.precision = denom_p > 0 ? static_cast<double>(tpc) / static_cast<double>(denom_p) : 0.0;
        pc.recall = denom_r > 0 ? static_cast<double>(tpc) / static_cast<double>(denom_r) : 0.0;
        pc.f1 = (pc.precision + pc.recall) > 0.0 ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall) : 0.0;
        f_sum += pc.f1;
        m.per_class.push_back(pc);
    }
    m.macro_f = f_sum / static_cast<double>(num_classes);
    return m;
}

int32_t argmax_lowest(const float* row, int64_t n) {
    int32_t best = 0;
    for (int64_t j = 1; j < n; ++j)
        if (row[j] > row[best]) best = static_cast<int32_t>(j);
    return best;
}

std::string metrics_to_kv_text(const Metrics& m) {
    std::ostringstream os;
    os << "accuracy=" << format_double(m.accuracy, 6) << "\n";
    os << "macro_f=" << format_double(m.macro_f, 6) << "\n";
    os << "n=" << m.n << "\n";
    for (size_t c = 0; c < m.per_class.size(); ++c) {
        os << "class" << c << "_precision=" << format_double(m.per_class[c].precision, 6) << "\n";
        os << "class" << c << "_recall=" << format_double(m.per_class[c].recall, 6) << "\n";
        os << "class" << c << "_f1=" << format_double(m.per_class[c].f1, 6) << "\n";
        os << "class" << c << "_support=" << m.per_class[c].support << "\n";
    }
    return os.str();
}

}  // namespace hit
