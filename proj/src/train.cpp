#include "hit/train.hpp"

#include <cmath>
#include <fstream>

#include "hit/config_io.hpp"

namespace hit {

std::vector<int32_t> predict(TrainableModel& model, const std::vector<TokenizedDoc>& docs, int batch_size) {
    NoGradGuard ng;
    Rng rng(0);  // unused in eval mode
    std::vector<int32_t> preds;
    preds.reserve(docs.size());
    const int64_t C = model.config().num_classes;
    for (size_t start = 0; start < docs.size(); start += static_cast<size_t>(batch_size)) {
        std::vector<const TokenizedDoc*> slice;
        for (size_t i = start; i < std::min(docs.size(), start + static_cast<size_t>(batch_size)); ++i)
            slice.push_back(&docs[i]);
        auto logits = model.forward_docs(slice, /*training=*/false, rng);
        for (size_t b = 0; b < slice.size(); ++b)
            preds.push_back(argmax_lowest(logits->data.data() + static_cast<int64_t>(b) * C, C));
    }
    return preds;
}

Metrics evaluate_model(TrainableModel& model, const std::vector<TokenizedDoc>& docs, int batch_size) {
    auto preds = predict(model, docs, batch_size);
    std::vector<int32_t> labels;
    labels.reserve(docs.size());
    for (const auto& d : docs) labels.push_back(d.label);
    return evaluate_metrics(preds, labels, model.config().num_classes);
}

std::vector<EpochRow> train_epochs(TrainableModel& model, const std::vector<TokenizedDoc>& train_docs,
                                   const std::vector<TokenizedDoc>& val_docs, const TrainConfig& cfg) {
    if (train_docs.empty() || val_docs.empty()) throw data_error("train_epochs: datasets must be non-empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw config_error("train_epochs: epochs and batch_size must be >= 1");

    Rng rng(cfg.seed);
    AdamT<float> adam({cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<size_t> order(train_docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<EpochRow> history;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batch_index = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size), ++batch_index) {
            std::vector<const TokenizedDoc*> slice;
            std::vector<int32_t> labels;
            for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(cfg.batch_size)); ++i) {
                slice.push_back(&train_docs[order[i]]);
                labels.push_back(train_docs[order[i]].label);
            }
            auto logits = model.forward_docs(slice, /*training=*/true, rng);
            auto loss = softmax_cross_entropy(logits, labels);
            const double lv = static_cast<double>(loss->data[0]);
            if (!std::isfinite(lv))
                throw numeric_error("train_epochs: non-finite loss " + std::to_string(lv) + " at epoch " +
                                    std::to_string(epoch) + ", batch " + std::to_string(batch_index));
            loss_sum += lv * static_cast<double>(slice.size());
            backward(loss);
            model.params().ensure_grads();
            adam.step(model.params());
        }
        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(train_docs.size());
        row.val = evaluate_model(model, val_docs, cfg.eval_batch_size);
        history.push_back(row);
    }
    return history;
}

std::string history_to_csv(const std::vector<EpochRow>& rows) {
    std::string csv = "epoch,train_loss,val_accuracy,val_macro_f\n";
    for (const auto& r : rows) {
        csv += std::to_string(r.epoch);
        csv += ",";
        csv += format_double(r.train_loss, 6);
        csv += ",";
        csv += format_double(r.val.accuracy, 6);
        csv += ",";
        csv += format_double(r.val.macro_f, 6);
        csv += "\n";
    }
    return csv;
}

void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write history file: " + path);
    out << history_to_csv(rows);
}

}  // namespace hit
