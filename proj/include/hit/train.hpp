#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hit/adam.hpp"
#include "hit/metrics.hpp"
#include "hit/model.hpp"

namespace hit {

struct TrainConfig {
    int epochs = 3;
    int batch_size = 16;
    double lr = 1e-4;
    uint64_t seed = 0;
    int eval_batch_size = 32;
};

struct EpochRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    Metrics val;
};

// Uniform training surface over the hierarchical model and the flat
// baseline: each implementation encodes its own batches.
class TrainableModel {
  public:
    virtual ~TrainableModel() = default;
    virtual TensorPtrT<float> forward_docs(const std::vector<const TokenizedDoc*>& docs, bool training, Rng& rng) = 0;
    virtual ParamMap& params() = 0;
    virtual const ModelConfig& config() const = 0;
};

// Batches are padded to the batch's own maxima (capped by the config);
// padding invariance of the model keeps results identical to full-width
// padding while skipping dead compute.
class HiModel : public TrainableModel {
  public:
    HiModel(const ModelConfig& cfg, const Vocab& vocab, Rng& init_rng, const std::vector<float>* pretrained = nullptr)
        : vocab_(&vocab), model_(cfg, init_rng, pretrained) {}

    TensorPtrT<float> forward_docs(const std::vector<const TokenizedDoc*>& docs, bool training, Rng& rng) override {
        const ModelConfig& cfg = model_.config();
        int kb = 1, mb = 1;
        for (const auto* d : docs) {
            mb = std::max(mb, static_cast<int>(std::min<size_t>(d->sentences.size(), static_cast<size_t>(cfg.m_max))));
            for (const auto& s : d->sentences)
                kb = std::max(kb, static_cast<int>(std::min<size_t>(s.size(), static_cast<size_t>(cfg.k_max))));
        }
        auto batch = encode_and_pad(docs, *vocab_, kb, mb, cfg.num_classes);
        return model_.forward(batch, training, rng);
    }

    ParamMap& params() override { return model_.params(); }
    const ModelConfig& config() const override { return model_.config(); }
    HiTransformer& model() { return model_; }

  private:
    const Vocab* vocab_;
    HiTransformer model_;
};

class FlatModel : public TrainableModel {
  public:
    FlatModel(const ModelConfig& cfg, const Vocab& vocab, Rng& init_rng, const std::vector<float>* pretrained = nullptr)
        : vocab_(&vocab), model_(cfg, init_rng, pretrained) {}

    TensorPtrT<float> forward_docs(const std::vector<const TokenizedDoc*>& docs, bool training, Rng& rng) override {
        auto batch = encode_flat(docs, *vocab_, model_.config().flat_max_len, model_.config().num_classes);
        return model_.forward(batch, training, rng);
    }

    ParamMap& params() override { return model_.params(); }
    const ModelConfig& config() const override { return model_.config(); }
    FlatTransformer& model() { return model_; }

  private:
    const Vocab* vocab_;
    FlatTransformer model_;
};

std::vector<int32_t> predict(TrainableModel& model, const std::vector<TokenizedDoc>& docs, int batch_size);
Metrics evaluate_model(TrainableModel& model, const std::vector<TokenizedDoc>& docs, int batch_size);

// Seeded epochs of shuffled minibatch Adam. Mean per-example loss per epoch,
// validation metrics after each epoch. Deterministic end to end for a fixed
// seed. Throws numeric_error with the batch index if the loss goes non-finite.
std::vector<EpochRow> train_epochs(TrainableModel& model, const std::vector<TokenizedDoc>& train_docs,
                                   const std::vector<TokenizedDoc>& val_docs, const TrainConfig& cfg);

std::string history_to_csv(const std::vector<EpochRow>& rows);
void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows);

}  // namespace hit
