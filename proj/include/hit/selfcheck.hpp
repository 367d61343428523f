#pragma once

#include <string>
#include <vector>

#include "hit/gradcheck.hpp"
#include "hit/model.hpp"

namespace hit {

// Fixed miniature configuration used by the gradient self-check: full model,
// every parameter, every coordinate. Runs in double so the finite-difference
// reference is meaningful at the 1e-4 relative tolerance.
inline ModelConfig tiny_selfcheck_config() {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.k_max = 5;
    cfg.m_max = 3;
    cfg.vocab_size = 50;
    cfg.num_classes = 2;
    cfg.dropout = 0.0f;
    cfg.flat_max_len = 15;
    cfg.seed = 1;
    return cfg;
}

// Two documents with ragged sentence lengths so padding and masking sit on
// the differentiation path.
inline std::vector<TokenizedDoc> tiny_selfcheck_docs(const ModelConfig& cfg, uint64_t seed = 2024) {
    Rng rng(seed);
    auto word = [&]() { return "t" + std::to_string(rng.below(cfg.vocab_size - Vocab::kReserved)); };
    std::vector<std::vector<int>> lens = {{5, 3, 1}, {4, 2}};
    std::vector<TokenizedDoc> docs;
    for (size_t b = 0; b < lens.size(); ++b) {
        TokenizedDoc d;
        d.label = static_cast<int32_t>(b % cfg.num_classes);
        for (int n : lens[b]) {
            std::vector<std::string> sent;
            for (int k = 0; k < n; ++k) sent.push_back(word());
            d.sentences.push_back(std::move(sent));
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

inline Vocab tiny_selfcheck_vocab(const ModelConfig& cfg) {
    std::vector<std::string> toks;
    for (int i = 0; i < cfg.vocab_size - Vocab::kReserved; ++i) toks.push_back("t" + std::to_string(i));
    return Vocab::from_ordered_tokens(toks);
}

// Cross-entropy of the tiny model against its reverse-mode gradients, every
// parameter coordinate checked by central differences. The default step is
// small because the N(0, 0.02) embedding tables sit right where layer norm
// curvature peaks; 1e-4-scale steps are still truncation-limited there.
template <class S>
GradCheckReport tiny_model_gradcheck(double h = 3e-5, double tol = 1e-4) {
    ModelConfig cfg = tiny_selfcheck_config();
    auto vocab = tiny_selfcheck_vocab(cfg);
    auto docs = tiny_selfcheck_docs(cfg);
    auto batch = encode_and_pad(docs, vocab, cfg.k_max, cfg.m_max, cfg.num_classes);

    Rng init(cfg.seed);
    HiTransformerT<S> model(cfg, init);
    auto loss_fn = [&]() {
        Rng fwd(0);  // dropout is 0; forward is deterministic
        auto logits = model.forward(batch, /*training=*/false, fwd);
        return softmax_cross_entropy(logits, batch.labels);
    };
    return finite_diff_gradcheck<S>(loss_fn, model.params(), h, tol);
}

}  // namespace hit
