#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hit/data.hpp"
#include "hit/hi_layer.hpp"

namespace hit {

struct ModelConfig {
    int d = 256;
    int heads = 8;
    int layers = 2;
    int k_max = 32;   // words per sentence; one CLS slot is added on top
    int m_max = 64;   // sentences per document (k_max * m_max = 2048 by default)
    int d_ff = 0;     // 0 -> 4 * d
    int vocab_size = 0;
    int num_classes = 0;
    float dropout = 0.2f;
    int flat_max_len = 512;
    bool use_context_propagation = true;
    int pretrained_dim = 0;  // 0 = word embeddings at width d, trained from scratch
    uint64_t seed = 0;

    int ffn_width() const { return d_ff > 0 ? d_ff : 4 * d; }
    int embed_width() const { return pretrained_dim > 0 ? pretrained_dim : d; }

    void validate() const {
        if (d < 1) throw config_error("config: d must be >= 1");
        if (heads < 1 || d % heads != 0) throw config_error("config: heads must divide d");
        if (layers < 1) throw config_error("config: layers must be >= 1");
        if (k_max < 1 || m_max < 1) throw config_error("config: k_max and m_max must be >= 1");
        if (flat_max_len < 1) throw config_error("config: flat_max_len must be >= 1");
        if (vocab_size < Vocab::kReserved + 1) throw config_error("config: vocab_size too small");
        if (num_classes < 2) throw config_error("config: num_classes must be >= 2");
        if (dropout < 0.0f || dropout >= 1.0f) throw config_error("config: dropout must be in [0, 1)");
        if (d_ff != 0 && d_ff < d) throw config_error("config: d_ff must be >= d");
        if (pretrained_dim < 0) throw config_error("config: pretrained_dim must be >= 0");
    }
};

// Word/CLS/position tables. The CLS vector is a single learned embedding
// shared by all sentences; its position row is the last row of the word
// position table, independent of how far a particular batch is padded, so
// re-padding a batch never moves it.
template <class S>
struct EmbeddingParamsT {
    TensorPtrT<S> word_table;  // [V, d] or [V, pretrained_dim]
    TensorPtrT<S> word_proj;   // [pretrained_dim, d] when pretrained, else null
    TensorPtrT<S> word_pos;    // [k_max + 1, d]
    TensorPtrT<S> cls;         // [d]
    TensorPtrT<S> sent_pos;    // [m_max, d]
};

template <class S>
struct PoolParamsT {
    TensorPtrT<S> proj;  // [d, d]
    TensorPtrT<S> bias;  // [d]
    TensorPtrT<S> query; // [d]
};

template <class S>
PoolParamsT<S> register_pool(ParamMapT<S>& params, const std::string& prefix, int d) {
    PoolParamsT<S> p;
    p.proj = params.add(prefix + ".W", {d, d}, Init::xavier_uniform);
    p.bias = params.add(prefix + ".b", {d}, Init::zeros);
    p.query = params.add(prefix + ".q", {d}, Init::xavier_uniform, d, 1);
    return p;
}

// Embed a padded document batch into hidden states. Masked slots come out
// exactly zero so no padding value can leak into later passes.
template <class S>
HiddenStatesT<S> embed_document(const DocumentBatch& batch, const EmbeddingParamsT<S>& emb, const ModelConfig& cfg,
                                double dropout_rate, bool training, Rng& rng) {
    const int64_t B = batch.B, M = batch.M, K1 = batch.K1;
    const int64_t d = cfg.d;
    if (K1 - 1 > cfg.k_max)
        throw config_error("embed_document: batch sentence length " + std::to_string(K1 - 1) +
                           " exceeds configured k_max " + std::to_string(cfg.k_max));
    std::vector<int64_t> ids(batch.word_ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        ids[i] = batch.word_ids[i];
        if (ids[i] < 0 || ids[i] >= cfg.vocab_size)
            throw data_error("embed_document: word id " + std::to_string(ids[i]) + " out of range in document " +
                             std::to_string(static_cast<int64_t>(i) / (M * K1)));
    }

    auto e = embedding_lookup(emb.word_table, std::move(ids), {B, M, K1}, "word ids");
    if (emb.word_proj) e = matmul(e, emb.word_proj);

    auto cls_bc = broadcast_to(reshape(emb.cls, {1, 1, d}), {B, M, d});
    e = replace_index(e, 2, K1 - 1, cls_bc);

    std::vector<int64_t> pos_ids(static_cast<size_t>(K1));
    for (int64_t k = 0; k + 1 < K1; ++k) pos_ids[static_cast<size_t>(k)] = k;
    pos_ids[static_cast<size_t>(K1 - 1)] = cfg.k_max;  // fixed CLS position row
    auto pos = embedding_lookup(emb.word_pos, pos_ids, {K1}, "word positions");
    e = add(e, pos);
    e = dropout(e, dropout_rate, training, rng);

    std::vector<S> maskf(batch.word_mask.size());
    for (size_t i = 0; i < maskf.size(); ++i) maskf[i] = batch.word_mask[i] ? S(1) : S(0);
    e = mul(e, make_tensor<S>({B, M, K1, 1}, std::move(maskf)));

    HiddenStatesT<S> h;
    h.words = e;
    h.word_mask = bool_to_additive<S>(batch.word_mask, {B, M, K1});
    h.sent_mask = bool_to_additive<S>(batch.sent_mask, {B, M});
    return h;
}

// scores = q . tanh(W x + b), weights = masked softmax, output = weighted sum.
template <class S>
TensorPtrT<S> attentive_pool(const TensorPtrT<S>& x, const TensorPtrT<S>& mask, const PoolParamsT<S>& p,
                             bool allow_all_masked = false) {
    if (x->ndim() != 3) throw dimension_error("attentive_pool: x must be [B, L, d], got " + shape_str(x->shape));
    const int64_t B = x->dim(0), L = x->dim(1), d = x->dim(2);
    if (mask->shape != Shape{B, L})
        throw dimension_error("attentive_pool: mask must be [B, L], got " + shape_str(mask->shape));
    auto keys = tanh_op(add(matmul(x, p.proj), p.bias));
    auto scores = reshape(matmul(keys, reshape(p.query, {d, 1})), {B, L});
    auto weights = masked_softmax_impl(scores, mask, allow_all_masked);
    return reshape(matmul(reshape(weights, {B, 1, L}), x), {B, d});
}

// Word-level pool per sentence (over the K word slots plus the summary slot),
// then sentence-level pool over the document.
template <class S>
TensorPtrT<S> hierarchical_pool(const HiddenStatesT<S>& h, const PoolParamsT<S>& word_pool,
                                const PoolParamsT<S>& sent_pool) {
    const int64_t B = h.batch(), M = h.sents(), K1 = h.slots(), d = h.dim();
    for (int64_t b = 0; b < B; ++b) {
        bool any = false;
        for (int64_t m = 0; m < M; ++m) any |= h.sent_mask->data[b * M + m] > S(kMaskedThreshold);
        if (!any) throw data_error("hierarchical_pool: document " + std::to_string(b) + " has zero real sentences");
    }
    auto sent_emb = attentive_pool(reshape(h.words, {B * M, K1, d}), reshape(h.word_mask, {B * M, K1}), word_pool,
                                    /*allow_all_masked=*/true);
    return attentive_pool(reshape(sent_emb, {B, M, d}), h.sent_mask, sent_pool);
}

// Hierarchical document classifier: embedding, stacked layers, hierarchical
// pooling, affine head.
template <class S>
class HiTransformerT {
  public:
    HiTransformerT(const ModelConfig& cfg, Rng& init_rng, const std::vector<float>* pretrained = nullptr) : cfg_(cfg) {
        cfg_.validate();
        const int ew = cfg_.embed_width();
        embed_.word_table = params_.add("embed.word_table", {cfg_.vocab_size, ew}, Init::normal_002);
        if (cfg_.pretrained_dim > 0)
            embed_.word_proj = params_.add("embed.word_proj", {cfg_.pretrained_dim, cfg_.d}, Init::xavier_uniform);
        embed_.word_pos = params_.add("embed.word_pos", {cfg_.k_max + 1, cfg_.d}, Init::normal_002);
        embed_.cls = params_.add("embed.cls", {cfg_.d}, Init::normal_002);
        embed_.sent_pos = params_.add("embed.sent_pos", {cfg_.m_max, cfg_.d}, Init::normal_002);
        for (int l = 0; l < cfg_.layers; ++l)
            layers_.push_back(register_hi_layer(params_, "layer" + std::to_string(l), cfg_.d, cfg_.ffn_width(),
                                                cfg_.heads));
        pool_word_ = register_pool(params_, "pool.word", cfg_.d);
        pool_sent_ = register_pool(params_, "pool.sent", cfg_.d);
        head_w_ = params_.add("head.W", {cfg_.d, cfg_.num_classes}, Init::xavier_uniform);
        head_b_ = params_.add("head.b", {cfg_.num_classes}, Init::zeros);
        params_.initialize(init_rng);
        if (pretrained) {
            if (static_cast<int64_t>(pretrained->size()) != embed_.word_table->numel())
                throw config_error("pretrained table size does not match vocab_size * pretrained_dim");
            for (size_t i = 0; i < pretrained->size(); ++i)
                embed_.word_table->data[i] = static_cast<S>((*pretrained)[i]);
        }
    }

    HiddenStatesT<S> encode(const DocumentBatch& batch, bool training, Rng& rng) {
        HiddenStatesT<S> h = embed_document(batch, embed_, cfg_, cfg_.dropout, training, rng);
        for (auto& layer : layers_)
            h = hi_layer_forward(h, layer, embed_.sent_pos, cfg_.use_context_propagation, cfg_.dropout, training, rng);
        return h;
    }

    TensorPtrT<S> forward(const DocumentBatch& batch, bool training, Rng& rng) {
        auto doc = hierarchical_pool(encode(batch, training, rng), pool_word_, pool_sent_);
        return add(matmul(doc, head_w_), head_b_);
    }

    ParamMapT<S>& params() { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const EmbeddingParamsT<S>& embedding() const { return embed_; }
    const PoolParamsT<S>& word_pool() const { return pool_word_; }
    const PoolParamsT<S>& sent_pool() const { return pool_sent_; }

  private:
    ModelConfig cfg_;
    ParamMapT<S> params_;
    EmbeddingParamsT<S> embed_;
    std::vector<HiLayerParamsT<S>> layers_;
    PoolParamsT<S> pool_word_, pool_sent_;
    TensorPtrT<S> head_w_, head_b_;
};

// Vanilla encoder over the flat word stream, truncated to flat_max_len.
template <class S>
class FlatTransformerT {
  public:
    FlatTransformerT(const ModelConfig& cfg, Rng& init_rng, const std::vector<float>* pretrained = nullptr)
        : cfg_(cfg) {
        cfg_.validate();
        const int ew = cfg_.embed_width();
        word_table_ = params_.add("embed.word_table", {cfg_.vocab_size, ew}, Init::normal_002);
        if (cfg_.pretrained_dim > 0)
            word_proj_ = params_.add("embed.word_proj", {cfg_.pretrained_dim, cfg_.d}, Init::xavier_uniform);
        pos_ = params_.add("embed.pos", {cfg_.flat_max_len, cfg_.d}, Init::normal_002);
        for (int l = 0; l < cfg_.layers; ++l)
            blocks_.push_back(register_encoder_block(params_, "layer" + std::to_string(l), cfg_.d, cfg_.ffn_width(),
                                                     cfg_.heads));
        pool_ = register_pool(params_, "pool", cfg_.d);
        head_w_ = params_.add("head.W", {cfg_.d, cfg_.num_classes}, Init::xavier_uniform);
        head_b_ = params_.add("head.b", {cfg_.num_classes}, Init::zeros);
        params_.initialize(init_rng);
        if (pretrained) {
            if (static_cast<int64_t>(pretrained->size()) != word_table_->numel())
                throw config_error("pretrained table size does not match vocab_size * pretrained_dim");
            for (size_t i = 0; i < pretrained->size(); ++i) word_table_->data[i] = static_cast<S>((*pretrained)[i]);
        }
    }

    TensorPtrT<S> forward(const FlatBatch& batch, bool training, Rng& rng) {
        const int64_t B = batch.B, L = batch.L;
        if (L > cfg_.flat_max_len)
            throw config_error("flat forward: batch length " + std::to_string(L) + " exceeds flat_max_len " +
                               std::to_string(cfg_.flat_max_len));
        std::vector<int64_t> ids(batch.ids.begin(), batch.ids.end());
        for (size_t i = 0; i < ids.size(); ++i)
            if (ids[i] < 0 || ids[i] >= cfg_.vocab_size)
                throw data_error("flat forward: word id out of range in document " +
                                 std::to_string(static_cast<int64_t>(i) / L));
        auto e = embedding_lookup(word_table_, std::move(ids), {B, L}, "word ids");
        if (word_proj_) e = matmul(e, word_proj_);
        std::vector<int64_t> pos_ids(static_cast<size_t>(L));
        for (int64_t i = 0; i < L; ++i) pos_ids[static_cast<size_t>(i)] = i;
        e = add(e, embedding_lookup(pos_, pos_ids, {L}, "positions"));
        e = dropout(e, cfg_.dropout, training, rng);

        std::vector<S> maskf(static_cast<size_t>(B * L));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < L; ++i)
                maskf[static_cast<size_t>(b * L + i)] = i < batch.lengths[static_cast<size_t>(b)] ? S(1) : S(0);
        e = mul(e, make_tensor<S>({B, L, 1}, std::move(maskf)));

        auto mask = build_additive_mask<S>(batch.lengths, L);
        for (auto& blk : blocks_) e = encoder_block_forward(e, mask, blk, cfg_.dropout, training, rng);
        auto doc = attentive_pool(e, mask, pool_);
        return add(matmul(doc, head_w_), head_b_);
    }

    ParamMapT<S>& params() { return params_; }
    const ModelConfig& config() const { return cfg_; }

  private:
    ModelConfig cfg_;
    ParamMapT<S> params_;
    TensorPtrT<S> word_table_, word_proj_, pos_;
    std::vector<EncoderBlockParamsT<S>> blocks_;
    PoolParamsT<S> pool_;
    TensorPtrT<S> head_w_, head_b_;
};

using HiTransformer = HiTransformerT<float>;
using FlatTransformer = FlatTransformerT<float>;

}  // namespace hit
