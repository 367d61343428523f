#pragma once

#include <cstdint>
#include <string>

#include "hit/attention.hpp"

namespace hit {

// Word states for a batch of documents, one [CLS] summary slot per sentence
// at index K1-1. Masks are additive (0 valid / -1e9 invalid) and carry no
// gradient. Padded sentences have every slot masked; the [CLS] slot of every
// real sentence is always valid.
template <class S>
struct HiddenStatesT {
    TensorPtrT<S> words;      // [B, M, K1, d]
    TensorPtrT<S> word_mask;  // [B, M, K1]
    TensorPtrT<S> sent_mask;  // [B, M]

    int64_t batch() const { return words->dim(0); }
    int64_t sents() const { return words->dim(1); }
    int64_t slots() const { return words->dim(2); }
    int64_t dim() const { return words->dim(3); }
};

// One layer = two sentence encoders around one document encoder, all with
// independent weights.
template <class S>
struct HiLayerParamsT {
    EncoderBlockParamsT<S> sent1, doc, sent2;
};

template <class S>
HiLayerParamsT<S> register_hi_layer(ParamMapT<S>& params, const std::string& prefix, int d, int d_ff, int heads) {
    HiLayerParamsT<S> p;
    p.sent1 = register_encoder_block(params, prefix + ".sent1", d, d_ff, heads);
    p.doc = register_encoder_block(params, prefix + ".doc", d, d_ff, heads);
    p.sent2 = register_encoder_block(params, prefix + ".sent2", d, d_ff, heads);
    return p;
}

// Encode every sentence independently over its K1 slots. The [CLS] slot
// output is the sentence representation.
template <class S>
HiddenStatesT<S> sentence_pass(const HiddenStatesT<S>& h, const EncoderBlockParamsT<S>& sent1, double dropout_rate,
                               bool training, Rng& rng) {
    const int64_t B = h.batch(), M = h.sents(), K1 = h.slots(), d = h.dim();
    auto x = reshape(h.words, {B * M, K1, d});
    auto mask = reshape(h.word_mask, {B * M, K1});
    auto y = encoder_block_forward(x, mask, sent1, dropout_rate, training, rng);
    return {reshape(y, {B, M, K1, d}), h.word_mask, h.sent_mask};
}

// Gather the sentence representations from the [CLS] slots, add sentence
// position embeddings, and encode the sentence sequence as a whole. Returns
// the document-aware sentence representations [B, M, d].
template <class S>
TensorPtrT<S> document_pass(const HiddenStatesT<S>& h, const EncoderBlockParamsT<S>& doc,
                            const TensorPtrT<S>& sent_pos_table, double dropout_rate, bool training, Rng& rng) {
    const int64_t M = h.sents();
    if (M > sent_pos_table->dim(0))
        throw config_error("document_pass: " + std::to_string(M) + " sentences exceed the position table (" +
                           std::to_string(sent_pos_table->dim(0)) + " rows)");
    auto cls = select_index(h.words, 2, h.slots() - 1);  // [B, M, d]
    std::vector<int64_t> pos_ids(static_cast<size_t>(M));
    for (int64_t i = 0; i < M; ++i) pos_ids[static_cast<size_t>(i)] = i;
    auto pos = embedding_lookup(sent_pos_table, pos_ids, {M}, "sentence positions");
    auto x = add(cls, pos);
    return encoder_block_forward(x, h.sent_mask, doc, dropout_rate, training, rng);
}

// Re-encode each sentence with its [CLS] slot replaced by the document-aware
// representation, so every word state sees global document context.
template <class S>
HiddenStatesT<S> propagate_pass(const HiddenStatesT<S>& h, const TensorPtrT<S>& r,
                                const EncoderBlockParamsT<S>& sent2, double dropout_rate, bool training, Rng& rng) {
    const int64_t B = h.batch(), M = h.sents(), K1 = h.slots(), d = h.dim();
    if (r->shape != Shape{B, M, d})
        throw dimension_error("propagate_pass: r must be [B, M, d], got " + shape_str(r->shape));
    auto seq = replace_index(h.words, 2, K1 - 1, r);
    auto x = reshape(seq, {B * M, K1, d});
    auto mask = reshape(h.word_mask, {B * M, K1});
    auto y = encoder_block_forward(x, mask, sent2, dropout_rate, training, rng);
    return {reshape(y, {B, M, K1, d}), h.word_mask, h.sent_mask};
}

// Full layer: sentence pass, document pass, context propagation. With
// propagation disabled the document-aware representations still replace the
// [CLS] slots of the forwarded states, but the word states are not
// re-encoded against them.
template <class S>
HiddenStatesT<S> hi_layer_forward(const HiddenStatesT<S>& h, const HiLayerParamsT<S>& p,
                                  const TensorPtrT<S>& sent_pos_table, bool use_context_propagation,
                                  double dropout_rate, bool training, Rng& rng) {
    HiddenStatesT<S> hs = sentence_pass(h, p.sent1, dropout_rate, training, rng);
    auto r = document_pass(hs, p.doc, sent_pos_table, dropout_rate, training, rng);
    if (use_context_propagation) return propagate_pass(hs, r, p.sent2, dropout_rate, training, rng);
    return {replace_index(hs.words, 2, hs.slots() - 1, r), hs.word_mask, hs.sent_mask};
}

}  // namespace hit
