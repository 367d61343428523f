#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hit/ops.hpp"
#include "hit/params.hpp"

namespace hit {

// Multi-head projection weights. No projection biases.
template <class S>
struct AttentionParamsT {
    TensorPtrT<S> wq, wk, wv, wo;  // all [d, d]
    int heads = 8;
    int head_dim = 32;
};

// Post-norm residual encoder block: attention + ReLU feed-forward, each
// followed by dropout, residual add and layer norm.
template <class S>
struct EncoderBlockParamsT {
    AttentionParamsT<S> attn;
    TensorPtrT<S> ffn_w1;  // [d, d_ff]
    TensorPtrT<S> ffn_w2;  // [d_ff, d]
    TensorPtrT<S> ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // [d]
};

template <class S>
AttentionParamsT<S> register_attention(ParamMapT<S>& params, const std::string& prefix, int d, int heads) {
    if (heads < 1 || d % heads != 0)
        throw config_error("attention: heads must divide hidden dim (d=" + std::to_string(d) +
                           ", heads=" + std::to_string(heads) + ")");
    AttentionParamsT<S> p;
    p.heads = heads;
    p.head_dim = d / heads;
    p.wq = params.add(prefix + ".attn.Wq", {d, d}, Init::xavier_uniform);
    p.wk = params.add(prefix + ".attn.Wk", {d, d}, Init::xavier_uniform);
    p.wv = params.add(prefix + ".attn.Wv", {d, d}, Init::xavier_uniform);
    p.wo = params.add(prefix + ".attn.Wo", {d, d}, Init::xavier_uniform);
    return p;
}

template <class S>
EncoderBlockParamsT<S> register_encoder_block(ParamMapT<S>& params, const std::string& prefix, int d, int d_ff,
                                              int heads) {
    if (d_ff < d) throw config_error("encoder block: d_ff must be >= d");
    EncoderBlockParamsT<S> p;
    p.attn = register_attention(params, prefix, d, heads);
    p.ffn_w1 = params.add(prefix + ".ffn.W1", {d, d_ff}, Init::xavier_uniform);
    p.ffn_w2 = params.add(prefix + ".ffn.W2", {d_ff, d}, Init::xavier_uniform);
    p.ln1_gain = params.add(prefix + ".ln1.gain", {d}, Init::ones);
    p.ln1_bias = params.add(prefix + ".ln1.bias", {d}, Init::zeros);
    p.ln2_gain = params.add(prefix + ".ln2.gain", {d}, Init::ones);
    p.ln2_bias = params.add(prefix + ".ln2.bias", {d}, Init::zeros);
    return p;
}

// Additive key mask from per-row valid prefix lengths: 0 where position <
// length, -1e9 otherwise.
template <class S>
TensorPtrT<S> build_additive_mask(const std::vector<int64_t>& valid_lengths, int64_t width) {
    const int64_t batch = static_cast<int64_t>(valid_lengths.size());
    auto mask = TensorT<S>::create({batch, width});
    for (int64_t b = 0; b < batch; ++b) {
        const int64_t len = valid_lengths[static_cast<size_t>(b)];
        if (len < 0 || len > width)
            throw dimension_error("build_additive_mask: length " + std::to_string(len) + " outside [0, " +
                                  std::to_string(width) + "]");
        for (int64_t j = 0; j < width; ++j)
            mask->data[b * width + j] = j < len ? S(0) : S(kMaskedOut);
    }
    return mask;
}

// Additive mask [.., L] from a boolean validity array (1 = valid slot).
template <class S>
TensorPtrT<S> bool_to_additive(const std::vector<uint8_t>& valid, Shape shape) {
    if (shape_numel(shape) != static_cast<int64_t>(valid.size()))
        throw dimension_error("bool_to_additive: mask size does not match shape");
    auto mask = TensorT<S>::create(std::move(shape));
    for (size_t i = 0; i < valid.size(); ++i) mask->data[i] = valid[i] ? S(0) : S(kMaskedOut);
    return mask;
}

// Scaled dot-product self-attention over x [B, L, d] with an additive key
// mask [B, L]. Key positions carrying -1e9 get exactly zero weight. Rows whose
// key mask is fully closed correspond to padded queries (self-attention
// shares one validity vector per sequence); their outputs are zeroed and must
// be ignored downstream. Dropout lands on the Wo output.
template <class S>
TensorPtrT<S> multi_head_attention(const TensorPtrT<S>& x, const TensorPtrT<S>& mask,
                                   const AttentionParamsT<S>& p, double dropout_rate, bool training, Rng& rng) {
    if (x->ndim() != 3) throw dimension_error("multi_head_attention: x must be [B, L, d], got " + shape_str(x->shape));
    const int64_t B = x->dim(0), L = x->dim(1), d = x->dim(2);
    if (mask->shape != Shape{B, L})
        throw dimension_error("multi_head_attention: mask must be [B, L], got " + shape_str(mask->shape));
    const int64_t H = p.heads, hd = p.head_dim;
    if (H * hd != d) throw config_error("multi_head_attention: heads * head_dim != d");

    auto split_heads = [&](const TensorPtrT<S>& t) {
        return permute(reshape(t, {B, L, H, hd}), {0, 2, 1, 3});  // [B, H, L, hd]
    };
    auto q = split_heads(matmul(x, p.wq));
    auto k = split_heads(matmul(x, p.wk));
    auto v = split_heads(matmul(x, p.wv));

    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    auto scores = matmul(q, k, false, true, inv_sqrt);                       // [B, H, L, L]
    auto key_mask = reshape(mask, {B, 1, 1, L});
    auto probs = masked_softmax_impl(scores, key_mask, /*allow_all_masked=*/true);
    auto ctx = matmul(probs, v);                                             // [B, H, L, hd]
    auto merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, L, d});
    auto out = matmul(merged, p.wo);
    return dropout(out, dropout_rate, training, rng);
}

// y = LN(x + Drop(MHA(x))); out = LN(y + Drop(W2 relu(W1 y))).
template <class S>
TensorPtrT<S> encoder_block_forward(const TensorPtrT<S>& x, const TensorPtrT<S>& mask,
                                    const EncoderBlockParamsT<S>& p, double dropout_rate, bool training, Rng& rng) {
    auto attn = multi_head_attention(x, mask, p.attn, dropout_rate, training, rng);
    auto y = layer_norm(add(x, attn), p.ln1_gain, p.ln1_bias);
    auto ffn = matmul(relu(matmul(y, p.ffn_w1)), p.ffn_w2);
    auto out = layer_norm(add(y, dropout(ffn, dropout_rate, training, rng)), p.ln2_gain, p.ln2_bias);
    return out;
}

}  // namespace hit
