// End-to-end hierarchical and flat classifiers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hit/model.hpp"

using namespace hit;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.layers = 2;
    cfg.k_max = 6;
    cfg.m_max = 4;
    cfg.vocab_size = 30;
    cfg.num_classes = 3;
    cfg.dropout = 0.0f;
    cfg.flat_max_len = 12;
    return cfg;
}

std::vector<TokenizedDoc> tiny_docs() {
    std::vector<Document> docs = {
        {0, "w1 w2 w3. w4 w5. w6."},
        {1, "w7 w8 w9 w10 w11 w12. w2 w3."},
        {2, "w1. w1. w1 w2."},
    };
    return tokenize_documents(docs);
}

Vocab tiny_vocab() {
    std::vector<std::string> toks;
    for (int i = 1; i <= 12; ++i) toks.push_back("w" + std::to_string(i));
    return Vocab::from_ordered_tokens(toks);
}

// Support-function test: p lies in the convex hull of the rows of `pts` iff
// its support value never exceeds the set's in any direction.
bool in_hull_2d(const std::vector<std::pair<double, double>>& pts, double px, double py, double tol) {
    for (int a = 0; a < 256; ++a) {
        const double th = 2.0 * 3.14159265358979 * a / 256.0;
        const double dx = std::cos(th), dy = std::sin(th);
        double best = -1e30;
        for (auto& [x, y] : pts) best = std::max(best, x * dx + y * dy);
        if (px * dx + py * dy > best + tol) return false;
    }
    return true;
}

int64_t hi_param_count(const ModelConfig& c) {
    const int64_t d = c.d, dff = c.ffn_width(), V = c.vocab_size, C = c.num_classes;
    const int64_t block = 4 * d * d + 2 * d * dff + 4 * d;
    int64_t emb = V * c.embed_width() + (c.k_max + 1) * d + d + c.m_max * d;
    if (c.pretrained_dim > 0) emb += static_cast<int64_t>(c.pretrained_dim) * d;
    return emb + 3 * c.layers * block + 2 * (d * d + 2 * d) + d * C + C;
}

int64_t flat_param_count(const ModelConfig& c) {
    const int64_t d = c.d, dff = c.ffn_width(), V = c.vocab_size, C = c.num_classes;
    const int64_t block = 4 * d * d + 2 * d * dff + 4 * d;
    int64_t emb = V * c.embed_width() + static_cast<int64_t>(c.flat_max_len) * d;
    if (c.pretrained_dim > 0) emb += static_cast<int64_t>(c.pretrained_dim) * d;
    return emb + c.layers * block + (d * d + 2 * d) + d * C + C;
}

}  // namespace

TEST_CASE("embed_document shape and table-lookup determinism") {
    auto cfg = tiny_cfg();
    Rng init(3);
    HiTransformerT<float> model(cfg, init);
    std::vector<Document> docs = {{0, "w1 w2. w3 w2."}};
    auto batch = encode_and_pad(tokenize_documents(docs), tiny_vocab(), cfg.k_max, cfg.m_max, cfg.num_classes);
    Rng fwd(0);
    auto h = embed_document(batch, model.embedding(), cfg, 0.0, false, fwd);
    CHECK(h.words->shape == Shape{1, cfg.m_max, cfg.k_max + 1, cfg.d});
    // "w2" sits at slot 1 of both sentences: identical embedding vectors
    for (int j = 0; j < cfg.d; ++j) {
        const auto a = h.words->data[static_cast<size_t>((0 * h.slots() + 1) * cfg.d + j)];
        const auto b = h.words->data[static_cast<size_t>((1 * h.slots() + 1) * cfg.d + j)];
        CHECK(a == b);
    }
}

TEST_CASE("embed_document rejects out-of-range ids with the document index") {
    auto cfg = tiny_cfg();
    Rng init(3);
    HiTransformerT<float> model(cfg, init);
    auto batch = encode_and_pad(tiny_docs(), tiny_vocab(), cfg.k_max, cfg.m_max, cfg.num_classes);
    batch.word_ids[static_cast<size_t>(1 * batch.M * batch.K1)] = 999;
    Rng fwd(0);
    CHECK_THROWS_WITH_AS(embed_document(batch, model.embedding(), cfg, 0.0, false, fwd), doctest::Contains("document 1"),
                         data_error);
}

TEST_CASE("attentive_pool frozen examples") {
    PoolParamsT<float> p;
    p.proj = make_tensor<float>({1, 1}, {1.0f});
    p.bias = make_tensor<float>({1}, {0.0f});
    p.query = make_tensor<float>({1}, {1.0f});

    // single valid element passes through exactly
    auto x1 = make_tensor<float>({1, 2, 1}, {4.25f, -100.0f});
    auto m1 = build_additive_mask<float>({1}, 2);
    CHECK(attentive_pool(x1, m1, p)->data[0] == 4.25f);

    // two identical elements: convexity pins the output
    auto x2 = make_tensor<float>({1, 2, 1}, {1.5f, 1.5f});
    auto m2 = build_additive_mask<float>({2}, 2);
    CHECK(attentive_pool(x2, m2, p)->data[0] == doctest::Approx(1.5f));

    // hand computation: scores = tanh([0, 10]), weights = softmax
    auto x3 = make_tensor<float>({1, 2, 1}, {0.0f, 10.0f});
    const double s0 = std::tanh(0.0), s1 = std::tanh(10.0);
    const double w1 = std::exp(s1) / (std::exp(s0) + std::exp(s1));
    CHECK(attentive_pool(x3, m2, p)->data[0] == doctest::Approx(10.0 * w1).epsilon(1e-5));
    CHECK(10.0 * w1 == doctest::Approx(7.3106).epsilon(1e-4));

    auto all_masked = make_full<float>({1, 2}, kMaskedOut);
    CHECK_THROWS_AS(attentive_pool(x3, all_masked, p), domain_error);
}

TEST_CASE("hierarchical_pool two-level hand computation at d=1") {
    PoolParamsT<float> p;
    p.proj = make_tensor<float>({1, 1}, {1.0f});
    p.bias = make_tensor<float>({1}, {0.0f});
    p.query = make_tensor<float>({1}, {1.0f});

    // one sentence, one real word (value 1.0) plus summary slot (value 2.0)
    HiddenStatesT<float> h;
    h.words = make_tensor<float>({1, 1, 2, 1}, {1.0f, 2.0f});
    h.word_mask = bool_to_additive<float>({1, 1}, {1, 1, 2});
    h.sent_mask = bool_to_additive<float>({1}, {1, 1});
    auto out = hierarchical_pool(h, p, p);
    CHECK(out->shape == Shape{1, 1});
    const double e1 = std::exp(std::tanh(1.0)), e2 = std::exp(std::tanh(2.0));
    const double expected = (e1 * 1.0 + e2 * 2.0) / (e1 + e2);  // sentence level is a single-slot pool
    CHECK(out->data[0] == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("hierarchical_pool ignores masked sentences exactly") {
    Rng rng(5);
    ParamMapT<float> params;
    auto wp = register_pool(params, "w", 4);
    auto sp = register_pool(params, "s", 4);
    params.initialize(rng);

    HiddenStatesT<float> h;
    h.words = TensorT<float>::create({1, 3, 3, 4});
    fill_uniform(*h.words, rng, -1.0f, 1.0f);
    h.word_mask = bool_to_additive<float>({1, 1, 1, 1, 1, 1, 0, 0, 0}, {1, 3, 3});
    h.sent_mask = bool_to_additive<float>({1, 1, 0}, {1, 3});
    for (int64_t i = 0; i < 3 * 4; ++i) h.words->data[2 * 12 + i] = 0.0f;
    auto a = hierarchical_pool(h, wp, sp);

    auto h2 = h;
    h2.words = std::make_shared<TensorT<float>>(*h.words);
    for (int64_t i = 0; i < 3 * 4; ++i) h2.words->data[2 * 12 + i] = 31337.0f;  // poisoned masked sentence
    auto b = hierarchical_pool(h2, wp, sp);
    CHECK(a->data == b->data);

    HiddenStatesT<float> empty = h;
    empty.sent_mask = bool_to_additive<float>({0, 0, 0}, {1, 3});
    CHECK_THROWS_AS(hierarchical_pool(empty, wp, sp), data_error);
}

TEST_CASE("pooled embeddings stay in their convex hulls at d=2") {
    Rng rng(17);
    ParamMapT<float> params;
    auto wp = register_pool(params, "w", 2);
    auto sp = register_pool(params, "s", 2);
    params.initialize(rng);

    for (int trial = 0; trial < 20; ++trial) {
        const int64_t M = 3, K1 = 4;
        HiddenStatesT<float> h;
        h.words = TensorT<float>::create({1, M, K1, 2});
        fill_uniform(*h.words, rng, -2.0f, 2.0f);
        h.word_mask = bool_to_additive<float>(std::vector<uint8_t>(static_cast<size_t>(M * K1), 1), {1, M, K1});
        h.sent_mask = bool_to_additive<float>(std::vector<uint8_t>(static_cast<size_t>(M), 1), {1, M});

        auto sent = attentive_pool(reshape(h.words, {M, K1, 2}),
                                   bool_to_additive<float>(std::vector<uint8_t>(static_cast<size_t>(M * K1), 1), {M, K1}),
                                   wp);
        for (int64_t m = 0; m < M; ++m) {
            std::vector<std::pair<double, double>> words;
            for (int64_t k = 0; k < K1; ++k)
                words.push_back({h.words->data[(m * K1 + k) * 2], h.words->data[(m * K1 + k) * 2 + 1]});
            CHECK(in_hull_2d(words, sent->data[m * 2], sent->data[m * 2 + 1], 1e-5));
        }

        auto doc = hierarchical_pool(h, wp, sp);
        std::vector<std::pair<double, double>> sents;
        for (int64_t m = 0; m < M; ++m) sents.push_back({sent->data[m * 2], sent->data[m * 2 + 1]});
        CHECK(in_hull_2d(sents, doc->data[0], doc->data[1], 1e-5));
    }
}

TEST_CASE("forward logits: shape, eval determinism") {
    auto cfg = tiny_cfg();
    Rng init(11);
    HiTransformerT<float> model(cfg, init);
    auto batch = encode_and_pad(tiny_docs(), tiny_vocab(), cfg.k_max, cfg.m_max, cfg.num_classes);
    Rng fwd(0);
    auto a = model.forward(batch, false, fwd);
    CHECK(a->shape == Shape{3, cfg.num_classes});
    auto b = model.forward(batch, false, fwd);
    CHECK(a->data == b->data);
}

TEST_CASE("padding a batch wider changes no logit beyond 1e-5") {
    auto cfg = tiny_cfg();
    cfg.k_max = 8;  // headroom so both encodings keep every word
    Rng init(13);
    HiTransformerT<float> model(cfg, init);
    auto docs = tiny_docs();
    auto vocab = tiny_vocab();
    auto tight = encode_and_pad(docs, vocab, 6, 3, cfg.num_classes);   // fits the longest doc exactly
    auto wide = encode_and_pad(docs, vocab, cfg.k_max, cfg.m_max, cfg.num_classes);
    Rng fwd(0);
    auto a = model.forward(tight, false, fwd);
    auto b = model.forward(wide, false, fwd);
    REQUIRE(a->numel() == b->numel());
    for (int64_t i = 0; i < a->numel(); ++i) CHECK(std::abs(a->data[i] - b->data[i]) <= 1e-5f);
}

TEST_CASE("ablation flag: no sent2 parameter receives gradient") {
    auto cfg = tiny_cfg();
    cfg.use_context_propagation = false;
    Rng init(19);
    HiTransformerT<float> model(cfg, init);
    auto batch = encode_and_pad(tiny_docs(), tiny_vocab(), cfg.k_max, cfg.m_max, cfg.num_classes);
    Rng fwd(0);
    auto logits = model.forward(batch, false, fwd);
    auto loss = softmax_cross_entropy(logits, batch.labels);
    backward(loss);
    model.params().ensure_grads();
    bool sent1_has_grad = false;
    for (auto& [name, e] : model.params()) {
        const bool is_sent2 = name.find(".sent2.") != std::string::npos;
        float mx = 0.0f;
        for (float g : e.tensor->grad) mx = std::max(mx, std::abs(g));
        if (is_sent2) CHECK(mx == 0.0f);
        if (name.find(".sent1.") != std::string::npos && mx > 0.0f) sent1_has_grad = true;
    }
    CHECK(sent1_has_grad);
}

TEST_CASE("parameter totals match the closed-form counts") {
    auto cfg = tiny_cfg();
    Rng init(1);
    HiTransformerT<float> hi(cfg, init);
    CHECK(hi.params().total_params() == hi_param_count(cfg));

    FlatTransformerT<float> flat(cfg, init);
    CHECK(flat.params().total_params() == flat_param_count(cfg));

    auto cfg2 = tiny_cfg();
    cfg2.pretrained_dim = 300;
    std::vector<float> table(static_cast<size_t>(cfg2.vocab_size) * 300, 0.25f);
    HiTransformerT<float> hi2(cfg2, init, &table);
    CHECK(hi2.params().total_params() == hi_param_count(cfg2));
    CHECK(hi2.embedding().word_table->data[0] == 0.25f);
    CHECK(hi2.embedding().word_proj != nullptr);

    // full-scale defaults, sanity on the closed form itself
    ModelConfig big;
    big.vocab_size = 1000;
    big.num_classes = 5;
    big.d_ff = 1024;
    Rng init2(2);
    HiTransformerT<float> hi3(big, init2);
    CHECK(hi3.params().total_params() == hi_param_count(big));
}

TEST_CASE("flat baseline truncates and classifies") {
    auto cfg = tiny_cfg();
    Rng init(23);
    FlatTransformerT<float> flat(cfg, init);
    std::vector<Document> docs = {{0, "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10. w11 w12 w1 w2 w3 w4 w5."}};
    auto toks = tokenize_documents(docs);
    CHECK(toks[0].sentences[0].size() + toks[0].sentences[1].size() == 17);
    auto batch = encode_flat(toks, tiny_vocab(), cfg.flat_max_len, cfg.num_classes);
    CHECK(batch.L == cfg.flat_max_len);  // 17 tokens truncated to 12
    CHECK(batch.lengths[0] == cfg.flat_max_len);
    Rng fwd(0);
    auto logits = flat.forward(batch, false, fwd);
    CHECK(logits->shape == Shape{1, cfg.num_classes});

    // hierarchical model accepts the same documents; shapes agree, values differ
    HiTransformerT<float> hi(cfg, init);
    auto hb = encode_and_pad(toks, tiny_vocab(), cfg.k_max, cfg.m_max, cfg.num_classes);
    auto hlogits = hi.forward(hb, false, fwd);
    CHECK(hlogits->shape == logits->shape);
}

TEST_CASE("pretrained embeddings flow through the projection") {
    auto cfg = tiny_cfg();
    cfg.pretrained_dim = 300;
    Rng init(29);
    std::vector<float> table(static_cast<size_t>(cfg.vocab_size) * 300);
    Rng filler(100);
    for (auto& v : table) v = filler.uniform(-0.1f, 0.1f);
    HiTransformerT<float> model(cfg, init, &table);
    auto batch = encode_and_pad(tiny_docs(), tiny_vocab(), cfg.k_max, cfg.m_max, cfg.num_classes);
    Rng fwd(0);
    auto logits = model.forward(batch, false, fwd);
    CHECK(logits->shape == Shape{3, cfg.num_classes});
}
