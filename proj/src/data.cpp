#include "hit/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hit/rng.hpp"

namespace hit {

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && is_ws(s[a])) ++a;
    while (b > a && is_ws(s[b - 1])) --b;
    return s.substr(a, b - a);
}

}  // namespace

std::vector<std::string> split_sentences(const std::string& text) {
    if (trim(text).empty()) throw data_error("split_sentences: empty or whitespace-only text");
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_ws(text[i + 1]))) {
            std::string frag = trim(text.substr(start, i - start + 1));
            if (!frag.empty()) out.push_back(std::move(frag));
            start = i + 1;
        }
    }
    if (start < text.size()) {
        std::string frag = trim(text.substr(start));
        if (!frag.empty()) out.push_back(std::move(frag));
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) && u < 128) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TokenizedDoc tokenize_document(const Document& doc) {
    TokenizedDoc td;
    td.label = doc.label;
    for (const std::string& sent : split_sentences(doc.text)) {
        auto toks = tokenize(sent);
        if (!toks.empty()) td.sentences.push_back(std::move(toks));
    }
    return td;
}

std::vector<TokenizedDoc> tokenize_documents(const std::vector<Document>& docs) {
    std::vector<TokenizedDoc> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(tokenize_document(d));
    return out;
}

const std::string& Vocab::token_of(int32_t id) const {
    if (id < 0 || id >= size()) throw invariant_error("Vocab::token_of: id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
}

Vocab Vocab::from_ordered_tokens(const std::vector<std::string>& ordered) {
    Vocab v;
    v.tokens_ = {"<pad>", "<unk>", "<cls>"};
    for (const auto& tok : ordered) {
        if (v.map_.count(tok)) throw invariant_error("Vocab: duplicate token: " + tok);
        v.map_[tok] = static_cast<int32_t>(v.tokens_.size());
        v.tokens_.push_back(tok);
    }
    return v;
}

Vocab build_vocab(const std::vector<Document>& docs, int min_count) {
    if (docs.empty()) throw data_error("build_vocab: empty corpus");
    std::map<std::string, int64_t> counts;
    for (const auto& d : docs)
        for (auto& tok : tokenize(d.text)) ++counts[tok];
    if (counts.empty()) throw data_error("build_vocab: corpus contains no tokens");
    std::vector<std::pair<std::string, int64_t>> items(counts.begin(), counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> kept;
    for (auto& [tok, cnt] : items)
        if (cnt >= min_count) kept.push_back(tok);
    return Vocab::from_ordered_tokens(kept);
}

void save_vocab(const std::string& path, const Vocab& vocab) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write vocab file: " + path);
    const auto& toks = vocab.tokens();
    for (size_t i = Vocab::kReserved; i < toks.size(); ++i) out << toks[i] << "\n";
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open vocab file: " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) toks.push_back(line);
    }
    return Vocab::from_ordered_tokens(toks);
}

DocumentBatch encode_and_pad(const std::vector<const TokenizedDoc*>& docs, const Vocab& vocab, int k_max, int m_max,
                             int num_classes) {
    if (k_max < 1 || m_max < 1) throw config_error("encode_and_pad: k_max and m_max must be >= 1");
    if (docs.empty()) throw data_error("encode_and_pad: empty batch");
    DocumentBatch batch;
    batch.B = static_cast<int64_t>(docs.size());
    batch.M = m_max;
    batch.K1 = k_max + 1;
    batch.word_ids.assign(static_cast<size_t>(batch.B * batch.M * batch.K1), Vocab::kPad);
    batch.word_mask.assign(static_cast<size_t>(batch.B * batch.M * batch.K1), 0);
    batch.sent_mask.assign(static_cast<size_t>(batch.B * batch.M), 0);
    batch.labels.resize(static_cast<size_t>(batch.B));
    batch.real_sents.resize(static_cast<size_t>(batch.B));
    batch.real_words.resize(static_cast<size_t>(batch.B));

    for (int64_t b = 0; b < batch.B; ++b) {
        const TokenizedDoc& doc = *docs[static_cast<size_t>(b)];
        if (doc.label < 0 || (num_classes > 0 && doc.label >= num_classes))
            throw data_error("encode_and_pad: unknown label class " + std::to_string(doc.label) + " in document " +
                             std::to_string(b));
        if (doc.sentences.empty())
            throw data_error("encode_and_pad: document " + std::to_string(b) + " has no sentences with tokens");
        batch.labels[static_cast<size_t>(b)] = doc.label;
        const int64_t n_sents = std::min<int64_t>(static_cast<int64_t>(doc.sentences.size()), m_max);
        batch.real_sents[static_cast<size_t>(b)] = static_cast<int32_t>(n_sents);
        for (int64_t m = 0; m < n_sents; ++m) {
            const auto& toks = doc.sentences[static_cast<size_t>(m)];
            const int64_t n_words = std::min<int64_t>(static_cast<int64_t>(toks.size()), k_max);
            batch.real_words[static_cast<size_t>(b)].push_back(static_cast<int32_t>(n_words));
            batch.sent_mask[static_cast<size_t>(b * batch.M + m)] = 1;
            const int64_t base = (b * batch.M + m) * batch.K1;
            for (int64_t k = 0; k < n_words; ++k) {
                batch.word_ids[static_cast<size_t>(base + k)] = vocab.id_of(toks[static_cast<size_t>(k)]);
                batch.word_mask[static_cast<size_t>(base + k)] = 1;
            }
            batch.word_ids[static_cast<size_t>(base + k_max)] = Vocab::kCls;
            batch.word_mask[static_cast<size_t>(base + k_max)] = 1;
        }
    }
    return batch;
}

DocumentBatch encode_and_pad(const std::vector<TokenizedDoc>& docs, const Vocab& vocab, int k_max, int m_max,
                             int num_classes) {
    std::vector<const TokenizedDoc*> ptrs;
    ptrs.reserve(docs.size());
    for (const auto& d : docs) ptrs.push_back(&d);
    return encode_and_pad(ptrs, vocab, k_max, m_max, num_classes);
}

FlatBatch encode_flat(const std::vector<const TokenizedDoc*>& docs, const Vocab& vocab, int max_len, int num_classes) {
    if (max_len < 1) throw config_error("encode_flat: max_len must be >= 1");
    if (docs.empty()) throw data_error("encode_flat: empty batch");
    FlatBatch batch;
    batch.B = static_cast<int64_t>(docs.size());
    std::vector<std::vector<int32_t>> streams(docs.size());
    int64_t longest = 0;
    for (int64_t b = 0; b < batch.B; ++b) {
        const TokenizedDoc& doc = *docs[static_cast<size_t>(b)];
        if (doc.label < 0 || (num_classes > 0 && doc.label >= num_classes))
            throw data_error("encode_flat: unknown label class " + std::to_string(doc.label) + " in document " +
                             std::to_string(b));
        auto& stream = streams[static_cast<size_t>(b)];
        for (const auto& sent : doc.sentences) {
            for (const auto& tok : sent) {
                if (static_cast<int64_t>(stream.size()) >= max_len) break;
                stream.push_back(vocab.id_of(tok));
            }
            if (static_cast<int64_t>(stream.size()) >= max_len) break;
        }
        if (stream.empty()) throw data_error("encode_flat: document " + std::to_string(b) + " has no tokens");
        longest = std::max<int64_t>(longest, static_cast<int64_t>(stream.size()));
        batch.labels.push_back(doc.label);
    }
    batch.L = longest;
    batch.ids.assign(static_cast<size_t>(batch.B * batch.L), Vocab::kPad);
    for (int64_t b = 0; b < batch.B; ++b) {
        const auto& stream = streams[static_cast<size_t>(b)];
        batch.lengths.push_back(static_cast<int64_t>(stream.size()));
        std::copy(stream.begin(), stream.end(), batch.ids.begin() + b * batch.L);
    }
    return batch;
}

FlatBatch encode_flat(const std::vector<TokenizedDoc>& docs, const Vocab& vocab, int max_len, int num_classes) {
    std::vector<const TokenizedDoc*> ptrs;
    ptrs.reserve(docs.size());
    for (const auto& d : docs) ptrs.push_back(&d);
    return encode_flat(ptrs, vocab, max_len, num_classes);
}

std::vector<Document> load_jsonl_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open dataset: " + path);
    std::vector<Document> docs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw data_error(path + ":" + std::to_string(lineno) + ": malformed JSON record: " + e.what());
        }
        if (!j.is_object() || !j.contains("label") || !j.contains("text"))
            throw data_error(path + ":" + std::to_string(lineno) + ": record must have \"label\" and \"text\"");
        if (!j["label"].is_number_integer())
            throw data_error(path + ":" + std::to_string(lineno) + ": \"label\" must be an integer");
        if (!j["text"].is_string())
            throw data_error(path + ":" + std::to_string(lineno) + ": \"text\" must be a string");
        Document d;
        d.label = j["label"].get<int32_t>();
        d.text = j["text"].get<std::string>();
        docs.push_back(std::move(d));
    }
    if (docs.empty()) throw data_error(path + ": dataset is empty");
    return docs;
}

void save_jsonl_dataset(const std::string& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write dataset: " + path);
    for (const auto& d : docs) {
        nlohmann::json j;
        j["label"] = d.label;
        j["text"] = d.text;
        out << j.dump() << "\n";
    }
}

SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "keyword") return SynthKind::keyword;
    if (s == "xor") return SynthKind::xor_pair;
    throw config_error("unknown synthetic task kind: " + s + " (expected keyword|xor)");
}

SignalPolicy signal_policy_from_string(const std::string& s) {
    if (s == "uniform") return SignalPolicy::uniform;
    if (s == "late") return SignalPolicy::late;
    throw config_error("unknown signal position policy: " + s + " (expected uniform|late)");
}

namespace {

std::string join_sentence(const std::vector<std::string>& words) {
    std::string s;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) s.push_back(' ');
        s += words[i];
    }
    s.push_back('.');
    return s;
}

}  // namespace

std::vector<Document> gen_synthetic_task(SynthKind kind, int n_docs, int m_sents, int k_words, int vocab_size,
                                         SignalPolicy policy, int late_boundary, uint64_t seed) {
    if (n_docs < 2) throw config_error("gen_synthetic_task: need at least 2 documents");
    if (m_sents < 1 || k_words < 1) throw config_error("gen_synthetic_task: M and K must be >= 1");
    if (vocab_size < 2) throw config_error("gen_synthetic_task: vocab_size must be >= 2");
    const int64_t total = static_cast<int64_t>(m_sents) * k_words;
    if (kind == SynthKind::keyword && policy == SignalPolicy::late &&
        (late_boundary + k_words - 1) / k_words >= m_sents)
        throw config_error("gen_synthetic_task: M*K = " + std::to_string(total) +
                           " leaves no sentence starting at or beyond the late boundary " +
                           std::to_string(late_boundary));
    if (kind == SynthKind::xor_pair && m_sents < 2)
        throw config_error("gen_synthetic_task: xor needs at least 2 sentences per document");

    Rng rng(seed);
    auto filler = [&](int i) { return "w" + std::to_string(i); };
    auto random_doc = [&]() {
        std::vector<std::vector<std::string>> sents(static_cast<size_t>(m_sents));
        for (auto& s : sents) {
            s.resize(static_cast<size_t>(k_words));
            for (auto& w : s) w = filler(static_cast<int>(rng.below(vocab_size)));
        }
        return sents;
    };

    std::vector<Document> docs;
    docs.reserve(static_cast<size_t>(n_docs));
    if (kind == SynthKind::keyword) {
        // Positives carry the signal token throughout one uniformly chosen
        // sentence; negatives never contain it (the filler namespace "w<i>"
        // is disjoint from "kw"). Under the late policy the chosen sentence
        // starts at or beyond the boundary, so every occurrence is invisible
        // to a stream truncated there.
        const int n_pos = (n_docs + 1) / 2;
        const int64_t first_late_sentence = (late_boundary + k_words - 1) / k_words;
        for (int i = 0; i < n_docs; ++i) {
            auto sents = random_doc();
            const bool positive = i < n_pos;
            if (positive) {
                int64_t s;
                if (policy == SignalPolicy::late)
                    s = first_late_sentence + rng.below(m_sents - first_late_sentence);
                else
                    s = rng.below(m_sents);
                for (auto& w : sents[static_cast<size_t>(s)]) w = "kw";
            }
            std::string text;
            for (size_t s = 0; s < sents.size(); ++s) {
                if (s) text.push_back(' ');
                text += join_sentence(sents[s]);
            }
            docs.push_back({positive ? 1 : 0, std::move(text)});
        }
    } else {
        // Each present signal token is carried by one sentence of its own (the
        // two sentences always distinct), so the label hinges on combining
        // evidence across sentences rather than on needle detection.
        for (int i = 0; i < n_docs; ++i) {
            const int quadrant = i % 4;  // 00, 01, 10, 11 round-robin keeps labels balanced
            const bool has_a = quadrant == 2 || quadrant == 3;
            const bool has_b = quadrant == 1 || quadrant == 3;
            auto sents = random_doc();
            int64_t sa = -1, sb = -1;
            if (has_a) sa = rng.below(m_sents);
            if (has_b) {
                do {
                    sb = rng.below(m_sents);
                } while (sb == sa);
            }
            if (has_a)
                for (auto& w : sents[static_cast<size_t>(sa)]) w = "siga";
            if (has_b)
                for (auto& w : sents[static_cast<size_t>(sb)]) w = "sigb";
            std::string text;
            for (size_t s = 0; s < sents.size(); ++s) {
                if (s) text.push_back(' ');
                text += join_sentence(sents[s]);
            }
            docs.push_back({(has_a != has_b) ? 1 : 0, std::move(text)});
        }
    }
    rng.shuffle(docs);
    return docs;
}

EmbeddingLoad load_embedding_table(const std::string& path, const Vocab& vocab, uint64_t seed, int dim) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open embedding file: " + path);
    EmbeddingLoad load;
    load.rows = vocab.size();
    load.dim = dim;
    load.table.resize(static_cast<size_t>(load.rows * dim));
    Rng rng(seed);
    for (float& v : load.table) v = static_cast<float>(rng.normal(0.0, 0.02));

    std::string line;
    int lineno = 0;
    std::vector<uint8_t> seen(static_cast<size_t>(load.rows), 0);
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        const int32_t id = vocab.id_of(token);
        std::vector<float> row;
        row.reserve(static_cast<size_t>(dim));
        double v;
        while (ss >> v) row.push_back(static_cast<float>(v));
        if (static_cast<int>(row.size()) != dim)
            throw data_error(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                             " values, got " + std::to_string(row.size()));
        if (id != Vocab::kUnk || token == vocab.token_of(Vocab::kUnk)) {
            if (id >= Vocab::kReserved && !seen[static_cast<size_t>(id)]) {
                seen[static_cast<size_t>(id)] = 1;
                ++load.matched;
            }
            std::copy(row.begin(), row.end(), load.table.begin() + static_cast<int64_t>(id) * dim);
        }
    }
    const int64_t candidates = load.rows - Vocab::kReserved;
    load.coverage = candidates > 0 ? static_cast<double>(load.matched) / static_cast<double>(candidates) : 0.0;
    return load;
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
    if (docs.empty()) throw data_error("corpus_stats: empty corpus");
    CorpusStats st;
    st.n_docs = static_cast<int64_t>(docs.size());
    std::set<int32_t> classes;
    double words = 0.0, sents = 0.0;
    for (const auto& d : docs) {
        words += static_cast<double>(tokenize(d.text).size());
        sents += static_cast<double>(split_sentences(d.text).size());
        classes.insert(d.label);
    }
    st.avg_words = words / static_cast<double>(st.n_docs);
    st.avg_sents = sents / static_cast<double>(st.n_docs);
    st.n_classes = static_cast<int64_t>(classes.size());
    return st;
}

}  // namespace hit
