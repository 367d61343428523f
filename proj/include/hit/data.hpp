#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hit/errors.hpp"

namespace hit {

struct Document {
    int32_t label = 0;
    std::string text;
};

// Sentence-split, tokenized view of a document. Sentences that contain no
// tokens (pure punctuation) are dropped here.
struct TokenizedDoc {
    int32_t label = 0;
    std::vector<std::vector<std::string>> sentences;
};

// Sentence boundary: '.', '!' or '?' followed by whitespace or end of text.
// Delimiters are kept, fragments are trimmed, empty fragments dropped. A
// trailing fragment without a terminator is kept. No abbreviation handling:
// "Mr. Smith" splits after "Mr." by design.
std::vector<std::string> split_sentences(const std::string& text);

// Lowercased maximal runs of ASCII alphanumerics.
std::vector<std::string> tokenize(const std::string& text);

TokenizedDoc tokenize_document(const Document& doc);
std::vector<TokenizedDoc> tokenize_documents(const std::vector<Document>& docs);

class Vocab {
  public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;
    static constexpr int32_t kCls = 2;
    static constexpr int32_t kReserved = 3;

    int32_t id_of(const std::string& token) const {
        auto it = map_.find(token);
        return it == map_.end() ? kUnk : it->second;
    }
    int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
    const std::string& token_of(int32_t id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    // `ordered` must not contain duplicates or reserved markers; ids are
    // assigned 3, 4, ... in the given order.
    static Vocab from_ordered_tokens(const std::vector<std::string>& ordered);

  private:
    std::map<std::string, int32_t> map_;
    std::vector<std::string> tokens_;
};

// Tokens with count >= min_count, ids in descending frequency then
// lexicographic order, starting after the reserved ids.
Vocab build_vocab(const std::vector<Document>& docs, int min_count);

void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

// Padded word-id batch. Slot K1-1 of every real sentence holds the CLS id
// and is unmasked; PAD everywhere else that is masked out.
struct DocumentBatch {
    int64_t B = 0, M = 0, K1 = 0;
    std::vector<int32_t> word_ids;   // [B, M, K1]
    std::vector<uint8_t> word_mask;  // [B, M, K1], 1 = valid
    std::vector<uint8_t> sent_mask;  // [B, M], 1 = real sentence
    std::vector<int32_t> labels;     // [B]
    std::vector<int32_t> real_sents;
    std::vector<std::vector<int32_t>> real_words;  // per doc, per kept sentence
};

// Keeps the first k_max words of each sentence and the first m_max sentences
// of each document. num_classes > 0 validates labels.
DocumentBatch encode_and_pad(const std::vector<const TokenizedDoc*>& docs, const Vocab& vocab, int k_max, int m_max,
                             int num_classes);
DocumentBatch encode_and_pad(const std::vector<TokenizedDoc>& docs, const Vocab& vocab, int k_max, int m_max,
                             int num_classes);

// Word stream for the flat baseline: document tokens in order, truncated to
// max_len; the batch is padded to the longest surviving length.
struct FlatBatch {
    int64_t B = 0, L = 0;
    std::vector<int32_t> ids;      // [B, L]
    std::vector<int64_t> lengths;  // [B]
    std::vector<int32_t> labels;   // [B]
};

FlatBatch encode_flat(const std::vector<const TokenizedDoc*>& docs, const Vocab& vocab, int max_len, int num_classes);
FlatBatch encode_flat(const std::vector<TokenizedDoc>& docs, const Vocab& vocab, int max_len, int num_classes);

// One {"label": int, "text": string} object per line.
std::vector<Document> load_jsonl_dataset(const std::string& path);
void save_jsonl_dataset(const std::string& path, const std::vector<Document>& docs);

enum class SynthKind { keyword, xor_pair };
enum class SignalPolicy { uniform, late };

SynthKind synth_kind_from_string(const std::string& s);
SignalPolicy signal_policy_from_string(const std::string& s);

// Deterministic synthetic corpora.
//   keyword: label 1 iff the token "kw" appears, carried by one uniformly
//            chosen sentence; policy `late` forces every occurrence to flat
//            token index >= late_boundary.
//   xor_pair: label = parity of presence of "siga"/"sigb", never both in one
//             sentence.
// Class-balanced within one document either way.
std::vector<Document> gen_synthetic_task(SynthKind kind, int n_docs, int m_sents, int k_words, int vocab_size,
                                         SignalPolicy policy, int late_boundary, uint64_t seed);

struct EmbeddingLoad {
    std::vector<float> table;  // [vocab, dim] row-major
    int64_t rows = 0;
    int64_t dim = 0;
    int64_t matched = 0;
    double coverage = 0.0;  // matched / non-reserved vocab entries
};

// Text format: token followed by `dim` whitespace-separated decimals per
// line. Vocab tokens absent from the file keep seeded N(0, 0.02) rows.
EmbeddingLoad load_embedding_table(const std::string& path, const Vocab& vocab, uint64_t seed, int dim = 300);

struct CorpusStats {
    int64_t n_docs = 0;
    double avg_words = 0.0;
    double avg_sents = 0.0;
    int64_t n_classes = 0;
};

CorpusStats corpus_stats(const std::vector<Document>& docs);

}  // namespace hit
