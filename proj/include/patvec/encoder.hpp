#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "patvec/corpus.hpp"
#include "patvec/linalg.hpp"

namespace patvec {

struct Tokenizer {
    // id 0 is always the unknown token; real tokens follow in frequency order.
    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int> token_to_id;
    int unk_id = 0;
    int max_len = 512;

    std::size_t vocab_size() const { return id_to_token.size(); }
};

// Frequency-ranked vocabulary over lowercased alphanumeric tokens. Ties at
// equal frequency break lexicographically so the result is deterministic.
// The unknown token is added on top of the max_vocab cap.
Tokenizer build_vocab(const std::vector<std::string>& texts, std::size_t max_vocab,
                      std::size_t min_freq, int max_len = 512);

// Ids of the first max_len tokens; unknown words map to unk_id.
std::vector<int> tokenize(const Tokenizer& tok, std::string_view text);

enum class Pooling { Mean, First };
std::string_view to_string(Pooling p);
std::optional<Pooling> parse_pooling(std::string_view s);

// Bag-of-embeddings encoder: token embedding matrix plus a linear projection.
struct EncoderParams {
    Matrix embedding;           // vocab_size x dim
    Matrix projection;          // dim x out_dim
    std::vector<double> bias;   // out_dim
    std::uint64_t rng_seed = 0;

    std::size_t dim() const { return embedding.cols; }
    std::size_t out_dim() const { return projection.cols; }

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Embeddings uniform in [-0.05, 0.05] from the seeded generator; projection
// starts as the (rectangular) identity with zero bias.
EncoderParams init_encoder_params(std::size_t vocab_size, std::size_t dim,
                                  std::size_t out_dim, std::uint64_t seed);

// Pre-projection document vector. The mean accumulates rows in sorted id
// order with multiplicities, so permutations of one bag pool bit-identically.
std::vector<double> pool_tokens(const EncoderParams& params, const std::vector<int>& ids,
                                Pooling pooling);

// Mean: projection of the arithmetic mean of the token rows.
// First: projection of the first token's row (the [CLS]-analogue).
std::vector<double> encode(const EncoderParams& params, const std::vector<int>& ids,
                           Pooling pooling);

// Uniform source of patent vectors; all vectors of one provider share dim().
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::optional<std::vector<double>> vector_for(const std::string& patent_id) const = 0;
    virtual std::size_t dim() const = 0;
};

class TableProvider : public EmbeddingProvider {
public:
    TableProvider(std::map<std::string, std::vector<double>> table, std::size_t dim)
        : table_(std::move(table)), dim_(dim) {}

    std::optional<std::vector<double>> vector_for(const std::string& patent_id) const override;
    std::size_t dim() const override { return dim_; }

private:
    std::map<std::string, std::vector<double>> table_;
    std::size_t dim_;
};

// Live encoder over a corpus: compose text, tokenize, encode. Ids without
// resolvable text (or that tokenize to nothing) are reported missing.
class ModelProvider : public EmbeddingProvider {
public:
    ModelProvider(const Corpus& corpus, Tokenizer tok, EncoderParams params,
                  Pooling pooling, TextMode mode, std::string separator = "[SEP]")
        : corpus_(&corpus),
          tok_(std::move(tok)),
          params_(std::move(params)),
          pooling_(pooling),
          mode_(mode),
          separator_(std::move(separator)) {}

    std::optional<std::vector<double>> vector_for(const std::string& patent_id) const override;
    std::size_t dim() const override { return params_.out_dim(); }

    const EncoderParams& params() const { return params_; }
    const Tokenizer& tokenizer() const { return tok_; }

private:
    const Corpus* corpus_;
    Tokenizer tok_;
    EncoderParams params_;
    Pooling pooling_;
    TextMode mode_;
    std::string separator_;
};

struct EmbedResult {
    std::map<std::string, std::vector<double>> vectors;
    std::vector<std::string> missing;  // ids the provider could not embed
};

EmbedResult embed_corpus(const EmbeddingProvider& provider,
                         const std::vector<std::string>& ids, int threads = 1);

// Text table: one line per patent, id followed by whitespace-separated floats.
TableProvider load_external_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path,
                     const std::map<std::string, std::vector<double>>& vectors);

// Trained model container: tokenizer, parameters and the text conventions
// they were trained with. JSON on disk, exact double round-trip.
struct Model {
    Tokenizer tokenizer;
    EncoderParams params;
    Pooling pooling = Pooling::Mean;
    TextMode text_mode = TextMode::TitleAbstract;
    std::string separator = "[SEP]";
};

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace patvec
