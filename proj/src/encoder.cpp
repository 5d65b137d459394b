#include "patvec/encoder.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "patvec/errors.hpp"
#include "patvec/rng.hpp"
#include "patvec/text.hpp"

namespace patvec {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Pooling p) { return p == Pooling::Mean ? "mean" : "first"; }

std::optional<Pooling> parse_pooling(std::string_view s) {
    if (s == "mean") return Pooling::Mean;
    if (s == "first") return Pooling::First;
    return std::nullopt;
}

Tokenizer build_vocab(const std::vector<std::string>& texts, std::size_t max_vocab,
                      std::size_t min_freq, int max_len) {
    if (texts.empty()) throw DataError("build_vocab: no input texts");
    if (max_len < 1) throw ConfigError("build_vocab: max_len must be >= 1");

    std::unordered_map<std::string, std::size_t> freq;
    for (const auto& text : texts)
        for (auto& t : split_tokens(text)) ++freq[t];
    if (freq.empty()) throw DataError("build_vocab: input contains no tokens");

    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Tokenizer tok;
    tok.max_len = max_len;
    tok.id_to_token.push_back("<unk>");
    for (const auto& [token, count] : ranked) {
        if (count < min_freq) break;
        if (tok.id_to_token.size() > max_vocab) break;  // unk rides on top of the cap
        tok.token_to_id.emplace(token, static_cast<int>(tok.id_to_token.size()));
        tok.id_to_token.push_back(token);
    }
    return tok;
}

std::vector<int> tokenize(const Tokenizer& tok, std::string_view text) {
    std::vector<int> ids;
    for (const auto& t : split_tokens(text)) {
        if (ids.size() >= static_cast<std::size_t>(tok.max_len)) break;
        auto it = tok.token_to_id.find(t);
        ids.push_back(it == tok.token_to_id.end() ? tok.unk_id : it->second);
    }
    return ids;
}

EncoderParams init_encoder_params(std::size_t vocab_size, std::size_t dim,
                                  std::size_t out_dim, std::uint64_t seed) {
    if (vocab_size == 0 || dim == 0 || out_dim == 0)
        throw ConfigError("encoder dimensions must be positive");
    EncoderParams p;
    p.rng_seed = seed;
    p.embedding = Matrix(vocab_size, dim);
    Rng rng(seed);
    for (auto& v : p.embedding.data) v = rng.uniform_real(-0.05, 0.05);
    p.projection = Matrix(dim, out_dim);
    for (std::size_t i = 0; i < std::min(dim, out_dim); ++i) p.projection.at(i, i) = 1.0;
    p.bias.assign(out_dim, 0.0);
    return p;
}

std::vector<double> pool_tokens(const EncoderParams& params, const std::vector<int>& ids,
                                Pooling pooling) {
    if (ids.empty()) throw DataError("encode: empty document");
    const std::size_t d = params.dim();
    auto check = [&](int id) {
        if (id < 0 || static_cast<std::size_t>(id) >= params.embedding.rows)
            throw DataError("encode: token id out of range");
    };
    std::vector<double> x(d, 0.0);
    if (pooling == Pooling::First) {
        check(ids.front());
        auto row = params.embedding.row(static_cast<std::size_t>(ids.front()));
        x.assign(row.begin(), row.end());
        return x;
    }
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        const int id = sorted[i];
        check(id);
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == id) ++j;
        const double count = static_cast<double>(j - i);
        auto row = params.embedding.row(static_cast<std::size_t>(id));
        for (std::size_t k = 0; k < d; ++k) x[k] += count * row[k];
        i = j;
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (auto& v : x) v *= inv;
    return x;
}

std::vector<double> encode(const EncoderParams& params, const std::vector<int>& ids,
                           Pooling pooling) {
    const std::vector<double> x = pool_tokens(params, ids, pooling);
    const std::size_t out_dim = params.out_dim();
    std::vector<double> y(params.bias);
    for (std::size_t i = 0; i < params.dim(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        auto wrow = params.projection.row(i);
        for (std::size_t j = 0; j < out_dim; ++j) y[j] += xi * wrow[j];
    }
    return y;
}

std::optional<std::vector<double>> TableProvider::vector_for(
    const std::string& patent_id) const {
    auto it = table_.find(patent_id);
    if (it == table_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::vector<double>> ModelProvider::vector_for(
    const std::string& patent_id) const {
    std::string text;
    try {
        text = compose_text(*corpus_, patent_id, mode_, separator_);
    } catch (const DataError&) {
        return std::nullopt;
    }
    const auto ids = tokenize(tok_, text);
    if (ids.empty()) return std::nullopt;
    return encode(params_, ids, pooling_);
}

EmbedResult embed_corpus(const EmbeddingProvider& provider,
                         const std::vector<std::string>& ids, int threads) {
    std::vector<std::optional<std::vector<double>>> slots(ids.size());
    const int n_threads = std::max(1, threads);
    if (n_threads == 1 || ids.size() < 2) {
        for (std::size_t i = 0; i < ids.size(); ++i) slots[i] = provider.vector_for(ids[i]);
    } else {
        std::vector<std::thread> workers;
        std::size_t chunk = (ids.size() + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const std::size_t lo = static_cast<std::size_t>(t) * chunk;
            const std::size_t hi = std::min(ids.size(), lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back([&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) slots[i] = provider.vector_for(ids[i]);
            });
        }
        for (auto& w : workers) w.join();
    }

    EmbedResult result;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (slots[i]) {
            result.vectors.emplace(ids[i], std::move(*slots[i]));
        } else {
            result.missing.push_back(ids[i]);
        }
    }
    std::sort(result.missing.begin(), result.missing.end());
    return result;
}

TableProvider load_external_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::map<std::string, std::vector<double>> table;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        is.imbue(std::locale::classic());
        std::string id;
        is >> id;
        std::vector<double> vec;
        double v;
        while (is >> v) vec.push_back(v);
        if (id.empty() || vec.empty())
            throw DataError(path.string() + " line " + std::to_string(line_no) +
                            ": expected id followed by floats");
        if (dim == 0) dim = vec.size();
        if (vec.size() != dim)
            throw DataError(path.string() + ": embedding for '" + id + "' has dimension " +
                            std::to_string(vec.size()) + ", expected " + std::to_string(dim));
        if (!table.emplace(id, std::move(vec)).second)
            throw DataError(path.string() + ": duplicate embedding id '" + id + "'");
    }
    if (table.empty()) throw DataError(path.string() + ": empty embedding file");
    return TableProvider(std::move(table), dim);
}

void save_embeddings(const std::filesystem::path& path,
                     const std::map<std::string, std::vector<double>>& vectors) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& [id, vec] : vectors) {
        out << id;
        for (double v : vec) out << ' ' << format_double(v);
        out << '\n';
    }
}

namespace {

ojson matrix_to_json(const Matrix& m) {
    ojson j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data"] = m.data;
    return j;
}

Matrix matrix_from_json(const ojson& j) {
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw DataError("model: matrix shape mismatch");
    return m;
}

}  // namespace

void save_model(const std::filesystem::path& path, const Model& model) {
    ojson j;
    j["format"] = "patvec-model";
    j["version"] = 1;
    j["seed"] = model.params.rng_seed;
    j["dim"] = model.params.dim();
    j["out_dim"] = model.params.out_dim();
    j["max_len"] = model.tokenizer.max_len;
    j["pooling"] = std::string(to_string(model.pooling));
    j["text_mode"] = std::string(to_string(model.text_mode));
    j["separator"] = model.separator;
    j["vocab"] = model.tokenizer.id_to_token;
    j["embedding"] = matrix_to_json(model.params.embedding);
    j["projection"] = matrix_to_json(model.params.projection);
    j["bias"] = model.params.bias;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << j.dump() << "\n";
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    ojson j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed model file (" + std::string(e.what()) + ")");
    }
    if (!j.contains("format") || j["format"] != "patvec-model")
        throw DataError(path.string() + ": not a patvec model file");
    if (j.at("version").get<int>() != 1)
        throw DataError(path.string() + ": unsupported model version");

    Model model;
    model.params.rng_seed = j.at("seed").get<std::uint64_t>();
    model.tokenizer.max_len = j.at("max_len").get<int>();
    model.tokenizer.id_to_token = j.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 1; i < model.tokenizer.id_to_token.size(); ++i)
        model.tokenizer.token_to_id.emplace(model.tokenizer.id_to_token[i],
                                            static_cast<int>(i));
    auto pooling = parse_pooling(j.at("pooling").get<std::string>());
    auto mode = parse_text_mode(j.at("text_mode").get<std::string>());
    if (!pooling || !mode) throw DataError(path.string() + ": unknown pooling or text mode");
    model.pooling = *pooling;
    model.text_mode = *mode;
    model.separator = j.at("separator").get<std::string>();
    model.params.embedding = matrix_from_json(j.at("embedding"));
    model.params.projection = matrix_from_json(j.at("projection"));
    model.params.bias = j.at("bias").get<std::vector<double>>();
    if (model.params.embedding.rows != model.tokenizer.vocab_size())
        throw DataError(path.string() + ": vocab and embedding row count differ");
    if (model.params.projection.rows != model.params.dim() ||
        model.params.bias.size() != model.params.out_dim())
        throw DataError(path.string() + ": inconsistent parameter shapes");
    return model;
}

}  // namespace patvec
