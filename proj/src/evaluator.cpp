#include "patvec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "patvec/errors.hpp"
#include "patvec/rng.hpp"
#include "patvec/text.hpp"

namespace patvec {

using ojson = nlohmann::ordered_json;

std::string_view to_string(SimilarityMetric m) {
    return m == SimilarityMetric::Cosine ? "cosine" : "l2";
}

std::optional<SimilarityMetric> parse_similarity_metric(std::string_view s) {
    if (s == "cosine") return SimilarityMetric::Cosine;
    if (s == "l2") return SimilarityMetric::L2;
    return std::nullopt;
}

std::string_view to_string(MetricSelector m) {
    switch (m) {
        case MetricSelector::Rfr: return "rfr";
        case MetricSelector::Ap: return "ap";
        case MetricSelector::Mrr10: return "mrr10";
    }
    return "ap";
}

std::optional<MetricSelector> parse_metric_selector(std::string_view s) {
    if (s == "rfr") return MetricSelector::Rfr;
    if (s == "ap") return MetricSelector::Ap;
    if (s == "mrr10") return MetricSelector::Mrr10;
    return std::nullopt;
}

namespace {

// Shared ordering: score descending, id ascending on ties.
RankedList sort_by_score(std::string focal_id, std::vector<std::string> ids,
                         std::vector<double> scores) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    RankedList out;
    out.focal_id = std::move(focal_id);
    out.candidate_ids.reserve(ids.size());
    out.scores.reserve(ids.size());
    for (auto i : order) {
        out.candidate_ids.push_back(std::move(ids[i]));
        out.scores.push_back(scores[i]);
    }
    return out;
}

}  // namespace

RankedList rank_candidates(const EmbeddingProvider& provider, const TestSample& sample,
                           SimilarityMetric metric) {
    auto focal_vec = provider.vector_for(sample.focal_id);
    if (!focal_vec) throw DataError("missing embedding for '" + sample.focal_id + "'");
    std::vector<std::string> ids = sample.candidate_ids();
    std::vector<double> scores;
    scores.reserve(ids.size());
    for (const auto& id : ids) {
        auto vec = provider.vector_for(id);
        if (!vec) throw DataError("missing embedding for '" + id + "'");
        if (vec->size() != focal_vec->size())
            throw DataError("embedding dimension mismatch for '" + id + "'");
        scores.push_back(metric == SimilarityMetric::Cosine
                             ? cosine_similarity(*focal_vec, *vec)
                             : -l2_distance(*focal_vec, *vec));
    }
    return sort_by_score(sample.focal_id, std::move(ids), std::move(scores));
}

int rank_first_relevant(const RankedList& ranked, const std::set<std::string>& positives) {
    for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i)
        if (positives.count(ranked.candidate_ids[i])) return static_cast<int>(i) + 1;
    throw DataError("rank_first_relevant: no positive in ranked list for '" +
                    ranked.focal_id + "'");
}

double average_precision(const RankedList& ranked, const std::set<std::string>& positives) {
    if (positives.empty()) throw DataError("average_precision: empty positive set");
    std::size_t seen = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i) {
        if (positives.count(ranked.candidate_ids[i])) {
            ++seen;
            sum += static_cast<double>(seen) / static_cast<double>(i + 1);
        }
    }
    if (seen != positives.size())
        throw DataError("average_precision: positives missing from candidate list");
    return sum / static_cast<double>(positives.size());
}

double mrr_at_k(const RankedList& ranked, const std::set<std::string>& positives, int k) {
    if (k < 1) throw ConfigError("mrr_at_k: k must be >= 1");
    const int rfr = rank_first_relevant(ranked, positives);
    return rfr <= k ? 1.0 / static_cast<double>(rfr) : 0.0;
}

RankedList bm25_rank(const Corpus& corpus, const TestSample& sample, TextMode mode,
                     double k1, double b, std::string_view separator) {
    const auto query = split_tokens(compose_text(corpus, sample.focal_id, mode, separator));
    if (query.empty()) throw DataError("bm25_rank: empty focal text for '" +
                                       sample.focal_id + "'");
    std::set<std::string> query_terms(query.begin(), query.end());

    std::vector<std::string> ids = sample.candidate_ids();
    const std::size_t n_docs = ids.size();
    std::vector<std::unordered_map<std::string, std::size_t>> tf(n_docs);
    std::vector<double> doc_len(n_docs, 0.0);
    double total_len = 0.0;
    for (std::size_t i = 0; i < n_docs; ++i) {
        const auto tokens = split_tokens(compose_text(corpus, ids[i], mode, separator));
        doc_len[i] = static_cast<double>(tokens.size());
        total_len += doc_len[i];
        for (const auto& t : tokens) ++tf[i][t];
    }
    const double avg_len = n_docs > 0 ? total_len / static_cast<double>(n_docs) : 0.0;

    std::unordered_map<std::string, std::size_t> df;
    for (const auto& term : query_terms) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < n_docs; ++i)
            if (tf[i].count(term)) ++count;
        df[term] = count;
    }

    std::vector<double> scores(n_docs, 0.0);
    const double n = static_cast<double>(n_docs);
    for (const auto& term : query_terms) {
        const double d = static_cast<double>(df[term]);
        const double idf = std::max(0.0, std::log((n - d + 0.5) / (d + 0.5)));
        if (idf == 0.0) continue;
        for (std::size_t i = 0; i < n_docs; ++i) {
            auto it = tf[i].find(term);
            if (it == tf[i].end()) continue;
            const double f = static_cast<double>(it->second);
            const double denom =
                f + k1 * (1.0 - b + b * (avg_len > 0 ? doc_len[i] / avg_len : 0.0));
            scores[i] += idf * f * (k1 + 1.0) / denom;
        }
    }
    return sort_by_score(sample.focal_id, std::move(ids), std::move(scores));
}

MetricsReport evaluate_model(const Ranker& ranker, const std::vector<TestSample>& samples,
                             std::string model_label, std::string pooling_label,
                             int threads) {
    if (samples.empty()) throw DataError("evaluate_model: empty test set");
    MetricsReport report;
    report.model = std::move(model_label);
    report.pooling = std::move(pooling_label);
    report.sample_rfr.resize(samples.size());
    report.sample_ap.resize(samples.size());
    report.sample_mrr10.resize(samples.size());
    report.sample_focals.resize(samples.size());

    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto eval_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                const auto& s = samples[i];
                const RankedList ranked = ranker.rank(s);
                const std::set<std::string> positives(s.positive_ids.begin(),
                                                      s.positive_ids.end());
                report.sample_rfr[i] = rank_first_relevant(ranked, positives);
                report.sample_ap[i] = average_precision(ranked, positives);
                report.sample_mrr10[i] = mrr_at_k(ranked, positives, 10);
                report.sample_focals[i] = s.focal_id;
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, threads);
    if (n_threads == 1 || samples.size() < 2) {
        eval_range(0, samples.size());
    } else {
        std::vector<std::thread> workers;
        const std::size_t chunk = (samples.size() + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const std::size_t lo = static_cast<std::size_t>(t) * chunk;
            const std::size_t hi = std::min(samples.size(), lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back(eval_range, lo, hi);
        }
        for (auto& w : workers) w.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Fixed-order aggregation.
    double rfr_sum = 0.0, ap_sum = 0.0, mrr_sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        rfr_sum += report.sample_rfr[i];
        ap_sum += report.sample_ap[i];
        mrr_sum += report.sample_mrr10[i];
    }
    const double n = static_cast<double>(samples.size());
    report.avg_rfr = rfr_sum / n;
    report.map = 100.0 * ap_sum / n;
    report.mrr_at_10 = 100.0 * mrr_sum / n;
    return report;
}

namespace {

const std::vector<double>& select_metric(const MetricsReport& r, MetricSelector m) {
    switch (m) {
        case MetricSelector::Rfr: return r.sample_rfr;
        case MetricSelector::Ap: return r.sample_ap;
        case MetricSelector::Mrr10: return r.sample_mrr10;
    }
    return r.sample_ap;
}

}  // namespace

double paired_significance(const MetricsReport& a, const MetricsReport& b,
                           MetricSelector metric, std::size_t resamples,
                           std::uint64_t rng_seed) {
    const auto& va = select_metric(a, metric);
    const auto& vb = select_metric(b, metric);
    if (va.size() != vb.size() || va.empty())
        throw DataError("paired_significance: mismatched sample counts");
    if (resamples == 0) throw ConfigError("paired_significance: resamples must be >= 1");

    const std::size_t n = va.size();
    std::vector<double> diff(n);
    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = va[i] - vb[i];
        observed += diff[i];
    }
    observed /= static_cast<double>(n);
    for (auto& d : diff) d -= observed;  // center: bootstrap under the null

    Rng rng(rng_seed);
    std::size_t at_least = 0;
    for (std::size_t r = 0; r < resamples; ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            sum += diff[rng.uniform_u64(n)];
        const double mean = sum / static_cast<double>(n);
        if (std::abs(mean) >= std::abs(observed)) ++at_least;
    }
    return static_cast<double>(at_least + 1) / static_cast<double>(resamples + 1);
}

std::vector<EcdfRow> ecdf_export(const std::vector<MetricsReport>& reports) {
    std::vector<EcdfRow> rows;
    for (const auto& r : reports) {
        if (r.sample_rfr.empty()) continue;
        std::vector<double> values = r.sample_rfr;
        std::sort(values.begin(), values.end());
        const double n = static_cast<double>(values.size());
        const std::string label = r.model + "/" + r.pooling;
        std::size_t i = 0;
        while (i < values.size()) {
            std::size_t j = i;
            while (j < values.size() && values[j] == values[i]) ++j;
            rows.push_back({label, values[i], static_cast<double>(j) / n});
            i = j;
        }
    }
    return rows;
}

namespace {

std::string two_decimals(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

void write_metrics_table(const std::filesystem::path& path,
                         const std::vector<MetricsReport>& reports) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "model\tpooling\tavg_rfr\tmap\tmrr10\n";
    for (const auto& r : reports) {
        out << r.model << '\t' << r.pooling << '\t' << two_decimals(r.avg_rfr) << '\t'
            << two_decimals(r.map) << '\t' << two_decimals(r.mrr_at_10) << '\n';
    }
}

void write_ecdf_table(const std::filesystem::path& path, const std::vector<EcdfRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "model\trfr\tcum_fraction\n";
    for (const auto& r : rows) {
        out << r.model << '\t' << format_double(r.rfr) << '\t'
            << format_double(r.cum_fraction) << '\n';
    }
}

void save_reports(const std::filesystem::path& path,
                  const std::vector<MetricsReport>& reports) {
    ojson j;
    j["format"] = "patvec-reports";
    j["version"] = 1;
    ojson entries = ojson::array();
    for (const auto& r : reports) {
        ojson e;
        e["model"] = r.model;
        e["pooling"] = r.pooling;
        e["avg_rfr"] = r.avg_rfr;
        e["map"] = r.map;
        e["mrr_at_10"] = r.mrr_at_10;
        e["sample_focals"] = r.sample_focals;
        e["sample_rfr"] = r.sample_rfr;
        e["sample_ap"] = r.sample_ap;
        e["sample_mrr10"] = r.sample_mrr10;
        entries.push_back(std::move(e));
    }
    j["reports"] = std::move(entries);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << j.dump() << "\n";
}

std::vector<MetricsReport> load_reports(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    ojson j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed report file (" + std::string(e.what()) +
                        ")");
    }
    if (!j.contains("format") || j["format"] != "patvec-reports")
        throw DataError(path.string() + ": not a patvec report file");
    std::vector<MetricsReport> out;
    for (const auto& e : j.at("reports")) {
        MetricsReport r;
        r.model = e.at("model").get<std::string>();
        r.pooling = e.at("pooling").get<std::string>();
        r.avg_rfr = e.at("avg_rfr").get<double>();
        r.map = e.at("map").get<double>();
        r.mrr_at_10 = e.at("mrr_at_10").get<double>();
        r.sample_focals = e.at("sample_focals").get<std::vector<std::string>>();
        r.sample_rfr = e.at("sample_rfr").get<std::vector<double>>();
        r.sample_ap = e.at("sample_ap").get<std::vector<double>>();
        r.sample_mrr10 = e.at("sample_mrr10").get<std::vector<double>>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace patvec
