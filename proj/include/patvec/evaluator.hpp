#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "patvec/corpus.hpp"
#include "patvec/encoder.hpp"
#include "patvec/miner.hpp"

namespace patvec {

enum class SimilarityMetric { Cosine, L2 };
std::string_view to_string(SimilarityMetric m);
std::optional<SimilarityMetric> parse_similarity_metric(std::string_view s);

// Candidates of one sample ordered most similar first; scores are similarity
// values (negated distance for L2), non-increasing in rank order.
struct RankedList {
    std::string focal_id;
    std::vector<std::string> candidate_ids;
    std::vector<double> scores;
};

// Sorts the sample's 30 candidates by similarity to the focal; ties break by
// candidate id ascending. Missing vectors raise DataError naming the id.
RankedList rank_candidates(const EmbeddingProvider& provider, const TestSample& sample,
                           SimilarityMetric metric);

// 1-based position of the earliest positive in the ranking.
int rank_first_relevant(const RankedList& ranked, const std::set<std::string>& positives);

// Mean over each positive at rank r (with j positives at ranks <= r) of j/r.
double average_precision(const RankedList& ranked, const std::set<std::string>& positives);

// 1/RFR when RFR <= k, else 0.
double mrr_at_k(const RankedList& ranked, const std::set<std::string>& positives, int k = 10);

// Okapi BM25 over the sample's own 30 candidates (IDF and average length come
// from that per-sample collection; IDF floored at 0). Query = focal text.
RankedList bm25_rank(const Corpus& corpus, const TestSample& sample, TextMode mode,
                     double k1 = 1.2, double b = 0.75,
                     std::string_view separator = "[SEP]");

// Anything that can order a sample's candidates.
class Ranker {
public:
    virtual ~Ranker() = default;
    virtual RankedList rank(const TestSample& sample) const = 0;
};

class EmbeddingRanker : public Ranker {
public:
    EmbeddingRanker(const EmbeddingProvider& provider, SimilarityMetric metric)
        : provider_(&provider), metric_(metric) {}
    RankedList rank(const TestSample& sample) const override {
        return rank_candidates(*provider_, sample, metric_);
    }

private:
    const EmbeddingProvider* provider_;
    SimilarityMetric metric_;
};

class Bm25Ranker : public Ranker {
public:
    Bm25Ranker(const Corpus& corpus, TextMode mode, double k1 = 1.2, double b = 0.75)
        : corpus_(&corpus), mode_(mode), k1_(k1), b_(b) {}
    RankedList rank(const TestSample& sample) const override {
        return bm25_rank(*corpus_, sample, mode_, k1_, b_);
    }

private:
    const Corpus* corpus_;
    TextMode mode_;
    double k1_, b_;
};

struct MetricsReport {
    std::string model;
    std::string pooling;
    // Aggregates: mean 1-based rank; MAP and MRR@10 on the 0-100 scale.
    double avg_rfr = 0.0;
    double map = 0.0;
    double mrr_at_10 = 0.0;
    // Per-sample values for significance tests and ECDF export.
    std::vector<double> sample_rfr;
    std::vector<double> sample_ap;      // [0, 1]
    std::vector<double> sample_mrr10;   // [0, 1]
    std::vector<std::string> sample_focals;
};

enum class MetricSelector { Rfr, Ap, Mrr10 };
std::string_view to_string(MetricSelector m);
std::optional<MetricSelector> parse_metric_selector(std::string_view s);

// Runs the ranker over every sample and aggregates RFR / MAP / MRR@10.
MetricsReport evaluate_model(const Ranker& ranker, const std::vector<TestSample>& samples,
                             std::string model_label, std::string pooling_label,
                             int threads = 1);

// Two-sided paired bootstrap on the per-sample metric difference: differences
// are centered, resampled `resamples` times, and the p-value is
// (#{|mean*| >= |observed|} + 1) / (resamples + 1).
double paired_significance(const MetricsReport& a, const MetricsReport& b,
                           MetricSelector metric, std::size_t resamples,
                           std::uint64_t rng_seed);

struct EcdfRow {
    std::string model;  // "<label>/<pooling>"
    double rfr = 0.0;
    double cum_fraction = 0.0;
};

// Sorted unique RFR values with cumulative fractions, one block per report.
std::vector<EcdfRow> ecdf_export(const std::vector<MetricsReport>& reports);

// Presentation-layer writers; numeric columns rounded to two decimals in the
// metrics table, full precision elsewhere.
void write_metrics_table(const std::filesystem::path& path,
                         const std::vector<MetricsReport>& reports);
void write_ecdf_table(const std::filesystem::path& path, const std::vector<EcdfRow>& rows);

// Full-precision report container for compare/ecdf runs.
void save_reports(const std::filesystem::path& path,
                  const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> load_reports(const std::filesystem::path& path);

}  // namespace patvec
