#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "patvec/errors.hpp"
#include "patvec/evaluator.hpp"
#include "patvec/rng.hpp"

using namespace patvec;

namespace {

// ---------------------------------------------------------------------------
// Brute-force metric oracles. Deliberately different routes from the library:
// AP from the sorted positive ranks, RFR by explicit minimum over positives.
// ---------------------------------------------------------------------------

int oracle_rfr(const RankedList& ranked, const std::set<std::string>& positives) {
    int best = std::numeric_limits<int>::max();
    for (const auto& p : positives) {
        for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i) {
            if (ranked.candidate_ids[i] == p)
                best = std::min(best, static_cast<int>(i) + 1);
        }
    }
    return best;
}

double oracle_ap(const RankedList& ranked, const std::set<std::string>& positives) {
    std::vector<int> ranks;
    for (const auto& p : positives)
        for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i)
            if (ranked.candidate_ids[i] == p) ranks.push_back(static_cast<int>(i) + 1);
    std::sort(ranks.begin(), ranks.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        sum += static_cast<double>(i + 1) / static_cast<double>(ranks[i]);
    return sum / static_cast<double>(ranks.size());
}

double oracle_mrr(const RankedList& ranked, const std::set<std::string>& positives, int k) {
    const int rfr = oracle_rfr(ranked, positives);
    return rfr <= k ? 1.0 / rfr : 0.0;
}

// A random 30-candidate list with 5 positives at random positions.
struct RandomSample {
    RankedList ranked;
    std::set<std::string> positives;
};

RandomSample random_ranked_list(Rng& rng) {
    RandomSample out;
    out.ranked.focal_id = "F";
    std::vector<std::string> ids;
    for (int i = 0; i < 30; ++i) ids.push_back("C" + std::to_string(i));
    rng.shuffle(ids);
    for (int i = 0; i < 5; ++i) out.positives.insert(ids[rng.uniform_u64(30)]);
    while (out.positives.size() < 5)
        out.positives.insert(ids[rng.uniform_u64(30)]);
    out.ranked.candidate_ids = ids;
    for (int i = 0; i < 30; ++i) out.ranked.scores.push_back(30.0 - i);
    return out;
}

TestSample toy_sample() {
    TestSample s;
    s.focal_id = "F";
    for (int i = 0; i < 5; ++i) s.positive_ids.push_back("P" + std::to_string(i));
    for (int i = 0; i < 10; ++i)
        s.negatives.emplace_back("H" + std::to_string(i), NegativeKind::Hard);
    for (int i = 0; i < 15; ++i)
        s.negatives.emplace_back("E" + std::to_string(i), NegativeKind::Easy);
    return s;
}

// Provider whose ranking is "exact id match with the per-id score".
TableProvider scored_provider(const TestSample& s, const std::map<std::string, double>& score) {
    std::map<std::string, std::vector<double>> table;
    table[s.focal_id] = {1.0, 0.0};
    for (const auto& id : s.candidate_ids()) {
        const double v = score.count(id) ? score.at(id) : 0.0;
        // cosine similarity to (1, 0) equals cos(angle); encode score as angle
        table[id] = {v, std::sqrt(std::max(0.0, 1.0 - v * v))};
    }
    return TableProvider(std::move(table), 2);
}

}  // namespace

TEST_CASE("rank_candidates orders by similarity with id tie-break") {
    TestSample s = toy_sample();
    SUBCASE("collinear beats orthogonal under cosine") {
        std::map<std::string, std::vector<double>> table;
        table["F"] = {1, 0};
        for (const auto& id : s.candidate_ids()) table[id] = {0, 1};
        table["P0"] = {2, 0};  // collinear with the focal
        const TableProvider provider(table, 2);
        const RankedList r = rank_candidates(provider, s, SimilarityMetric::Cosine);
        CHECK(r.candidate_ids.front() == "P0");
        for (std::size_t i = 1; i < r.scores.size(); ++i)
            CHECK(r.scores[i] <= r.scores[i - 1]);
    }
    SUBCASE("identical scores break ties by id ascending") {
        std::map<std::string, std::vector<double>> table;
        table["F"] = {1, 0};
        for (const auto& id : s.candidate_ids()) table[id] = {1, 0};
        const TableProvider provider(table, 2);
        const RankedList r = rank_candidates(provider, s, SimilarityMetric::Cosine);
        auto sorted_ids = s.candidate_ids();
        std::sort(sorted_ids.begin(), sorted_ids.end());
        CHECK(r.candidate_ids == sorted_ids);
    }
    SUBCASE("cosine and L2 disagree on unnormalized vectors") {
        // focal (1,0); A=(3,0) ties B=(0.9,0) on cosine so A wins by id;
        // under L2, B is far closer and wins outright.
        std::map<std::string, std::vector<double>> table;
        table["F"] = {1, 0};
        for (const auto& id : s.candidate_ids()) table[id] = {-1, 0};
        table["E0"] = {3, 0};     // plays "A": id sorts before H*/P*
        table["E1"] = {0.9, 0};   // plays "B"
        const TableProvider provider(table, 2);
        const RankedList cos = rank_candidates(provider, s, SimilarityMetric::Cosine);
        const RankedList l2 = rank_candidates(provider, s, SimilarityMetric::L2);
        CHECK(cos.candidate_ids.front() == "E0");
        CHECK(l2.candidate_ids.front() == "E1");
    }
    SUBCASE("missing vector names the id") {
        std::map<std::string, std::vector<double>> table;
        table["F"] = {1, 0};
        for (const auto& id : s.candidate_ids()) table[id] = {0, 1};
        table.erase("H3");
        const TableProvider provider(table, 2);
        try {
            rank_candidates(provider, s, SimilarityMetric::Cosine);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("H3") != std::string::npos);
        }
    }
    SUBCASE("cosine ranking is invariant to rescaling one candidate; L2 is not") {
        Rng rng(3);
        std::map<std::string, std::vector<double>> table;
        table["F"] = {rng.uniform_real(0.1, 1), rng.uniform_real(0.1, 1)};
        for (const auto& id : s.candidate_ids())
            table[id] = {rng.uniform_real(-1, 1), rng.uniform_real(-1, 1)};
        TableProvider base(table, 2);
        const RankedList before = rank_candidates(base, s, SimilarityMetric::Cosine);
        const RankedList l2_before = rank_candidates(base, s, SimilarityMetric::L2);
        auto scaled = table;
        // scale the current L2 winner far away; its rank must drop
        const std::string winner = l2_before.candidate_ids.front();
        scaled[winner][0] *= 50.0;
        scaled[winner][1] *= 50.0;
        TableProvider bumped(scaled, 2);
        const RankedList after = rank_candidates(bumped, s, SimilarityMetric::Cosine);
        const RankedList l2_after = rank_candidates(bumped, s, SimilarityMetric::L2);
        CHECK(before.candidate_ids == after.candidate_ids);
        CHECK(l2_before.candidate_ids != l2_after.candidate_ids);
    }
}

TEST_CASE("rank_first_relevant") {
    Rng rng(1);
    RandomSample s = random_ranked_list(rng);
    SUBCASE("matches the linear-scan oracle on random lists") {
        for (int trial = 0; trial < 200; ++trial) {
            RandomSample r = random_ranked_list(rng);
            CHECK(rank_first_relevant(r.ranked, r.positives) == oracle_rfr(r.ranked, r.positives));
        }
    }
    SUBCASE("explicit positions") {
        RankedList r;
        r.focal_id = "F";
        for (int i = 0; i < 30; ++i) r.candidate_ids.push_back("C" + std::to_string(i));
        CHECK(rank_first_relevant(r, {"C2", "C6"}) == 3);
        CHECK(rank_first_relevant(r, {"C0"}) == 1);
        CHECK_THROWS_AS(rank_first_relevant(r, {"Z"}), DataError);
    }
    (void)s;
}

TEST_CASE("average_precision handles the canonical cases") {
    RankedList r;
    r.focal_id = "F";
    for (int i = 0; i < 30; ++i) r.candidate_ids.push_back("C" + std::to_string(i));
    SUBCASE("positives at ranks 1..5 give AP 1") {
        CHECK(average_precision(r, {"C0", "C1", "C2", "C3", "C4"}) == 1.0);
    }
    SUBCASE("positives at ranks 2,4,6,8,10 give AP 0.5") {
        CHECK(average_precision(r, {"C1", "C3", "C5", "C7", "C9"}) ==
              doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("worst case: positives at ranks 26..30") {
        const double expected =
            (1.0 / 26 + 2.0 / 27 + 3.0 / 28 + 4.0 / 29 + 5.0 / 30) / 5.0;
        CHECK(average_precision(r, {"C25", "C26", "C27", "C28", "C29"}) ==
              doctest::Approx(expected).epsilon(1e-15));
    }
    SUBCASE("empty positive set raises") {
        CHECK_THROWS_AS(average_precision(r, {}), DataError);
    }
    SUBCASE("positive missing from candidates raises") {
        CHECK_THROWS_AS(average_precision(r, {"C0", "Z"}), DataError);
    }
}

TEST_CASE("mrr_at_k applies the cutoff") {
    RankedList r;
    r.focal_id = "F";
    for (int i = 0; i < 30; ++i) r.candidate_ids.push_back("C" + std::to_string(i));
    CHECK(mrr_at_k(r, {"C0"}, 10) == 1.0);
    CHECK(mrr_at_k(r, {"C2"}, 10) == doctest::Approx(1.0 / 3));
    CHECK(mrr_at_k(r, {"C10"}, 10) == 0.0);  // rank 11 misses the window
    CHECK(mrr_at_k(r, {"C9"}, 10) == doctest::Approx(0.1));
    CHECK_THROWS_AS(mrr_at_k(r, {"C0"}, 0), ConfigError);
}

TEST_CASE("metric oracle equivalence over random rankings") {
    Rng rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const RandomSample s = random_ranked_list(rng);
        CHECK(rank_first_relevant(s.ranked, s.positives) == oracle_rfr(s.ranked, s.positives));
        CHECK(std::abs(average_precision(s.ranked, s.positives) -
                       oracle_ap(s.ranked, s.positives)) <= 1e-12);
        CHECK(std::abs(mrr_at_k(s.ranked, s.positives, 10) -
                       oracle_mrr(s.ranked, s.positives, 10)) <= 1e-12);
        const int rfr = rank_first_relevant(s.ranked, s.positives);
        CHECK(rfr >= 1);
        CHECK(rfr <= 26);
        CHECK(mrr_at_k(s.ranked, s.positives, 10) >= mrr_at_k(s.ranked, s.positives, 5));
    }
}

TEST_CASE("AP is invariant under permutations of the negatives") {
    Rng rng(88);
    for (int trial = 0; trial < 50; ++trial) {
        RandomSample s = random_ranked_list(rng);
        const double before = average_precision(s.ranked, s.positives);
        // permute negative ids among negative positions
        std::vector<std::size_t> neg_positions;
        std::vector<std::string> neg_ids;
        for (std::size_t i = 0; i < s.ranked.candidate_ids.size(); ++i) {
            if (!s.positives.count(s.ranked.candidate_ids[i])) {
                neg_positions.push_back(i);
                neg_ids.push_back(s.ranked.candidate_ids[i]);
            }
        }
        rng.shuffle(neg_ids);
        for (std::size_t k = 0; k < neg_positions.size(); ++k)
            s.ranked.candidate_ids[neg_positions[k]] = neg_ids[k];
        CHECK(average_precision(s.ranked, s.positives) == before);
    }
}

namespace {

Corpus lexical_corpus() {
    std::vector<PatentRecord> records;
    auto add = [&](const std::string& id, const std::string& abstract) {
        PatentRecord r;
        r.patent_id = id;
        r.family_id = "F" + id;
        r.jurisdiction = "EP";
        r.kind = ApplicationKind::EpDirect;
        r.title = "doc " + id;
        r.abstract = abstract;
        r.language = "en";
        records.push_back(std::move(r));
    };
    add("F", "gearbox torque converter clutch assembly");
    add("P0", "gearbox torque converter for vehicles");
    add("P1", "a clutch assembly with gearbox housing");
    add("P2", "torque transfer in converter systems");
    add("P3", "gearbox with planetary stages");
    add("P4", "hydraulic clutch actuation");
    for (int i = 0; i < 10; ++i)
        add("H" + std::to_string(i), "unrelated polymer chemistry compound number " +
                                         std::to_string(i));
    for (int i = 0; i < 15; ++i)
        add("E" + std::to_string(i), "textile weaving loom shuttle variant " +
                                         std::to_string(i));
    return Corpus::build(records, {});
}

}  // namespace

TEST_CASE("bm25 ranks lexical overlap first") {
    const Corpus c = lexical_corpus();
    const TestSample s = toy_sample();
    SUBCASE("query-term sharers outrank non-sharers") {
        const RankedList r = bm25_rank(c, s, TextMode::TitleAbstract);
        std::set<std::string> top5(r.candidate_ids.begin(), r.candidate_ids.begin() + 5);
        CHECK(top5 == std::set<std::string>{"P0", "P1", "P2", "P3", "P4"});
    }
    SUBCASE("candidate identical to the focal text scores highest") {
        std::vector<PatentRecord> records;
        const Corpus base = lexical_corpus();
        for (const auto& [id, rec] : base.records()) records.push_back(rec);
        for (auto& rec : records) {
            if (rec.patent_id == "P3") {
                rec.title = *base.record("F").title;
                rec.abstract = *base.record("F").abstract;
            }
        }
        const Corpus twin = Corpus::build(records, {});
        const RankedList r = bm25_rank(twin, s, TextMode::TitleAbstract);
        CHECK(r.candidate_ids.front() == "P3");
    }
    SUBCASE("a term in every candidate contributes nothing (floored IDF)") {
        // "doc" appears in every title; score must come from other terms only
        std::vector<PatentRecord> records;
        const Corpus base = lexical_corpus();
        for (const auto& [id, rec] : base.records()) records.push_back(rec);
        for (auto& rec : records)
            if (rec.patent_id == "F") rec.abstract = "doc doc doc";  // only the common term
        const Corpus common = Corpus::build(records, {});
        const RankedList r = bm25_rank(common, s, TextMode::TitleAbstract);
        for (double score : r.scores) CHECK(score == 0.0);
    }
    SUBCASE("deterministic and independent of candidate order") {
        const RankedList a = bm25_rank(c, s, TextMode::TitleAbstract);
        TestSample shuffled = s;
        std::reverse(shuffled.positive_ids.begin(), shuffled.positive_ids.end());
        std::reverse(shuffled.negatives.begin(), shuffled.negatives.end());
        const RankedList b = bm25_rank(c, shuffled, TextMode::TitleAbstract);
        CHECK(a.candidate_ids == b.candidate_ids);
        CHECK(a.scores == b.scores);
    }
}

TEST_CASE("evaluate_model aggregates the three metrics") {
    const TestSample s = toy_sample();
    SUBCASE("perfect provider scores the upper bound") {
        std::map<std::string, double> score;
        for (const auto& id : s.positive_ids) score[id] = 0.9;
        const TableProvider provider = scored_provider(s, score);
        const EmbeddingRanker ranker(provider, SimilarityMetric::Cosine);
        const MetricsReport r = evaluate_model(ranker, {s, s, s}, "perfect", "mean");
        CHECK(r.avg_rfr == 1.0);
        CHECK(r.map == 100.0);
        CHECK(r.mrr_at_10 == 100.0);
        CHECK(r.sample_rfr.size() == 3);
    }
    SUBCASE("random provider lands near the Monte-Carlo expectation") {
        // Monte-Carlo oracle: expected AP of a uniform shuffle of 5-in-30
        Rng rng(555);
        double mc = 0.0;
        const int shuffles = 100000;
        for (int i = 0; i < shuffles; ++i) {
            std::vector<int> order(30);
            for (int j = 0; j < 30; ++j) order[j] = j;
            rng.shuffle(order);
            std::size_t seen = 0;
            double sum = 0.0;
            for (int rank = 1; rank <= 30; ++rank) {
                if (order[rank - 1] < 5) {
                    ++seen;
                    sum += static_cast<double>(seen) / rank;
                }
            }
            mc += sum / 5.0;
        }
        mc /= shuffles;

        // random-score provider over many fresh samples
        Rng vec_rng(777);
        double total_ap = 0.0;
        const int n_samples = 400;
        for (int i = 0; i < n_samples; ++i) {
            std::map<std::string, double> score;
            for (const auto& id : toy_sample().candidate_ids())
                score[id] = vec_rng.uniform_real(-0.99, 0.99);
            const TableProvider provider = scored_provider(toy_sample(), score);
            const EmbeddingRanker ranker(provider, SimilarityMetric::Cosine);
            const MetricsReport r = evaluate_model(ranker, {toy_sample()}, "rand", "mean");
            total_ap += r.map / 100.0;
        }
        const double observed = total_ap / n_samples;
        CHECK(observed == doctest::Approx(mc).epsilon(0.12));
    }
    SUBCASE("threaded evaluation matches single-threaded") {
        Rng rng(9);
        std::map<std::string, double> score;
        for (const auto& id : s.candidate_ids()) score[id] = rng.uniform_real(-0.9, 0.9);
        const TableProvider provider = scored_provider(s, score);
        const EmbeddingRanker ranker(provider, SimilarityMetric::Cosine);
        const std::vector<TestSample> samples(7, s);
        const MetricsReport a = evaluate_model(ranker, samples, "m", "mean", 1);
        const MetricsReport b = evaluate_model(ranker, samples, "m", "mean", 4);
        CHECK(a.sample_ap == b.sample_ap);
        CHECK(a.map == b.map);
    }
}

TEST_CASE("metrics table formats two decimals in the paper's layout") {
    MetricsReport r;
    r.model = "model-a";
    r.pooling = "mean";
    r.avg_rfr = 1.312;
    r.map = 68.168;
    r.mrr_at_10 = 88.254;
    const auto dir = std::filesystem::temp_directory_path() / "patvec_eval_io";
    std::filesystem::create_directories(dir);
    write_metrics_table(dir / "m.tsv", {r});
    std::ifstream in(dir / "m.tsv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "model\tpooling\tavg_rfr\tmap\tmrr10");
    CHECK(row == "model-a\tmean\t1.31\t68.17\t88.25");
}

TEST_CASE("paired_significance behaves at the extremes") {
    MetricsReport a, b;
    a.model = "a";
    b.model = "b";
    Rng rng(10);
    for (int i = 0; i < 50; ++i) {
        const double v = rng.uniform_real(0, 1);
        a.sample_ap.push_back(v);
        b.sample_ap.push_back(v);
        a.sample_rfr.push_back(1);
        b.sample_rfr.push_back(1);
        a.sample_mrr10.push_back(1);
        b.sample_mrr10.push_back(1);
    }
    SUBCASE("a report against itself gives p = 1") {
        CHECK(paired_significance(a, a, MetricSelector::Ap, 2000, 3) == 1.0);
    }
    SUBCASE("strictly better on every sample reaches the minimal p") {
        MetricsReport better = a;
        for (auto& v : better.sample_ap) v += 0.2;
        const double p = paired_significance(better, a, MetricSelector::Ap, 2000, 3);
        CHECK(p == doctest::Approx(1.0 / 2001).epsilon(1e-12));
    }
    SUBCASE("mismatched sample counts raise") {
        MetricsReport shorter = a;
        shorter.sample_ap.pop_back();
        CHECK_THROWS_AS(paired_significance(shorter, a, MetricSelector::Ap, 100, 1), DataError);
    }
}

TEST_CASE("ecdf_export emits non-decreasing fractions ending at one") {
    MetricsReport r;
    r.model = "m";
    r.pooling = "mean";
    SUBCASE("worked example: ranks 1,1,2") {
        r.sample_rfr = {1, 1, 2};
        const auto rows = ecdf_export({r});
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].model == "m/mean");
        CHECK(rows[0].rfr == 1.0);
        CHECK(rows[0].cum_fraction == doctest::Approx(2.0 / 3));
        CHECK(rows[1].rfr == 2.0);
        CHECK(rows[1].cum_fraction == 1.0);
    }
    SUBCASE("single sample") {
        r.sample_rfr = {4};
        const auto rows = ecdf_export({r});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].cum_fraction == 1.0);
    }
    SUBCASE("property over random reports") {
        Rng rng(6);
        for (int trial = 0; trial < 30; ++trial) {
            MetricsReport x;
            x.model = "x";
            x.pooling = "first";
            const int n = static_cast<int>(rng.uniform_int(1, 50));
            for (int i = 0; i < n; ++i)
                x.sample_rfr.push_back(static_cast<double>(rng.uniform_int(1, 26)));
            const auto rows = ecdf_export({x});
            REQUIRE_FALSE(rows.empty());
            for (std::size_t i = 1; i < rows.size(); ++i) {
                CHECK(rows[i].rfr > rows[i - 1].rfr);
                CHECK(rows[i].cum_fraction >= rows[i - 1].cum_fraction);
            }
            CHECK(rows.back().cum_fraction == 1.0);
        }
    }
}

TEST_CASE("reports round trip through the report file") {
    MetricsReport r;
    r.model = "m";
    r.pooling = "mean";
    r.avg_rfr = 2.5;
    r.map = 55.25;
    r.mrr_at_10 = 70.125;
    r.sample_rfr = {1, 4};
    r.sample_ap = {1.0, 0.25};
    r.sample_mrr10 = {1.0, 0.25};
    r.sample_focals = {"F1", "F2"};
    const auto dir = std::filesystem::temp_directory_path() / "patvec_eval_io2";
    std::filesystem::create_directories(dir);
    save_reports(dir / "r.json", {r});
    const auto loaded = load_reports(dir / "r.json");
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].model == r.model);
    CHECK(loaded[0].sample_ap == r.sample_ap);
    CHECK(loaded[0].avg_rfr == r.avg_rfr);
}
