#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patvec/corpus.hpp"

namespace patvec {

// Focal-patent eligibility gates.
struct FocalCriteria {
    std::set<ApplicationKind> kinds = {ApplicationKind::EpDirect, ApplicationKind::EuroPct};
    Date window_start{1985, 1, 1};
    Date window_end{2022, 12, 31};
    bool require_cpc = true;
    int min_xyi = 2;             // X/Y/I-category backward citations
    int alt_xyi = 1;             // or this many X/Y/I plus alt_a of category A
    int alt_a = 1;
    int min_collective_indirect = 2;
    int min_easy_negatives = 3;
};

enum class DateAnchor { Filing, Publication };

// Knobs the pool definitions leave open.
struct MinerConfig {
    FocalCriteria criteria;
    CpcLevel cpc_level = CpcLevel::Class;     // "same CPC class" granularity
    DateAnchor window_anchor = DateAnchor::Filing;
    int easy_window_years = 5;
};

enum class NegativeKind { Easy, Hard };
std::string_view to_string(NegativeKind k);
std::optional<NegativeKind> parse_negative_kind(std::string_view s);

struct Triplet {
    std::string focal_id;
    std::string positive_id;
    std::string negative_id;
    NegativeKind negative_kind = NegativeKind::Easy;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

// One held-out evaluation unit: focal, 5 positives, 10 hard + 15 easy negatives.
struct TestSample {
    static constexpr std::size_t kPositives = 5;
    static constexpr std::size_t kHardNegatives = 10;
    static constexpr std::size_t kEasyNegatives = 15;

    std::string focal_id;
    std::vector<std::string> positive_ids;
    std::vector<std::pair<std::string, NegativeKind>> negatives;

    std::vector<std::string> candidate_ids() const;  // positives then negatives
};

// Ids passing every gate: kind, filing window, CPC presence, the X/Y/I (or
// X/Y/I + A) citation rule, collective indirect citations, resolvable English
// text for the focal and at least one positive, and an easy-negative pool of
// at least min_easy_negatives. Sorted.
std::vector<std::string> eligible_focals(const Corpus& corpus, const MinerConfig& config);

// Cited ids of categories X/Y/I/A with resolvable English text. Sorted.
std::vector<std::string> positive_pool(const Corpus& corpus, const std::string& focal_id);

// Non-cited patents sharing a CPC prefix with the focal, published within
// easy_window_years before the anchor date, not indirectly cited, outside the
// focal's family, with CPC codes and resolvable English text. Sorted.
std::vector<std::string> easy_negative_pool(const Corpus& corpus, const MinerConfig& config,
                                            const std::string& focal_id);

// Indirect citations minus the focal's family, restricted to ids with CPC
// codes and resolvable English text. Sorted.
std::vector<std::string> hard_negative_pool(const Corpus& corpus, const std::string& focal_id);

// k triplets for one focal: positives sampled uniformly with replacement,
// negatives without replacement (mix_easy easy + mix_hard hard; a hard-pool
// shortfall is covered from the easy pool). Deterministic in rng_seed.
std::vector<Triplet> mine_triplets(const Corpus& corpus, const MinerConfig& config,
                                   const std::string& focal_id, int k, int mix_easy,
                                   int mix_hard, std::uint64_t rng_seed);

struct MineResult {
    std::vector<Triplet> triplets;           // sorted by focal id
    std::vector<std::string> focals_used;
    std::vector<std::string> focals_skipped;  // eligible but pools cannot fill the mix
};

// Mines every eligible focal (optionally a seeded subsample of max_focals).
// Per-focal seeds derive from (rng_seed, focal_id), so the output does not
// depend on traversal order.
MineResult mine_all(const Corpus& corpus, const MinerConfig& config, int k, int mix_easy,
                    int mix_hard, std::uint64_t rng_seed, std::size_t max_focals = 0);

// Partitions focals (not rows) ~ratio : 1-ratio; every focal's triplets stay
// together. Both parts must end up non-empty.
std::pair<std::vector<Triplet>, std::vector<Triplet>> split_dataset(
    const std::vector<Triplet>& triplets, double ratio, std::uint64_t rng_seed);

struct TestSetResult {
    std::vector<TestSample> samples;  // sorted by focal id
    std::size_t requested = 0;
    std::size_t qualifying = 0;       // < requested means a shortfall warning
};

// Held-out samples disjoint from everything in train_triplets: candidate
// focals are eligible, unused by training, and keep >=5/>=10/>=15 pool
// members after all train ids are removed.
TestSetResult build_test_set(const Corpus& corpus, const MinerConfig& config, std::size_t n,
                             const std::vector<Triplet>& train_triplets,
                             std::uint64_t rng_seed);

struct DatasetStats {
    std::size_t rows = 0;
    std::size_t unique_focals = 0;
    std::size_t unique_positives = 0;
    std::size_t unique_negatives = 0;
    double positives_used_once_fraction = 0.0;  // over unique positives
    std::size_t easy_rows = 0;
    std::size_t hard_rows = 0;
};

DatasetStats dataset_stats(const std::vector<Triplet>& triplets);

// Line-delimited JSON artifacts.
void save_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets);
std::vector<Triplet> load_triplets(const std::filesystem::path& path);
void save_test_set(const std::filesystem::path& path, const std::vector<TestSample>& samples);
std::vector<TestSample> load_test_set(const std::filesystem::path& path);

}  // namespace patvec
