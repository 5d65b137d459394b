#include "patvec/miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "patvec/errors.hpp"
#include "patvec/rng.hpp"

namespace patvec {

using ojson = nlohmann::ordered_json;

std::string_view to_string(NegativeKind k) {
    return k == NegativeKind::Easy ? "easy" : "hard";
}

std::optional<NegativeKind> parse_negative_kind(std::string_view s) {
    if (s == "easy") return NegativeKind::Easy;
    if (s == "hard") return NegativeKind::Hard;
    return std::nullopt;
}

std::vector<std::string> TestSample::candidate_ids() const {
    std::vector<std::string> out = positive_ids;
    for (const auto& [id, kind] : negatives) out.push_back(id);
    return out;
}

namespace {

bool has_resolvable_english(const Corpus& corpus, const std::string& id) {
    return resolve_english_text(corpus, id).has_value();
}

std::unordered_set<std::string> to_set(const std::vector<std::string>& v) {
    return {v.begin(), v.end()};
}

// Family members of `id`, the record itself included.
std::unordered_set<std::string> family_set(const Corpus& corpus, const std::string& id) {
    const auto& members = corpus.family_members(id);
    return {members.begin(), members.end()};
}

}  // namespace

std::vector<std::string> positive_pool(const Corpus& corpus, const std::string& focal_id) {
    std::vector<std::string> out;
    for (const auto& id : backward_citations(corpus, focal_id, xyia_categories()))
        if (has_resolvable_english(corpus, id)) out.push_back(id);
    return out;  // backward_citations already sorted + de-duplicated
}

std::vector<std::string> easy_negative_pool(const Corpus& corpus, const MinerConfig& config,
                                            const std::string& focal_id) {
    const PatentRecord& focal = corpus.record(focal_id);
    const Date anchor = config.window_anchor == DateAnchor::Filing
                            ? focal.filing_date.value_or(Date{})
                            : focal.publication_date.value_or(Date{});
    if (!is_valid_date(anchor)) return {};
    const Date window_start = add_years(anchor, -config.easy_window_years);

    std::vector<std::string_view> focal_prefixes;
    for (const auto& code : focal.cpc_codes)
        focal_prefixes.push_back(cpc_prefix(code, config.cpc_level));
    if (focal_prefixes.empty()) return {};

    const auto direct = to_set(backward_citations(corpus, focal_id, CategorySet::all()));
    const auto indirect = to_set(indirect_citations(corpus, focal_id));
    const auto family = family_set(corpus, focal_id);

    std::vector<std::string> out;
    for (const auto& [id, rec] : corpus.records()) {
        if (id == focal_id || family.count(id)) continue;
        if (rec.cpc_codes.empty()) continue;
        if (!rec.publication_date) continue;
        const Date pub = *rec.publication_date;
        if (pub < window_start || !(pub < anchor)) continue;  // [anchor-5y, anchor)
        bool shares_class = false;
        for (const auto& code : rec.cpc_codes) {
            const auto p = cpc_prefix(code, config.cpc_level);
            for (const auto& fp : focal_prefixes) {
                if (p == fp) {
                    shares_class = true;
                    break;
                }
            }
            if (shares_class) break;
        }
        if (!shares_class) continue;
        if (direct.count(id) || indirect.count(id)) continue;
        if (!has_resolvable_english(corpus, id)) continue;
        out.push_back(id);
    }
    return out;  // map iteration keeps ids sorted
}

std::vector<std::string> hard_negative_pool(const Corpus& corpus, const std::string& focal_id) {
    const auto family = family_set(corpus, focal_id);
    std::vector<std::string> out;
    for (const auto& id : indirect_citations(corpus, focal_id)) {
        if (family.count(id)) continue;
        if (!corpus.has(id)) continue;
        if (corpus.record(id).cpc_codes.empty()) continue;
        if (!has_resolvable_english(corpus, id)) continue;
        out.push_back(id);
    }
    return out;
}

namespace {

bool citation_rule_satisfied(const Corpus& corpus, const std::string& id,
                             const FocalCriteria& criteria) {
    const auto xyi = backward_citations(corpus, id, xyi_categories());
    if (static_cast<int>(xyi.size()) >= criteria.min_xyi) return true;
    const auto a_only = backward_citations(corpus, id, {CitationCategory::A});
    return static_cast<int>(xyi.size()) >= criteria.alt_xyi &&
           static_cast<int>(a_only.size()) >= criteria.alt_a;
}

bool is_eligible(const Corpus& corpus, const MinerConfig& config, const std::string& id,
                 const PatentRecord& rec) {
    const FocalCriteria& criteria = config.criteria;
    if (!criteria.kinds.count(rec.kind)) return false;
    if (!rec.filing_date) return false;
    if (*rec.filing_date < criteria.window_start || criteria.window_end < *rec.filing_date)
        return false;
    if (criteria.require_cpc && rec.cpc_codes.empty()) return false;
    if (!citation_rule_satisfied(corpus, id, criteria)) return false;
    if (static_cast<int>(indirect_citations(corpus, id).size()) <
        criteria.min_collective_indirect)
        return false;
    if (!has_resolvable_english(corpus, id)) return false;
    if (positive_pool(corpus, id).empty()) return false;
    if (static_cast<int>(easy_negative_pool(corpus, config, id).size()) <
        criteria.min_easy_negatives)
        return false;
    return true;
}

}  // namespace

std::vector<std::string> eligible_focals(const Corpus& corpus, const MinerConfig& config) {
    std::vector<std::string> out;
    for (const auto& [id, rec] : corpus.records())
        if (is_eligible(corpus, config, id, rec)) out.push_back(id);
    return out;
}

std::vector<Triplet> mine_triplets(const Corpus& corpus, const MinerConfig& config,
                                   const std::string& focal_id, int k, int mix_easy,
                                   int mix_hard, std::uint64_t rng_seed) {
    if (k < 1 || mix_easy < 0 || mix_hard < 0 || mix_easy + mix_hard != k)
        throw ConfigError("mine_triplets: mix must be non-negative and sum to k");

    const auto positives = positive_pool(corpus, focal_id);
    if (positives.empty())
        throw DataError("mine_triplets: empty positive pool for '" + focal_id + "'");
    const auto easy = easy_negative_pool(corpus, config, focal_id);
    if (static_cast<int>(easy.size()) < config.criteria.min_easy_negatives)
        throw DataError("mine_triplets: easy pool below minimum for '" + focal_id + "'");
    const auto hard = hard_negative_pool(corpus, focal_id);

    // Hard shortfall moves to the easy pool; triplet count per focal is constant.
    const int n_hard = std::min<int>(mix_hard, static_cast<int>(hard.size()));
    const int n_easy = k - n_hard;
    if (n_easy > static_cast<int>(easy.size()))
        throw DataError("mine_triplets: negative pools cannot fill " + std::to_string(k) +
                        " triplets for '" + focal_id + "'");

    Rng rng(rng_seed);
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(k));
    const auto easy_picks = rng.sample_without_replacement(easy, static_cast<std::size_t>(n_easy));
    const auto hard_picks = rng.sample_without_replacement(hard, static_cast<std::size_t>(n_hard));
    for (int i = 0; i < k; ++i) {
        Triplet t;
        t.focal_id = focal_id;
        t.positive_id = rng.pick(positives);
        if (i < n_easy) {
            t.negative_id = easy_picks[static_cast<std::size_t>(i)];
            t.negative_kind = NegativeKind::Easy;
        } else {
            t.negative_id = hard_picks[static_cast<std::size_t>(i - n_easy)];
            t.negative_kind = NegativeKind::Hard;
        }
        out.push_back(std::move(t));
    }
    return out;
}

MineResult mine_all(const Corpus& corpus, const MinerConfig& config, int k, int mix_easy,
                    int mix_hard, std::uint64_t rng_seed, std::size_t max_focals) {
    MineResult result;
    std::vector<std::string> focals = eligible_focals(corpus, config);
    if (max_focals > 0 && focals.size() > max_focals) {
        Rng rng(derive_seed(rng_seed, "focal-sample"));
        focals = rng.sample_without_replacement(focals, max_focals);
        std::sort(focals.begin(), focals.end());
    }
    for (const auto& focal : focals) {
        try {
            auto triplets = mine_triplets(corpus, config, focal, k, mix_easy, mix_hard,
                                          derive_seed(rng_seed, focal));
            result.triplets.insert(result.triplets.end(), triplets.begin(), triplets.end());
            result.focals_used.push_back(focal);
        } catch (const DataError&) {
            result.focals_skipped.push_back(focal);
        }
    }
    return result;
}

std::pair<std::vector<Triplet>, std::vector<Triplet>> split_dataset(
    const std::vector<Triplet>& triplets, double ratio, std::uint64_t rng_seed) {
    std::vector<std::string> focals;
    for (const auto& t : triplets) focals.push_back(t.focal_id);
    std::sort(focals.begin(), focals.end());
    focals.erase(std::unique(focals.begin(), focals.end()), focals.end());
    if (focals.size() < 2) throw DataError("split_dataset: need at least 2 focals");

    const auto n = static_cast<long long>(focals.size());
    const long long n_train = std::llround(ratio * static_cast<double>(n));
    if (n_train <= 0 || n_train >= n)
        throw DataError("split_dataset: ratio " + std::to_string(ratio) +
                        " leaves an empty part");

    Rng rng(rng_seed);
    rng.shuffle(focals);
    std::unordered_set<std::string> train_focals(focals.begin(),
                                                 focals.begin() + n_train);
    std::pair<std::vector<Triplet>, std::vector<Triplet>> out;
    for (const auto& t : triplets) {
        if (train_focals.count(t.focal_id)) {
            out.first.push_back(t);
        } else {
            out.second.push_back(t);
        }
    }
    return out;
}

TestSetResult build_test_set(const Corpus& corpus, const MinerConfig& config, std::size_t n,
                             const std::vector<Triplet>& train_triplets,
                             std::uint64_t rng_seed) {
    std::unordered_set<std::string> train_ids;
    for (const auto& t : train_triplets) {
        train_ids.insert(t.focal_id);
        train_ids.insert(t.positive_id);
        train_ids.insert(t.negative_id);
    }
    auto strip_train = [&](std::vector<std::string> pool) {
        std::erase_if(pool, [&](const std::string& id) { return train_ids.count(id) != 0; });
        return pool;
    };

    struct Candidate {
        std::string focal;
        std::vector<std::string> positives, hard, easy;
    };
    std::vector<Candidate> candidates;
    for (const auto& focal : eligible_focals(corpus, config)) {
        if (train_ids.count(focal)) continue;
        Candidate c;
        c.focal = focal;
        c.positives = strip_train(positive_pool(corpus, focal));
        if (c.positives.size() < TestSample::kPositives) continue;
        c.hard = strip_train(hard_negative_pool(corpus, focal));
        if (c.hard.size() < TestSample::kHardNegatives) continue;
        c.easy = strip_train(easy_negative_pool(corpus, config, focal));
        if (c.easy.size() < TestSample::kEasyNegatives) continue;
        candidates.push_back(std::move(c));
    }

    TestSetResult result;
    result.requested = n;
    result.qualifying = candidates.size();
    if (candidates.empty()) throw DataError("build_test_set: no qualifying focals");

    if (candidates.size() > n) {
        Rng rng(derive_seed(rng_seed, "testset-sample"));
        std::vector<std::size_t> idx(candidates.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        idx = rng.sample_without_replacement(idx, n);
        std::sort(idx.begin(), idx.end());
        std::vector<Candidate> chosen;
        for (auto i : idx) chosen.push_back(std::move(candidates[i]));
        candidates = std::move(chosen);
    }

    for (const auto& c : candidates) {
        Rng rng(derive_seed(rng_seed, "test:" + c.focal));
        TestSample s;
        s.focal_id = c.focal;
        s.positive_ids = rng.sample_without_replacement(c.positives, TestSample::kPositives);
        for (const auto& id :
             rng.sample_without_replacement(c.hard, TestSample::kHardNegatives))
            s.negatives.emplace_back(id, NegativeKind::Hard);
        for (const auto& id :
             rng.sample_without_replacement(c.easy, TestSample::kEasyNegatives))
            s.negatives.emplace_back(id, NegativeKind::Easy);
        result.samples.push_back(std::move(s));
    }
    return result;
}

DatasetStats dataset_stats(const std::vector<Triplet>& triplets) {
    DatasetStats stats;
    stats.rows = triplets.size();
    std::unordered_set<std::string> focals, negatives;
    std::unordered_map<std::string, std::size_t> positive_uses;
    for (const auto& t : triplets) {
        focals.insert(t.focal_id);
        ++positive_uses[t.positive_id];
        negatives.insert(t.negative_id);
        if (t.negative_kind == NegativeKind::Easy) {
            ++stats.easy_rows;
        } else {
            ++stats.hard_rows;
        }
    }
    stats.unique_focals = focals.size();
    stats.unique_positives = positive_uses.size();
    stats.unique_negatives = negatives.size();
    if (!positive_uses.empty()) {
        std::size_t once = 0;
        for (const auto& [id, uses] : positive_uses)
            if (uses == 1) ++once;
        stats.positives_used_once_fraction =
            static_cast<double>(once) / static_cast<double>(positive_uses.size());
    }
    return stats;
}

void save_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& t : triplets) {
        ojson j;
        j["focal_id"] = t.focal_id;
        j["positive_id"] = t.positive_id;
        j["negative_id"] = t.negative_id;
        j["negative_kind"] = std::string(to_string(t.negative_kind));
        out << j.dump() << "\n";
    }
}

std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<Triplet> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = ojson::parse(line);
            Triplet t;
            t.focal_id = j.at("focal_id").get<std::string>();
            t.positive_id = j.at("positive_id").get<std::string>();
            t.negative_id = j.at("negative_id").get<std::string>();
            auto kind = parse_negative_kind(j.at("negative_kind").get<std::string>());
            if (!kind) throw DataError("unknown negative_kind");
            t.negative_kind = *kind;
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    return out;
}

void save_test_set(const std::filesystem::path& path, const std::vector<TestSample>& samples) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& s : samples) {
        ojson j;
        j["focal_id"] = s.focal_id;
        j["positive_ids"] = s.positive_ids;
        ojson negs = ojson::array();
        for (const auto& [id, kind] : s.negatives) {
            ojson e;
            e["id"] = id;
            e["kind"] = std::string(to_string(kind));
            negs.push_back(std::move(e));
        }
        j["negatives"] = std::move(negs);
        out << j.dump() << "\n";
    }
}

std::vector<TestSample> load_test_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<TestSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + " line " + std::to_string(line_no);
        try {
            auto j = ojson::parse(line);
            TestSample s;
            s.focal_id = j.at("focal_id").get<std::string>();
            s.positive_ids = j.at("positive_ids").get<std::vector<std::string>>();
            for (const auto& e : j.at("negatives")) {
                auto kind = parse_negative_kind(e.at("kind").get<std::string>());
                if (!kind) throw DataError(where + ": unknown negative kind");
                s.negatives.emplace_back(e.at("id").get<std::string>(), *kind);
            }
            // Shape invariants of the 1+5+25 unit.
            if (s.positive_ids.size() != TestSample::kPositives ||
                s.negatives.size() !=
                    TestSample::kHardNegatives + TestSample::kEasyNegatives)
                throw DataError(where + ": sample must have 5 positives and 25 negatives");
            std::size_t hard = 0;
            for (const auto& [id, kind] : s.negatives)
                if (kind == NegativeKind::Hard) ++hard;
            if (hard != TestSample::kHardNegatives)
                throw DataError(where + ": sample must have 10 hard and 15 easy negatives");
            std::set<std::string> distinct{s.focal_id};
            for (const auto& id : s.positive_ids) distinct.insert(id);
            for (const auto& [id, kind] : s.negatives) distinct.insert(id);
            if (distinct.size() != 31) throw DataError(where + ": sample ids not distinct");
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

}  // namespace patvec
