#pragma once

// Brute-force metric oracles, deliberately coded through different routes
// than the evaluator: AP from the sorted positive ranks, RFR as an explicit
// minimum over positives.

#include <algorithm>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "patvec/evaluator.hpp"
#include "patvec/rng.hpp"

namespace patvec::oracle {

inline int rfr(const RankedList& ranked, const std::set<std::string>& positives) {
    int best = std::numeric_limits<int>::max();
    for (const auto& p : positives)
        for (std::size_t i = 0; i < ranked.candidate_ids.size(); ++i)
            if (ranked.candidate_ids[i] == p) best = std::min(best, static_cast<int>(i) + 1);
    return best;
}

inline double average_precision(const RankedList& ranked,
                                const std::set<std::string>& positives) {
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

inline double mrr_at_k(const RankedList& ranked, const std::set<std::string>& positives,
                       int k) {
    const int r = rfr(ranked, positives);
    return r <= k ? 1.0 / r : 0.0;
}

struct RandomRanking {
    RankedList ranked;
    std::set<std::string> positives;
};

// Uniformly shuffled 30-candidate list with 5 distinct positives.
inline RandomRanking random_ranking(Rng& rng) {
    RandomRanking out;
    out.ranked.focal_id = "F";
    std::vector<std::string> ids;
    for (int i = 0; i < 30; ++i) ids.push_back("C" + std::to_string(i));
    rng.shuffle(ids);
    while (out.positives.size() < 5)
        out.positives.insert(ids[rng.uniform_u64(30)]);
    out.ranked.candidate_ids = ids;
    for (int i = 0; i < 30; ++i) out.ranked.scores.push_back(30.0 - i);
    return out;
}

// Monte-Carlo expectation of AP for a uniform shuffle of 5 positives in 30.
inline double random_map_expectation(Rng& rng, int shuffles) {
    double total = 0.0;
    std::vector<int> order(30);
    for (int s = 0; s < shuffles; ++s) {
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
        total += sum / 5.0;
    }
    return total / shuffles;
}

}  // namespace patvec::oracle
