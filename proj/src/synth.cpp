#include "patvec/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "patvec/errors.hpp"
#include "patvec/rng.hpp"
#include "patvec/text.hpp"

namespace patvec {

namespace {

struct Family {
    std::size_t gid = 0;
    int topic = 0;
    int subtopic = 0;
    int size = 1;
    Date filing;       // primary filing
    Date publication;  // primary publication
    std::vector<std::string> specific_tokens;
    std::vector<std::size_t> cited_gids;
};

void check_spec(const SynthSpec& spec) {
    std::vector<std::string> problems;
    if (spec.n_topics < 1) problems.push_back("n_topics must be >= 1");
    if (spec.docs_per_topic < 1) problems.push_back("docs_per_topic must be >= 1");
    if (spec.subtopics_per_topic < 1) problems.push_back("subtopics_per_topic must be >= 1");
    if (spec.vocab_per_topic < 1) problems.push_back("vocab_per_topic must be >= 1");
    if (spec.vocab_per_subtopic < 1) problems.push_back("vocab_per_subtopic must be >= 1");
    if (spec.shared_vocab < 0) problems.push_back("shared_vocab must be >= 0");
    if (spec.intra_topic_citation_prob < 0 || spec.intra_topic_citation_prob > 1)
        problems.push_back("intra_topic_citation_prob must be in [0,1]");
    if (spec.intra_subtopic_citation_prob < 0 || spec.intra_subtopic_citation_prob > 1)
        problems.push_back("intra_subtopic_citation_prob must be in [0,1]");
    if (spec.cites_min < 0 || spec.cites_max < spec.cites_min)
        problems.push_back("cites_min/cites_max form an invalid range");
    if (spec.cpc_classes_per_topic < 1) problems.push_back("cpc_classes_per_topic must be >= 1");
    if (!is_valid_date(spec.date_start) || !is_valid_date(spec.date_end) ||
        spec.date_end < spec.date_start)
        problems.push_back("invalid date range");
    for (const auto& [cat, w] : spec.category_weights)
        if (w < 0) problems.push_back("negative category weight");
    double total = 0;
    for (const auto& [cat, w] : spec.category_weights) total += w;
    if (total <= 0) problems.push_back("category weights must sum to a positive value");
    for (double p : {spec.no_cpc_prob, spec.no_english_prob, spec.no_abstract_prob})
        if (p < 0 || p > 1) problems.push_back("probabilities must be in [0,1]");
    if (!problems.empty()) {
        std::string msg = "synth spec:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ConfigError(msg);
    }
}

std::string pad_id(std::string_view prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06zu", std::string(prefix).c_str(), n);
    return buf;
}

CitationCategory draw_category(Rng& rng, const std::map<CitationCategory, double>& weights,
                               double total) {
    double x = rng.uniform_real() * total;
    for (const auto& [cat, w] : weights) {
        x -= w;
        if (x < 0) return cat;
    }
    return weights.rbegin()->first;
}

std::string sibling_language(std::string_view jurisdiction) {
    if (jurisdiction == "US" || jurisdiction == "WO" || jurisdiction == "GB" ||
        jurisdiction == "CA" || jurisdiction == "AU")
        return "en";
    if (jurisdiction == "DE") return "de";
    if (jurisdiction == "FR") return "fr";
    if (jurisdiction == "JP") return "ja";
    if (jurisdiction == "KR") return "ko";
    return "zh";  // CN, TW
}

}  // namespace

SynthResult generate_synthetic_corpus(const SynthSpec& spec) {
    check_spec(spec);
    Rng rng(spec.rng_seed);

    // Vocabularies.
    std::vector<std::vector<std::string>> topic_vocab(static_cast<std::size_t>(spec.n_topics));
    for (int t = 0; t < spec.n_topics; ++t)
        for (int w = 0; w < spec.vocab_per_topic; ++w)
            topic_vocab[static_cast<std::size_t>(t)].push_back(
                "t" + std::to_string(t) + "w" + std::to_string(w));
    std::vector<std::vector<std::vector<std::string>>> subtopic_vocab(
        static_cast<std::size_t>(spec.n_topics));
    for (int t = 0; t < spec.n_topics; ++t) {
        auto& subs = subtopic_vocab[static_cast<std::size_t>(t)];
        subs.resize(static_cast<std::size_t>(spec.subtopics_per_topic));
        for (int s = 0; s < spec.subtopics_per_topic; ++s)
            for (int w = 0; w < spec.vocab_per_subtopic; ++w)
                subs[static_cast<std::size_t>(s)].push_back("t" + std::to_string(t) + "s" +
                                                            std::to_string(s) + "w" +
                                                            std::to_string(w));
    }
    std::vector<std::string> shared_vocab;
    for (int w = 0; w < spec.shared_vocab; ++w)
        shared_vocab.push_back("common" + std::to_string(w));

    // One CPC code pool per topic, all codes inside the topic's class(es).
    std::vector<std::vector<std::string>> topic_cpc(static_cast<std::size_t>(spec.n_topics));
    for (int t = 0; t < spec.n_topics; ++t) {
        for (int k = 0; k < spec.cpc_classes_per_topic; ++k) {
            const int class_num = t * spec.cpc_classes_per_topic + k;
            char cls[8];
            std::snprintf(cls, sizeof(cls), "%c%02d", 'A' + (class_num % 8),
                          1 + (class_num / 8) % 99);
            for (int c = 0; c < 6; ++c) {
                char code[24];
                std::snprintf(code, sizeof(code), "%s%c%d/%02d", cls, 'A' + (c % 12),
                              1 + c, 2 * (c + 1));
                topic_cpc[static_cast<std::size_t>(t)].push_back(code);
            }
        }
    }

    // Families partition each topic's record budget; sizes 1-3.
    std::vector<Family> families;
    for (int t = 0; t < spec.n_topics; ++t) {
        int remaining = spec.docs_per_topic;
        while (remaining > 0) {
            Family fam;
            fam.gid = families.size();
            fam.topic = t;
            fam.subtopic =
                static_cast<int>(rng.uniform_u64(static_cast<std::uint64_t>(spec.subtopics_per_topic)));
            const double u = rng.uniform_real();
            int size = u < 0.70 ? 1 : (u < 0.90 ? 2 : 3);
            fam.size = std::min(size, remaining);
            remaining -= fam.size;

            const std::int64_t span =
                days_from_civil(spec.date_end) - days_from_civil(spec.date_start);
            fam.filing =
                add_days(spec.date_start, rng.uniform_int(0, std::max<std::int64_t>(span, 0)));
            fam.publication = add_days(fam.filing, rng.uniform_int(90, 540));
            for (int s = 0; s < 8; ++s)
                fam.specific_tokens.push_back("f" + std::to_string(fam.gid) + "x" +
                                              std::to_string(s));
            families.push_back(std::move(fam));
        }
    }

    // Citations flow backward in time: each family cites primaries already
    // published at its filing date. Assign in chronological order.
    std::vector<std::size_t> chrono(families.size());
    std::iota(chrono.begin(), chrono.end(), std::size_t{0});
    std::sort(chrono.begin(), chrono.end(), [&](std::size_t a, std::size_t b) {
        if (families[a].filing != families[b].filing)
            return families[a].filing < families[b].filing;
        return a < b;
    });

    double weight_total = 0;
    for (const auto& [cat, w] : spec.category_weights) weight_total += w;

    SynthResult result;
    result.n_families = families.size();
    std::vector<std::vector<std::size_t>> published_same(
        static_cast<std::size_t>(spec.n_topics));
    std::vector<std::vector<std::vector<std::size_t>>> published_sub(
        static_cast<std::size_t>(spec.n_topics),
        std::vector<std::vector<std::size_t>>(
            static_cast<std::size_t>(spec.subtopics_per_topic)));
    std::vector<std::size_t> published_all;

    struct PendingEdge {
        std::size_t citing_gid, cited_gid;
        CitationCategory category;
    };
    std::vector<PendingEdge> pending_edges;

    for (std::size_t pos = 0; pos < chrono.size(); ++pos) {
        Family& fam = families[chrono[pos]];
        // Targets published strictly before this filing.
        auto published_before = [&](const std::vector<std::size_t>& pool) {
            std::vector<std::size_t> out;
            for (auto g : pool)
                if (families[g].publication < fam.filing) out.push_back(g);
            return out;
        };
        const auto same_topic =
            published_before(published_same[static_cast<std::size_t>(fam.topic)]);
        const auto same_sub = published_before(
            published_sub[static_cast<std::size_t>(fam.topic)]
                         [static_cast<std::size_t>(fam.subtopic)]);
        const auto any_topic = published_before(published_all);

        if (any_topic.empty()) {
            ++result.n_root_families;
        } else {
            const int want = static_cast<int>(rng.uniform_int(spec.cites_min, spec.cites_max));
            std::vector<std::size_t> targets;
            for (int c = 0; c < std::max(want, 1); ++c) {
                const bool intra =
                    !same_topic.empty() && (rng.bernoulli(spec.intra_topic_citation_prob) ||
                                            any_topic.size() == same_topic.size());
                const bool niche =
                    intra && !same_sub.empty() && rng.bernoulli(spec.intra_subtopic_citation_prob);
                const auto& pool = niche ? same_sub : (intra ? same_topic : any_topic);
                targets.push_back(pool[static_cast<std::size_t>(
                    rng.uniform_u64(pool.size()))]);
            }
            std::sort(targets.begin(), targets.end());
            targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
            for (auto g : targets) {
                pending_edges.push_back(
                    {fam.gid, g, draw_category(rng, spec.category_weights, weight_total)});
                fam.cited_gids.push_back(g);
            }
        }
        published_same[static_cast<std::size_t>(fam.topic)].push_back(fam.gid);
        published_sub[static_cast<std::size_t>(fam.topic)]
                     [static_cast<std::size_t>(fam.subtopic)].push_back(fam.gid);
        published_all.push_back(fam.gid);
    }

    // Records: text and metadata per family member, in family order.
    constexpr std::string_view kSiblingJurisdictions[] = {"US", "WO", "DE", "JP",
                                                          "GB", "FR", "CN", "KR"};
    std::vector<std::string> primary_id_of(families.size());
    std::size_t record_counter = 0;

    // A citing document embeds a token block from every family it cites, on
    // top of its own rare tokens and topic/shared background. Cited documents
    // therefore overlap the citing text far more than same-topic strangers.
    auto append = [](std::vector<std::string>& out, const std::string& tok) {
        out.push_back(tok);
    };
    auto make_abstract = [&](const Family& fam) {
        std::vector<std::string> tokens;
        const auto& topic = topic_vocab[static_cast<std::size_t>(fam.topic)];
        const auto& niche = subtopic_vocab[static_cast<std::size_t>(fam.topic)]
                                          [static_cast<std::size_t>(fam.subtopic)];
        for (auto g : fam.cited_gids) {
            const auto& spec_tokens = families[g].specific_tokens;
            const std::size_t n = 5 + static_cast<std::size_t>(rng.uniform_u64(2));
            for (const auto& tok :
                 rng.sample_without_replacement(spec_tokens, std::min(n, spec_tokens.size())))
                append(tokens, tok);
        }
        const int own = static_cast<int>(rng.uniform_int(10, 13));
        for (int i = 0; i < own; ++i)
            append(tokens, fam.specific_tokens[static_cast<std::size_t>(
                               rng.uniform_u64(fam.specific_tokens.size()))]);
        const int niche_bg = static_cast<int>(rng.uniform_int(22, 28));
        for (int i = 0; i < niche_bg; ++i)
            append(tokens, niche[static_cast<std::size_t>(rng.uniform_u64(niche.size()))]);
        const int class_bg = static_cast<int>(rng.uniform_int(2, 4));
        for (int i = 0; i < class_bg; ++i)
            append(tokens, topic[static_cast<std::size_t>(rng.uniform_u64(topic.size()))]);
        if (!shared_vocab.empty()) {
            const int noise = static_cast<int>(rng.uniform_int(40, 70));
            for (int i = 0; i < noise; ++i)
                append(tokens, shared_vocab[static_cast<std::size_t>(
                                   rng.uniform_u64(shared_vocab.size()))]);
        }
        rng.shuffle(tokens);
        return join(tokens, " ");
    };
    auto make_title = [&](const Family& fam) {
        std::vector<std::string> tokens;
        const auto& niche = subtopic_vocab[static_cast<std::size_t>(fam.topic)]
                                          [static_cast<std::size_t>(fam.subtopic)];
        for (int i = 0; i < 2; ++i)
            append(tokens, fam.specific_tokens[static_cast<std::size_t>(
                               rng.uniform_u64(fam.specific_tokens.size()))]);
        for (int i = 0; i < 2; ++i)
            append(tokens, niche[static_cast<std::size_t>(rng.uniform_u64(niche.size()))]);
        return join(tokens, " ");
    };

    auto draw_cpc = [&](const Family& fam) {
        std::vector<std::string> codes;
        const auto& pool = topic_cpc[static_cast<std::size_t>(fam.topic)];
        const int n = static_cast<int>(rng.uniform_int(1, 3));
        for (int i = 0; i < n; ++i)
            codes.push_back(pool[static_cast<std::size_t>(rng.uniform_u64(pool.size()))]);
        std::sort(codes.begin(), codes.end());
        codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
        return codes;
    };

    for (const auto& fam : families) {
        const std::string family_id = "F" + std::to_string(fam.gid);
        const bool primary_english = !rng.bernoulli(spec.no_english_prob);
        for (int member = 0; member < fam.size; ++member) {
            PatentRecord rec;
            rec.family_id = family_id;
            const bool is_primary = member == 0;
            if (is_primary) {
                rec.jurisdiction = "EP";
                rec.kind = rng.bernoulli(0.5) ? ApplicationKind::EpDirect
                                              : ApplicationKind::EuroPct;
                rec.filing_date = fam.filing;
                rec.publication_date = fam.publication;
                rec.language = primary_english ? "en" : (rng.bernoulli(0.5) ? "de" : "fr");
            } else {
                // First sibling of a non-English primary is forced English so
                // family resolution usually succeeds.
                std::string juris;
                if (member == 1 && !primary_english) {
                    constexpr std::string_view kEnglish[] = {"US", "WO", "GB"};
                    juris = std::string(kEnglish[rng.uniform_u64(3)]);
                } else {
                    juris = std::string(kSiblingJurisdictions[rng.uniform_u64(
                        std::size(kSiblingJurisdictions))]);
                }
                rec.jurisdiction = juris;
                rec.kind = ApplicationKind::Other;
                rec.filing_date = add_days(fam.filing, rng.uniform_int(0, 180));
                rec.publication_date = add_days(*rec.filing_date, rng.uniform_int(90, 540));
                rec.language = sibling_language(juris);
            }
            ++record_counter;
            rec.patent_id = pad_id(rec.jurisdiction, record_counter);
            if (is_primary) primary_id_of[fam.gid] = rec.patent_id;

            rec.title = make_title(fam);
            if (rng.bernoulli(spec.no_abstract_prob)) {
                rec.abstract = std::nullopt;
            } else {
                rec.abstract = make_abstract(fam);
            }
            if (!rng.bernoulli(spec.no_cpc_prob)) rec.cpc_codes = draw_cpc(fam);
            result.records.push_back(std::move(rec));
        }
    }

    for (const auto& e : pending_edges) {
        CitationEdge edge;
        edge.citing_id = primary_id_of[e.citing_gid];
        edge.cited_id = primary_id_of[e.cited_gid];
        edge.category = e.category;
        result.edges.push_back(std::move(edge));
    }
    return result;
}

}  // namespace patvec
