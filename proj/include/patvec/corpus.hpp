#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "patvec/date.hpp"

namespace patvec {

enum class ApplicationKind { EpDirect, EuroPct, Other };

// EPO search-report citation categories ("&" is spelled AMP on the wire).
enum class CitationCategory { X, I, Y, A, O, P, T, E, D, L, Amp };

std::string_view to_string(ApplicationKind k);
std::optional<ApplicationKind> parse_application_kind(std::string_view s);
std::string_view to_string(CitationCategory c);
std::optional<CitationCategory> parse_citation_category(std::string_view s);

// Small fixed set of citation categories.
class CategorySet {
public:
    CategorySet() = default;
    CategorySet(std::initializer_list<CitationCategory> cats) {
        for (auto c : cats) insert(c);
    }
    static CategorySet all() {
        CategorySet s;
        s.mask_ = (1u << 11) - 1;
        return s;
    }
    void insert(CitationCategory c) { mask_ |= bit(c); }
    bool contains(CitationCategory c) const { return (mask_ & bit(c)) != 0; }
    bool empty() const { return mask_ == 0; }

private:
    static std::uint16_t bit(CitationCategory c) {
        return static_cast<std::uint16_t>(1u << static_cast<unsigned>(c));
    }
    std::uint16_t mask_ = 0;
};

// Similarity categories of the positive-citation rule.
inline CategorySet xyia_categories() {
    return {CitationCategory::X, CitationCategory::Y, CitationCategory::I,
            CitationCategory::A};
}
inline CategorySet xyi_categories() {
    return {CitationCategory::X, CitationCategory::Y, CitationCategory::I};
}

struct PatentRecord {
    std::string patent_id;
    std::string family_id;   // DOCDB family
    std::string jurisdiction;  // 2-letter authority code
    ApplicationKind kind = ApplicationKind::Other;
    std::optional<Date> filing_date;
    std::optional<Date> publication_date;
    std::optional<std::string> title;
    std::optional<std::string> abstract;
    std::optional<std::string> language;  // ISO code, "en" marks English
    std::vector<std::string> cpc_codes;

    bool has_english_abstract() const {
        return language && *language == "en" && abstract.has_value();
    }
};

struct CitationEdge {
    std::string citing_id;
    std::string cited_id;
    CitationCategory category = CitationCategory::A;

    friend bool operator==(const CitationEdge&, const CitationEdge&) = default;
};

// CPC hierarchy prefixes, derived syntactically from the symbol.
enum class CpcLevel { Class, Subclass };
bool is_valid_cpc(std::string_view code);
std::string_view cpc_prefix(std::string_view code, CpcLevel level);

// Returns a list of invariant violations; empty means the record is valid.
std::vector<std::string> validate_record(const PatentRecord& rec);

// Immutable after construction; safe for concurrent readers.
class Corpus {
public:
    // Builds all indexes. Edges with an endpoint missing from `records` are
    // kept as dangling: counted and queryable, absent from the adjacency.
    static Corpus build(std::vector<PatentRecord> records,
                        std::vector<CitationEdge> edges);

    bool has(const std::string& patent_id) const {
        return records_.count(patent_id) != 0;
    }
    const PatentRecord& record(const std::string& patent_id) const;

    const std::map<std::string, PatentRecord>& records() const { return records_; }

    // Outgoing edges (patent_id as citing side); empty when none.
    const std::vector<CitationEdge>& forward_edges(const std::string& patent_id) const;
    // Incoming edges (patent_id as cited side); empty when none.
    const std::vector<CitationEdge>& backward_edges(const std::string& patent_id) const;

    const std::map<std::string, std::vector<std::string>>& families() const {
        return families_;
    }
    // Members of the record's DOCDB family, the record itself included.
    const std::vector<std::string>& family_members(const std::string& patent_id) const;

    const std::vector<CitationEdge>& edges() const { return edges_; }
    const std::vector<CitationEdge>& dangling_edges() const { return dangling_; }
    std::size_t dangling_count() const { return dangling_.size(); }

private:
    std::map<std::string, PatentRecord> records_;
    std::unordered_map<std::string, std::vector<CitationEdge>> forward_;
    std::unordered_map<std::string, std::vector<CitationEdge>> backward_;
    std::map<std::string, std::vector<std::string>> families_;
    std::vector<CitationEdge> edges_;    // resolvable, sorted (citing, cited, category)
    std::vector<CitationEdge> dangling_;
};

// Line-delimited JSON ingestion. Malformed lines and duplicate ids raise
// DataError carrying the offending line number(s).
Corpus load_corpus(const std::filesystem::path& records_path,
                   const std::filesystem::path& citations_path);

// Canonical serialization: records sorted by patent_id, edges sorted by
// (citing, cited, category), one JSON object per line. save(load(x)) is a
// fixed point, so reruns are byte-identical.
void save_corpus(const Corpus& corpus, const std::filesystem::path& records_path,
                 const std::filesystem::path& citations_path);

enum class TextMode { TitleAbstract, TitleCpc };
std::string_view to_string(TextMode m);
std::optional<TextMode> parse_text_mode(std::string_view s);

// English source for a patent's text: the record itself if it carries an
// English abstract, otherwise the best family sibling by the jurisdiction
// priority WO > US > GB > CA > AU > DE > CN > TW > KR > FR > JP.
std::optional<std::string> resolve_english_text(const Corpus& corpus,
                                                const std::string& patent_id);

// Encoder input text. TitleAbstract joins the resolved record's title and
// abstract; TitleCpc joins the record's own title and its CPC symbols.
// The separator token is wrapped in single spaces.
std::string compose_text(const Corpus& corpus, const std::string& patent_id,
                         TextMode mode, std::string_view separator = "[SEP]");

// De-duplicated cited ids whose edge category is in `categories`, sorted.
std::vector<std::string> backward_citations(const Corpus& corpus,
                                            const std::string& patent_id,
                                            const CategorySet& categories);

// Two-hop citations: everything cited by the focal's backward citations,
// minus the focal's own direct citations and the focal itself. Sorted.
std::vector<std::string> indirect_citations(const Corpus& corpus,
                                            const std::string& patent_id);

}  // namespace patvec
