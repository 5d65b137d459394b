#include "patvec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "json.hpp"
#include "patvec/errors.hpp"
#include "patvec/text.hpp"

namespace patvec {

using ojson = nlohmann::ordered_json;

std::string_view to_string(ApplicationKind k) {
    switch (k) {
        case ApplicationKind::EpDirect: return "ep_direct";
        case ApplicationKind::EuroPct: return "euro_pct";
        case ApplicationKind::Other: return "other";
    }
    return "other";
}

std::optional<ApplicationKind> parse_application_kind(std::string_view s) {
    if (s == "ep_direct") return ApplicationKind::EpDirect;
    if (s == "euro_pct") return ApplicationKind::EuroPct;
    if (s == "other") return ApplicationKind::Other;
    return std::nullopt;
}

std::string_view to_string(CitationCategory c) {
    switch (c) {
        case CitationCategory::X: return "X";
        case CitationCategory::I: return "I";
        case CitationCategory::Y: return "Y";
        case CitationCategory::A: return "A";
        case CitationCategory::O: return "O";
        case CitationCategory::P: return "P";
        case CitationCategory::T: return "T";
        case CitationCategory::E: return "E";
        case CitationCategory::D: return "D";
        case CitationCategory::L: return "L";
        case CitationCategory::Amp: return "AMP";
    }
    return "A";
}

std::optional<CitationCategory> parse_citation_category(std::string_view s) {
    if (s == "X") return CitationCategory::X;
    if (s == "I") return CitationCategory::I;
    if (s == "Y") return CitationCategory::Y;
    if (s == "A") return CitationCategory::A;
    if (s == "O") return CitationCategory::O;
    if (s == "P") return CitationCategory::P;
    if (s == "T") return CitationCategory::T;
    if (s == "E") return CitationCategory::E;
    if (s == "D") return CitationCategory::D;
    if (s == "L") return CitationCategory::L;
    if (s == "AMP") return CitationCategory::Amp;
    return std::nullopt;
}

std::string_view to_string(TextMode m) {
    return m == TextMode::TitleAbstract ? "title_abstract" : "title_cpc";
}

std::optional<TextMode> parse_text_mode(std::string_view s) {
    if (s == "title_abstract") return TextMode::TitleAbstract;
    if (s == "title_cpc") return TextMode::TitleCpc;
    return std::nullopt;
}

// Section letter, 2-digit class, subclass letter, group digits, "/", subgroup digits.
bool is_valid_cpc(std::string_view code) {
    if (code.size() < 7) return false;
    const char section = code[0];
    const bool section_ok = (section >= 'A' && section <= 'H') || section == 'Y';
    if (!section_ok) return false;
    if (code[1] < '0' || code[1] > '9' || code[2] < '0' || code[2] > '9') return false;
    if (code[3] < 'A' || code[3] > 'Z') return false;
    std::size_t i = 4;
    std::size_t group_digits = 0;
    while (i < code.size() && code[i] >= '0' && code[i] <= '9') {
        ++i;
        ++group_digits;
    }
    if (group_digits == 0 || i >= code.size() || code[i] != '/') return false;
    ++i;
    std::size_t sub_digits = 0;
    while (i < code.size() && code[i] >= '0' && code[i] <= '9') {
        ++i;
        ++sub_digits;
    }
    return sub_digits > 0 && i == code.size();
}

std::string_view cpc_prefix(std::string_view code, CpcLevel level) {
    const std::size_t n = level == CpcLevel::Class ? 3 : 4;
    return code.substr(0, std::min(n, code.size()));
}

std::vector<std::string> validate_record(const PatentRecord& rec) {
    std::vector<std::string> problems;
    if (rec.patent_id.empty()) problems.push_back("empty patent_id");
    if (rec.family_id.empty()) problems.push_back("empty family_id");
    if (rec.jurisdiction.size() != 2 ||
        !std::all_of(rec.jurisdiction.begin(), rec.jurisdiction.end(),
                     [](char c) { return c >= 'A' && c <= 'Z'; })) {
        problems.push_back("jurisdiction must be two uppercase letters, got '" +
                           rec.jurisdiction + "'");
    }
    if (rec.filing_date && !is_valid_date(*rec.filing_date))
        problems.push_back("invalid filing_date");
    if (rec.publication_date && !is_valid_date(*rec.publication_date))
        problems.push_back("invalid publication_date");
    if (rec.filing_date && rec.publication_date &&
        *rec.publication_date < *rec.filing_date) {
        problems.push_back("filing_date after publication_date");
    }
    for (const auto& code : rec.cpc_codes) {
        if (!is_valid_cpc(code)) problems.push_back("malformed CPC symbol '" + code + "'");
    }
    return problems;
}

Corpus Corpus::build(std::vector<PatentRecord> records, std::vector<CitationEdge> edges) {
    Corpus c;
    for (auto& rec : records) {
        const std::string id = rec.patent_id;
        auto [it, inserted] = c.records_.emplace(id, std::move(rec));
        if (!inserted) throw DataError("duplicate patent_id '" + id + "'");
    }
    for (const auto& [id, rec] : c.records_) c.families_[rec.family_id].push_back(id);

    std::sort(edges.begin(), edges.end(), [](const CitationEdge& a, const CitationEdge& b) {
        return std::tie(a.citing_id, a.cited_id, a.category) <
               std::tie(b.citing_id, b.cited_id, b.category);
    });
    for (auto& e : edges) {
        if (e.citing_id == e.cited_id)
            throw DataError("self-citation on '" + e.citing_id + "'");
        if (c.records_.count(e.citing_id) && c.records_.count(e.cited_id)) {
            c.forward_[e.citing_id].push_back(e);
            c.backward_[e.cited_id].push_back(e);
            c.edges_.push_back(std::move(e));
        } else {
            c.dangling_.push_back(std::move(e));
        }
    }
    return c;
}

const PatentRecord& Corpus::record(const std::string& patent_id) const {
    auto it = records_.find(patent_id);
    if (it == records_.end()) throw DataError("unknown patent_id '" + patent_id + "'");
    return it->second;
}

namespace {
const std::vector<CitationEdge> kNoEdges;
const std::vector<std::string> kNoIds;
}  // namespace

const std::vector<CitationEdge>& Corpus::forward_edges(const std::string& patent_id) const {
    auto it = forward_.find(patent_id);
    return it == forward_.end() ? kNoEdges : it->second;
}

const std::vector<CitationEdge>& Corpus::backward_edges(const std::string& patent_id) const {
    auto it = backward_.find(patent_id);
    return it == backward_.end() ? kNoEdges : it->second;
}

const std::vector<std::string>& Corpus::family_members(const std::string& patent_id) const {
    auto it = families_.find(record(patent_id).family_id);
    return it == families_.end() ? kNoIds : it->second;
}

namespace {

std::optional<std::string> opt_string(const ojson& j, const char* key,
                                      std::vector<std::string>& problems) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) {
        problems.push_back(std::string(key) + " must be a string or null");
        return std::nullopt;
    }
    return j[key].get<std::string>();
}

std::optional<Date> opt_date(const ojson& j, const char* key,
                             std::vector<std::string>& problems) {
    auto s = opt_string(j, key, problems);
    if (!s) return std::nullopt;
    auto d = parse_date(*s);
    if (!d) problems.push_back(std::string(key) + " is not a valid ISO date: '" + *s + "'");
    return d;
}

std::string req_string(const ojson& j, const char* key,
                       std::vector<std::string>& problems) {
    if (!j.contains(key) || !j[key].is_string()) {
        problems.push_back(std::string("missing or non-string field '") + key + "'");
        return {};
    }
    return j[key].get<std::string>();
}

PatentRecord parse_record_json(const ojson& j, std::vector<std::string>& problems) {
    PatentRecord rec;
    rec.patent_id = req_string(j, "patent_id", problems);
    rec.family_id = req_string(j, "family_id", problems);
    rec.jurisdiction = req_string(j, "jurisdiction", problems);
    const std::string kind = req_string(j, "application_kind", problems);
    if (auto k = parse_application_kind(kind)) {
        rec.kind = *k;
    } else {
        problems.push_back("unknown application_kind '" + kind + "'");
    }
    rec.filing_date = opt_date(j, "filing_date", problems);
    rec.publication_date = opt_date(j, "publication_date", problems);
    rec.title = opt_string(j, "title", problems);
    rec.abstract = opt_string(j, "abstract", problems);
    rec.language = opt_string(j, "language", problems);
    if (j.contains("cpc_codes") && !j["cpc_codes"].is_null()) {
        if (!j["cpc_codes"].is_array()) {
            problems.push_back("cpc_codes must be an array");
        } else {
            for (const auto& e : j["cpc_codes"]) {
                if (!e.is_string()) {
                    problems.push_back("cpc_codes entries must be strings");
                    break;
                }
                rec.cpc_codes.push_back(e.get<std::string>());
            }
        }
    }
    if (problems.empty()) {
        auto more = validate_record(rec);
        problems.insert(problems.end(), more.begin(), more.end());
    }
    return rec;
}

// Runs `fn` once per non-empty line, 1-based numbering.
template <class Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        fn(line_no, line);
    }
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& records_path,
                   const std::filesystem::path& citations_path) {
    std::vector<PatentRecord> records;
    std::map<std::string, std::size_t> first_line_of;

    for_each_line(records_path, [&](std::size_t line_no, const std::string& line) {
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(records_path.string() + " line " + std::to_string(line_no) +
                            ": malformed JSON (" + e.what() + ")");
        }
        std::vector<std::string> problems;
        PatentRecord rec = parse_record_json(j, problems);
        if (!problems.empty()) {
            std::string msg = records_path.string() + " line " + std::to_string(line_no) + ":";
            for (const auto& p : problems) msg += " " + p + ";";
            throw DataError(msg);
        }
        auto [it, inserted] = first_line_of.emplace(rec.patent_id, line_no);
        if (!inserted) {
            throw DataError(records_path.string() + ": duplicate patent_id '" +
                            rec.patent_id + "' on lines " + std::to_string(it->second) +
                            " and " + std::to_string(line_no));
        }
        records.push_back(std::move(rec));
    });

    std::vector<CitationEdge> edges;
    for_each_line(citations_path, [&](std::size_t line_no, const std::string& line) {
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(citations_path.string() + " line " + std::to_string(line_no) +
                            ": malformed JSON (" + e.what() + ")");
        }
        std::vector<std::string> problems;
        CitationEdge edge;
        edge.citing_id = req_string(j, "citing_id", problems);
        edge.cited_id = req_string(j, "cited_id", problems);
        const std::string cat = req_string(j, "category", problems);
        if (problems.empty()) {
            if (auto c = parse_citation_category(cat)) {
                edge.category = *c;
            } else {
                problems.push_back("unknown citation category '" + cat + "'");
            }
            if (edge.citing_id == edge.cited_id)
                problems.push_back("self-citation on '" + edge.citing_id + "'");
        }
        if (!problems.empty()) {
            std::string msg =
                citations_path.string() + " line " + std::to_string(line_no) + ":";
            for (const auto& p : problems) msg += " " + p + ";";
            throw DataError(msg);
        }
        edges.push_back(std::move(edge));
    });

    return Corpus::build(std::move(records), std::move(edges));
}

namespace {

ojson record_to_json(const PatentRecord& rec) {
    ojson j;
    j["patent_id"] = rec.patent_id;
    j["family_id"] = rec.family_id;
    j["jurisdiction"] = rec.jurisdiction;
    j["application_kind"] = std::string(to_string(rec.kind));
    j["filing_date"] = rec.filing_date ? ojson(format_date(*rec.filing_date)) : ojson(nullptr);
    j["publication_date"] =
        rec.publication_date ? ojson(format_date(*rec.publication_date)) : ojson(nullptr);
    j["title"] = rec.title ? ojson(*rec.title) : ojson(nullptr);
    j["abstract"] = rec.abstract ? ojson(*rec.abstract) : ojson(nullptr);
    j["language"] = rec.language ? ojson(*rec.language) : ojson(nullptr);
    j["cpc_codes"] = rec.cpc_codes;
    return j;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& records_path,
                 const std::filesystem::path& citations_path) {
    std::ofstream rout(records_path);
    if (!rout) throw DataError("cannot write '" + records_path.string() + "'");
    for (const auto& [id, rec] : corpus.records()) rout << record_to_json(rec).dump() << "\n";

    std::vector<CitationEdge> all = corpus.edges();
    all.insert(all.end(), corpus.dangling_edges().begin(), corpus.dangling_edges().end());
    std::sort(all.begin(), all.end(), [](const CitationEdge& a, const CitationEdge& b) {
        return std::tie(a.citing_id, a.cited_id, a.category) <
               std::tie(b.citing_id, b.cited_id, b.category);
    });
    std::ofstream cout_(citations_path);
    if (!cout_) throw DataError("cannot write '" + citations_path.string() + "'");
    for (const auto& e : all) {
        ojson j;
        j["citing_id"] = e.citing_id;
        j["cited_id"] = e.cited_id;
        j["category"] = std::string(to_string(e.category));
        cout_ << j.dump() << "\n";
    }
}

namespace {
// Jurisdiction preference for English-sibling substitution.
constexpr std::string_view kPriority[] = {"WO", "US", "GB", "CA", "AU", "DE",
                                          "CN", "TW", "KR", "FR", "JP"};

int priority_rank(std::string_view jurisdiction) {
    for (std::size_t i = 0; i < std::size(kPriority); ++i)
        if (kPriority[i] == jurisdiction) return static_cast<int>(i);
    return -1;
}
}  // namespace

std::optional<std::string> resolve_english_text(const Corpus& corpus,
                                                const std::string& patent_id) {
    const PatentRecord& rec = corpus.record(patent_id);
    if (rec.has_english_abstract()) return patent_id;

    int best_rank = static_cast<int>(std::size(kPriority));
    const std::string* best_id = nullptr;
    for (const auto& sibling_id : corpus.family_members(patent_id)) {
        if (sibling_id == patent_id) continue;
        const PatentRecord& sib = corpus.record(sibling_id);
        if (!sib.has_english_abstract()) continue;
        const int rank = priority_rank(sib.jurisdiction);
        if (rank < 0) continue;  // outside the priority list, does not qualify
        if (rank < best_rank || (rank == best_rank && sibling_id < *best_id)) {
            best_rank = rank;
            best_id = &sibling_id;
        }
    }
    if (best_id) return *best_id;
    return std::nullopt;
}

std::string compose_text(const Corpus& corpus, const std::string& patent_id,
                         TextMode mode, std::string_view separator) {
    const std::string sep = " " + std::string(separator) + " ";
    if (mode == TextMode::TitleAbstract) {
        auto source = resolve_english_text(corpus, patent_id);
        if (!source) throw DataError("no English text for '" + patent_id + "'");
        const PatentRecord& rec = corpus.record(*source);
        return rec.title.value_or("") + sep + *rec.abstract;
    }
    const PatentRecord& rec = corpus.record(patent_id);
    if (rec.cpc_codes.empty()) throw DataError("no CPC for '" + patent_id + "'");
    return rec.title.value_or("") + sep + join(rec.cpc_codes, " ");
}

std::vector<std::string> backward_citations(const Corpus& corpus,
                                            const std::string& patent_id,
                                            const CategorySet& categories) {
    corpus.record(patent_id);  // existence check
    std::vector<std::string> out;
    for (const auto& e : corpus.forward_edges(patent_id))
        if (categories.contains(e.category)) out.push_back(e.cited_id);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::string> indirect_citations(const Corpus& corpus,
                                            const std::string& patent_id) {
    const auto direct = backward_citations(corpus, patent_id, CategorySet::all());
    std::set<std::string> second_hop;
    for (const auto& cited : direct)
        for (const auto& e : corpus.forward_edges(cited)) second_hop.insert(e.cited_id);
    second_hop.erase(patent_id);
    for (const auto& cited : direct) second_hop.erase(cited);
    return {second_hop.begin(), second_hop.end()};
}

}  // namespace patvec
