#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "patvec/corpus.hpp"

namespace patvec {

// Topic-clustered corpus generator for desk-scale validation. Each DOCDB
// family carries its own rare token set; a citing document borrows tokens
// from the families it cites, so cited documents overlap the citing text
// more than same-topic non-cited ones do.
struct SynthSpec {
    int n_topics = 8;
    int docs_per_topic = 150;        // records per topic, family siblings included
    int subtopics_per_topic = 5;     // niches inside one CPC class
    int vocab_per_topic = 40;        // class-wide background vocabulary
    int vocab_per_subtopic = 48;
    int shared_vocab = 4000;
    double intra_topic_citation_prob = 0.9;
    double intra_subtopic_citation_prob = 0.8;  // given the citation stays in topic
    std::map<CitationCategory, double> category_weights = {
        {CitationCategory::X, 0.30}, {CitationCategory::Y, 0.15},
        {CitationCategory::I, 0.15}, {CitationCategory::A, 0.25},
        {CitationCategory::D, 0.10}, {CitationCategory::P, 0.05}};
    Date date_start{1990, 1, 1};
    Date date_end{2020, 12, 31};
    int cpc_classes_per_topic = 1;
    int cites_min = 3;
    int cites_max = 7;
    // Data-quality dials so family resolution, CPC dropping and English
    // filtering all have work to do at synthetic scale.
    double no_cpc_prob = 0.03;       // record lacks CPC codes entirely
    double no_english_prob = 0.06;   // EP primary lacks an English abstract
    double no_abstract_prob = 0.02;  // record lacks an abstract at all
    std::uint64_t rng_seed = 1;
};

struct SynthResult {
    std::vector<PatentRecord> records;
    std::vector<CitationEdge> edges;
    std::size_t n_families = 0;
    std::size_t n_root_families = 0;  // families with no earlier target to cite
};

SynthResult generate_synthetic_corpus(const SynthSpec& spec);

}  // namespace patvec
