#include "patvec/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>

#include "patvec/corpus.hpp"
#include "patvec/encoder.hpp"
#include "patvec/errors.hpp"
#include "patvec/evaluator.hpp"
#include "patvec/miner.hpp"
#include "patvec/rng.hpp"
#include "patvec/synth.hpp"
#include "patvec/trainer.hpp"

namespace patvec {

namespace {

namespace fs = std::filesystem;

constexpr const char* kCommands[] = {"synth",  "ingest",  "mine",    "split",
                                     "testset", "train",  "embed",   "evaluate",
                                     "compare", "ecdf",   "stats"};

// Collects every config problem before failing, so one run reports them all.
class ConfigView {
public:
    ConfigView(const ojson& section, std::string prefix)
        : section_(section), prefix_(std::move(prefix)) {}

    bool has(const std::string& key) const {
        return section_.contains(key) && !section_[key].is_null();
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        if (!section_[key].is_string()) {
            errors_.push_back(prefix_ + key + ": expected string");
            return fallback;
        }
        return section_[key].get<std::string>();
    }

    std::string require_string(const std::string& key) {
        if (!has(key)) {
            errors_.push_back(prefix_ + key + ": required");
            return {};
        }
        return get_string(key, {});
    }

    double get_double(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        if (!section_[key].is_number()) {
            errors_.push_back(prefix_ + key + ": expected number");
            return fallback;
        }
        return section_[key].get<double>();
    }

    int get_int(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        if (!section_[key].is_number_integer()) {
            errors_.push_back(prefix_ + key + ": expected integer");
            return fallback;
        }
        return section_[key].get<int>();
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        if (!section_[key].is_number_unsigned() && !section_[key].is_number_integer()) {
            errors_.push_back(prefix_ + key + ": expected non-negative integer");
            return fallback;
        }
        return section_[key].get<std::uint64_t>();
    }

    bool get_bool(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        if (!section_[key].is_boolean()) {
            errors_.push_back(prefix_ + key + ": expected boolean");
            return fallback;
        }
        return section_[key].get<bool>();
    }

    Date get_date(const std::string& key, const Date& fallback) {
        if (!has(key)) return fallback;
        auto s = get_string(key, {});
        if (auto d = parse_date(s)) return *d;
        errors_.push_back(prefix_ + key + ": expected ISO date, got '" + s + "'");
        return fallback;
    }

    const ojson* get_object(const std::string& key) {
        if (!has(key)) return nullptr;
        if (!section_[key].is_object()) {
            errors_.push_back(prefix_ + key + ": expected object");
            return nullptr;
        }
        return &section_[key];
    }

    const ojson* get_array(const std::string& key) {
        if (!has(key)) return nullptr;
        if (!section_[key].is_array()) {
            errors_.push_back(prefix_ + key + ": expected array");
            return nullptr;
        }
        return &section_[key];
    }

    void check_allowed(std::initializer_list<const char*> allowed) {
        for (const auto& [key, value] : section_.items()) {
            bool ok = false;
            for (const char* a : allowed)
                if (key == a) ok = true;
            if (!ok) errors_.push_back(prefix_ + key + ": unknown key");
        }
    }

    void add_error(const std::string& msg) { errors_.push_back(prefix_ + msg); }

    void merge_errors_from(ConfigView& other) {
        errors_.insert(errors_.end(), other.errors_.begin(), other.errors_.end());
        other.errors_.clear();
    }

    void throw_if_errors() const {
        if (errors_.empty()) return;
        std::string msg = "config:";
        for (const auto& e : errors_) msg += " " + e + ";";
        throw ConfigError(msg);
    }

    bool has_errors() const { return !errors_.empty(); }

private:
    const ojson& section_;
    std::string prefix_;
    std::vector<std::string> errors_;
};

struct Globals {
    std::uint64_t seed = 42;
    fs::path out = "out";
    int threads = 1;
};

const ojson kEmptyObject = ojson::object();

const ojson& section_of(const ojson& config, const char* name) {
    if (config.contains(name) && config[name].is_object()) return config[name];
    return kEmptyObject;
}

Globals parse_globals(const ojson& config) {
    ConfigView v(config, "");
    Globals g;
    g.seed = v.get_u64("seed", 42);
    g.out = v.get_string("out", "out");
    g.threads = v.get_int("threads", 1);
    if (g.threads < 1) v.add_error("threads: must be >= 1");
    v.throw_if_errors();
    return g;
}

fs::path out_path(const Globals& g, const std::string& configured,
                  const char* default_name) {
    if (!configured.empty()) return configured;
    return g.out / default_name;
}

void ensure_parent_dir(const fs::path& file) {
    const fs::path parent = file.parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_manifest(const Globals& g, const std::string& command, const ojson& config,
                    const ojson& outputs, const ojson& summary) {
    ojson manifest;
    manifest["command"] = command;
    manifest["seed"] = g.seed;
    manifest["out"] = g.out.string();
    manifest["threads"] = g.threads;
    if (config.contains(command)) manifest[command] = config[command];
    manifest["outputs"] = outputs;
    manifest["summary"] = summary;
    fs::create_directories(g.out);
    const fs::path path = g.out / ("manifest." + command + ".json");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << manifest.dump(2) << "\n";
}

Corpus load_corpus_inputs(ConfigView& v) {
    const std::string records = v.require_string("records");
    const std::string citations = v.require_string("citations");
    v.throw_if_errors();
    return load_corpus(records, citations);
}

MinerConfig parse_miner_config(ConfigView& v) {
    MinerConfig config;
    if (const ojson* crit = v.get_object("criteria")) {
        ConfigView cv(*crit, "criteria.");
        cv.check_allowed({"kinds", "window_start", "window_end", "require_cpc", "min_xyi",
                          "alt_xyi", "alt_a", "min_collective_indirect",
                          "min_easy_negatives"});
        if (const ojson* kinds = cv.get_array("kinds")) {
            config.criteria.kinds.clear();
            for (const auto& k : *kinds) {
                if (!k.is_string()) {
                    cv.add_error("kinds: entries must be strings");
                    continue;
                }
                if (auto parsed = parse_application_kind(k.get<std::string>())) {
                    config.criteria.kinds.insert(*parsed);
                } else {
                    cv.add_error("kinds: unknown kind '" + k.get<std::string>() + "'");
                }
            }
        }
        config.criteria.window_start = cv.get_date("window_start", config.criteria.window_start);
        config.criteria.window_end = cv.get_date("window_end", config.criteria.window_end);
        config.criteria.require_cpc = cv.get_bool("require_cpc", config.criteria.require_cpc);
        config.criteria.min_xyi = cv.get_int("min_xyi", config.criteria.min_xyi);
        config.criteria.alt_xyi = cv.get_int("alt_xyi", config.criteria.alt_xyi);
        config.criteria.alt_a = cv.get_int("alt_a", config.criteria.alt_a);
        config.criteria.min_collective_indirect =
            cv.get_int("min_collective_indirect", config.criteria.min_collective_indirect);
        config.criteria.min_easy_negatives =
            cv.get_int("min_easy_negatives", config.criteria.min_easy_negatives);
        v.merge_errors_from(cv);
    }
    const std::string level = v.get_string("cpc_level", "class");
    if (level == "class") {
        config.cpc_level = CpcLevel::Class;
    } else if (level == "subclass") {
        config.cpc_level = CpcLevel::Subclass;
    } else {
        v.add_error("cpc_level: expected 'class' or 'subclass'");
    }
    const std::string anchor = v.get_string("window_anchor", "filing");
    if (anchor == "filing") {
        config.window_anchor = DateAnchor::Filing;
    } else if (anchor == "publication") {
        config.window_anchor = DateAnchor::Publication;
    } else {
        v.add_error("window_anchor: expected 'filing' or 'publication'");
    }
    config.easy_window_years = v.get_int("easy_window_years", config.easy_window_years);
    if (config.easy_window_years < 1) v.add_error("easy_window_years: must be >= 1");
    return config;
}

TextMode parse_text_mode_key(ConfigView& v, const std::string& key, TextMode fallback) {
    const std::string s = v.get_string(key, std::string(to_string(fallback)));
    if (auto m = parse_text_mode(s)) return *m;
    v.add_error(key + ": expected 'title_abstract' or 'title_cpc'");
    return fallback;
}

Pooling parse_pooling_key(ConfigView& v, const std::string& key, Pooling fallback) {
    const std::string s = v.get_string(key, std::string(to_string(fallback)));
    if (auto p = parse_pooling(s)) return *p;
    v.add_error(key + ": expected 'mean' or 'first'");
    return fallback;
}

}  // namespace

ojson load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
        ojson j;
        in >> j;
        if (!j.is_object()) throw ConfigError("config root must be an object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
}

ojson merge_config(ojson base, const ojson& overrides) {
    if (!base.is_object() || !overrides.is_object()) return overrides;
    for (const auto& [key, value] : overrides.items()) {
        if (base.contains(key) && base[key].is_object() && value.is_object()) {
            base[key] = merge_config(base[key], value);
        } else {
            base[key] = value;
        }
    }
    return base;
}

void validate_top_level(const ojson& config) {
    ConfigView v(config, "");
    std::vector<std::string> allowed = {"seed", "out", "threads",
                                        // manifest metadata, ignored on replay
                                        "command", "outputs", "summary"};
    for (const char* c : kCommands) allowed.push_back(c);
    for (const auto& [key, value] : config.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            v.add_error(key + ": unknown key");
    }
    v.throw_if_errors();
}

ojson run_synth(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "synth"), "synth.");
    v.check_allowed({"n_topics", "docs_per_topic", "vocab_per_topic", "shared_vocab",
                     "intra_topic_citation_prob", "category_weights", "date_start",
                     "date_end", "cpc_classes_per_topic", "cites_min", "cites_max",
                     "no_cpc_prob", "no_english_prob", "no_abstract_prob", "records_out",
                     "citations_out"});
    SynthSpec spec;
    spec.rng_seed = g.seed;
    spec.n_topics = v.get_int("n_topics", spec.n_topics);
    spec.docs_per_topic = v.get_int("docs_per_topic", spec.docs_per_topic);
    spec.vocab_per_topic = v.get_int("vocab_per_topic", spec.vocab_per_topic);
    spec.shared_vocab = v.get_int("shared_vocab", spec.shared_vocab);
    spec.intra_topic_citation_prob =
        v.get_double("intra_topic_citation_prob", spec.intra_topic_citation_prob);
    if (const ojson* weights = v.get_object("category_weights")) {
        spec.category_weights.clear();
        for (const auto& [key, value] : weights->items()) {
            auto cat = parse_citation_category(key);
            if (!cat || !value.is_number()) {
                v.add_error("category_weights: bad entry '" + key + "'");
                continue;
            }
            spec.category_weights[*cat] = value.get<double>();
        }
    }
    spec.date_start = v.get_date("date_start", spec.date_start);
    spec.date_end = v.get_date("date_end", spec.date_end);
    spec.cpc_classes_per_topic = v.get_int("cpc_classes_per_topic", spec.cpc_classes_per_topic);
    spec.cites_min = v.get_int("cites_min", spec.cites_min);
    spec.cites_max = v.get_int("cites_max", spec.cites_max);
    spec.no_cpc_prob = v.get_double("no_cpc_prob", spec.no_cpc_prob);
    spec.no_english_prob = v.get_double("no_english_prob", spec.no_english_prob);
    spec.no_abstract_prob = v.get_double("no_abstract_prob", spec.no_abstract_prob);
    const fs::path records_out = out_path(g, v.get_string("records_out", ""), "records.jsonl");
    const fs::path citations_out =
        out_path(g, v.get_string("citations_out", ""), "citations.jsonl");
    v.throw_if_errors();

    const SynthResult result = generate_synthetic_corpus(spec);
    Corpus corpus = Corpus::build(result.records, result.edges);
    ensure_parent_dir(records_out);
    ensure_parent_dir(citations_out);
    save_corpus(corpus, records_out, citations_out);

    const auto eligible = eligible_focals(corpus, MinerConfig{});
    ojson summary;
    summary["records"] = result.records.size();
    summary["edges"] = result.edges.size();
    summary["families"] = result.n_families;
    summary["root_families"] = result.n_root_families;
    summary["eligible_focals_default_criteria"] = eligible.size();
    if (eligible.empty()) {
        summary["warning"] = "spec produced zero eligible focals";
        std::cerr << "warning: synth spec produced zero eligible focals (records="
                  << result.records.size() << ", edges=" << result.edges.size() << ")\n";
    }
    ojson outputs;
    outputs["records"] = records_out.string();
    outputs["citations"] = citations_out.string();
    write_manifest(g, "synth", config, outputs, summary);
    return summary;
}

ojson run_ingest(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "ingest"), "ingest.");
    v.check_allowed({"records", "citations", "records_out", "citations_out"});
    const fs::path records_out =
        out_path(g, v.get_string("records_out", ""), "corpus.records.jsonl");
    const fs::path citations_out =
        out_path(g, v.get_string("citations_out", ""), "corpus.citations.jsonl");
    Corpus corpus = load_corpus_inputs(v);

    fs::create_directories(g.out);
    save_corpus(corpus, records_out, citations_out);

    ojson summary;
    summary["records"] = corpus.records().size();
    summary["edges"] = corpus.edges().size();
    summary["dangling_edges"] = corpus.dangling_count();
    summary["families"] = corpus.families().size();
    ojson outputs;
    outputs["records"] = records_out.string();
    outputs["citations"] = citations_out.string();
    write_manifest(g, "ingest", config, outputs, summary);
    return summary;
}

ojson run_mine(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "mine"), "mine.");
    v.check_allowed({"records", "citations", "criteria", "cpc_level", "window_anchor",
                     "easy_window_years", "k", "mix_easy", "mix_hard", "max_focals",
                     "triplets_out"});
    const MinerConfig miner_config = parse_miner_config(v);
    const int k = v.get_int("k", 5);
    const int mix_easy = v.get_int("mix_easy", 3);
    const int mix_hard = v.get_int("mix_hard", 2);
    const std::size_t max_focals =
        static_cast<std::size_t>(v.get_u64("max_focals", 0));
    const fs::path triplets_out =
        out_path(g, v.get_string("triplets_out", ""), "triplets.jsonl");
    Corpus corpus = load_corpus_inputs(v);

    const MineResult result =
        mine_all(corpus, miner_config, k, mix_easy, mix_hard, g.seed, max_focals);
    fs::create_directories(g.out);
    save_triplets(triplets_out, result.triplets);

    ojson summary;
    summary["focals_used"] = result.focals_used.size();
    summary["focals_skipped"] = result.focals_skipped.size();
    summary["rows"] = result.triplets.size();
    if (!result.focals_skipped.empty())
        std::cerr << "mine: skipped " << result.focals_skipped.size()
                  << " eligible focals with insufficient negative pools\n";
    ojson outputs;
    outputs["triplets"] = triplets_out.string();
    write_manifest(g, "mine", config, outputs, summary);
    return summary;
}

ojson run_split(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "split"), "split.");
    v.check_allowed({"triplets", "ratio", "train_out", "val_out"});
    const std::string triplets_path = v.require_string("triplets");
    const double ratio = v.get_double("ratio", 0.85);
    const fs::path train_out = out_path(g, v.get_string("train_out", ""), "train.jsonl");
    const fs::path val_out = out_path(g, v.get_string("val_out", ""), "validation.jsonl");
    v.throw_if_errors();

    const auto triplets = load_triplets(triplets_path);
    auto [train, validation] = split_dataset(triplets, ratio, g.seed);
    fs::create_directories(g.out);
    save_triplets(train_out, train);
    save_triplets(val_out, validation);

    const DatasetStats train_stats = dataset_stats(train);
    const DatasetStats val_stats = dataset_stats(validation);
    ojson summary;
    summary["train_rows"] = train.size();
    summary["train_focals"] = train_stats.unique_focals;
    summary["val_rows"] = validation.size();
    summary["val_focals"] = val_stats.unique_focals;
    ojson outputs;
    outputs["train"] = train_out.string();
    outputs["validation"] = val_out.string();
    write_manifest(g, "split", config, outputs, summary);
    return summary;
}

ojson run_testset(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "testset"), "testset.");
    v.check_allowed({"records", "citations", "train", "n", "criteria", "cpc_level",
                     "window_anchor", "easy_window_years", "testset_out"});
    const MinerConfig miner_config = parse_miner_config(v);
    const std::string train_path = v.require_string("train");
    const std::size_t n = static_cast<std::size_t>(v.get_u64("n", 1000));
    const fs::path testset_out = out_path(g, v.get_string("testset_out", ""), "testset.jsonl");
    Corpus corpus = load_corpus_inputs(v);

    const auto train_triplets = load_triplets(train_path);
    const TestSetResult result =
        build_test_set(corpus, miner_config, n, train_triplets, g.seed);
    fs::create_directories(g.out);
    save_test_set(testset_out, result.samples);

    ojson summary;
    summary["requested"] = result.requested;
    summary["qualifying"] = result.qualifying;
    summary["emitted"] = result.samples.size();
    if (result.samples.size() < result.requested) {
        summary["warning"] = "fewer qualifying focals than requested";
        std::cerr << "warning: testset has " << result.samples.size() << " of "
                  << result.requested << " requested samples\n";
    }
    ojson outputs;
    outputs["testset"] = testset_out.string();
    write_manifest(g, "testset", config, outputs, summary);
    return summary;
}

ojson run_train(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "train"), "train.");
    v.check_allowed({"records", "citations", "train", "val", "text_mode", "separator",
                     "vocab_from", "max_vocab", "min_freq", "max_len", "dim", "out_dim",
                     "learning_rate", "margin", "epochs", "batch_size", "grad_accum",
                     "warmup_fraction", "weight_decay", "validate_every", "pooling",
                     "resume", "model_out", "history_out", "checkpoint_out"});
    const std::string train_path = v.require_string("train");
    const std::string val_path = v.require_string("val");
    const TextMode text_mode = parse_text_mode_key(v, "text_mode", TextMode::TitleAbstract);
    const std::string separator = v.get_string("separator", "[SEP]");
    const std::size_t max_vocab = static_cast<std::size_t>(v.get_u64("max_vocab", 20000));
    const std::size_t min_freq = static_cast<std::size_t>(v.get_u64("min_freq", 1));
    const int max_len = v.get_int("max_len", 512);
    const std::size_t dim = static_cast<std::size_t>(v.get_u64("dim", 64));
    const std::size_t out_dim = static_cast<std::size_t>(v.get_u64("out_dim", dim));

    TrainConfig tc;
    tc.rng_seed = g.seed;
    tc.learning_rate = v.get_double("learning_rate", tc.learning_rate);
    tc.margin = v.get_double("margin", tc.margin);
    tc.epochs = v.get_int("epochs", tc.epochs);
    tc.batch_size = v.get_int("batch_size", tc.batch_size);
    tc.grad_accum = v.get_int("grad_accum", tc.grad_accum);
    tc.warmup_fraction = v.get_double("warmup_fraction", tc.warmup_fraction);
    tc.weight_decay = v.get_double("weight_decay", tc.weight_decay);
    tc.validate_every = v.get_int("validate_every", 50);
    tc.pooling = parse_pooling_key(v, "pooling", Pooling::Mean);

    const std::string resume_path = v.get_string("resume", "");
    const fs::path model_out = out_path(g, v.get_string("model_out", ""), "model.json");
    const fs::path history_out = out_path(g, v.get_string("history_out", ""), "history.tsv");
    const fs::path checkpoint_out =
        out_path(g, v.get_string("checkpoint_out", ""), "checkpoint.json");
    Corpus corpus = load_corpus_inputs(v);

    const auto train_triplets = load_triplets(train_path);
    const auto val_triplets = load_triplets(val_path);

    Tokenizer tok;
    TrainState state;
    bool resuming = false;
    if (!resume_path.empty()) {
        Checkpoint cp = load_checkpoint(resume_path);
        tok = std::move(cp.tokenizer);
        state = std::move(cp.state);
        resuming = true;
    } else {
        // Vocabulary source: every corpus text (the stand-in for a pretrained
        // vocabulary) or the training split's documents only.
        const std::string vocab_from = v.get_string("vocab_from", "corpus");
        std::vector<std::string> vocab_ids;
        if (vocab_from == "corpus") {
            for (const auto& [id, rec] : corpus.records()) vocab_ids.push_back(id);
        } else if (vocab_from == "train") {
            std::set<std::string> train_ids;
            for (const auto& t : train_triplets) {
                train_ids.insert(t.focal_id);
                train_ids.insert(t.positive_id);
                train_ids.insert(t.negative_id);
            }
            vocab_ids.assign(train_ids.begin(), train_ids.end());
        } else {
            throw ConfigError("config: train.vocab_from: expected 'corpus' or 'train'");
        }
        std::vector<std::string> texts;
        for (const auto& id : vocab_ids) {
            try {
                texts.push_back(compose_text(corpus, id, text_mode, separator));
            } catch (const DataError&) {
                // not composable in this text mode; skipped
            }
        }
        if (texts.empty()) throw DataError("train: no usable vocabulary documents");
        tok = build_vocab(texts, max_vocab, min_freq, max_len);
    }

    const DocCache train_cache = build_doc_cache(corpus, tok, train_triplets, text_mode, separator);
    const DocCache val_cache = build_doc_cache(corpus, tok, val_triplets, text_mode, separator);
    const auto train_rows = materialize(train_cache, train_triplets);
    const auto val_rows = materialize(val_cache, val_triplets);
    if (train_cache.dropped_triplets + val_cache.dropped_triplets > 0) {
        std::cerr << "train: dropped " << train_cache.dropped_triplets << " train and "
                  << val_cache.dropped_triplets << " validation triplets unusable in "
                  << to_string(text_mode) << " mode\n";
    }

    if (resuming) {
        train_continue(state, train_rows, val_rows, tc, tc.epochs);
    } else {
        const EncoderParams initial = init_encoder_params(tok.vocab_size(), dim, out_dim, g.seed);
        state = train(initial, train_rows, val_rows, tc);
    }

    Model model;
    model.tokenizer = tok;
    model.params = state.params;
    model.pooling = tc.pooling;
    model.text_mode = text_mode;
    model.separator = separator;
    fs::create_directories(g.out);
    save_model(model_out, model);
    save_history(history_out, state.history);
    save_checkpoint(checkpoint_out, state, tok, tc, text_mode);

    ojson summary;
    summary["train_rows"] = train_rows.size();
    summary["val_rows"] = val_rows.size();
    summary["dropped_train_triplets"] = train_cache.dropped_triplets;
    summary["dropped_val_triplets"] = val_cache.dropped_triplets;
    summary["unusable_ids"] = train_cache.unusable_ids.size() + val_cache.unusable_ids.size();
    summary["vocab_size"] = tok.vocab_size();
    summary["steps"] = state.step;
    if (!state.history.empty()) {
        summary["final_val_loss"] = state.history.back().val_loss;
        summary["final_val_accuracy"] = state.history.back().val_accuracy;
    }
    ojson outputs;
    outputs["model"] = model_out.string();
    outputs["history"] = history_out.string();
    outputs["checkpoint"] = checkpoint_out.string();
    write_manifest(g, "train", config, outputs, summary);
    return summary;
}

ojson run_embed(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "embed"), "embed.");
    v.check_allowed({"records", "citations", "model", "embeddings", "ids_from", "pooling",
                     "text_mode", "embeddings_out"});
    const std::string model_path = v.get_string("model", "");
    const std::string table_path = v.get_string("embeddings", "");
    if (model_path.empty() == table_path.empty())
        v.add_error("exactly one of 'model' or 'embeddings' is required");
    const std::string ids_from = v.get_string("ids_from", "corpus");
    const fs::path embeddings_out =
        out_path(g, v.get_string("embeddings_out", ""), "embeddings.txt");
    Corpus corpus = load_corpus_inputs(v);

    std::vector<std::string> ids;
    if (ids_from == "corpus") {
        for (const auto& [id, rec] : corpus.records()) ids.push_back(id);
    } else {
        for (const auto& sample : load_test_set(ids_from)) {
            ids.push_back(sample.focal_id);
            for (const auto& id : sample.candidate_ids()) ids.push_back(id);
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }

    std::unique_ptr<EmbeddingProvider> provider;
    if (!model_path.empty()) {
        Model model = load_model(model_path);
        const Pooling pooling = v.has("pooling")
                                    ? parse_pooling_key(v, "pooling", model.pooling)
                                    : model.pooling;
        const TextMode mode = v.has("text_mode")
                                  ? parse_text_mode_key(v, "text_mode", model.text_mode)
                                  : model.text_mode;
        v.throw_if_errors();
        provider = std::make_unique<ModelProvider>(corpus, model.tokenizer, model.params,
                                                   pooling, mode, model.separator);
    } else {
        v.throw_if_errors();
        provider = std::make_unique<TableProvider>(load_external_embeddings(table_path));
    }

    const EmbedResult result = embed_corpus(*provider, ids, g.threads);
    fs::create_directories(g.out);
    save_embeddings(embeddings_out, result.vectors);
    if (!result.missing.empty())
        std::cerr << "embed: " << result.missing.size() << " ids could not be embedded\n";

    ojson summary;
    summary["requested"] = ids.size();
    summary["embedded"] = result.vectors.size();
    summary["missing"] = result.missing;
    ojson outputs;
    outputs["embeddings"] = embeddings_out.string();
    write_manifest(g, "embed", config, outputs, summary);
    return summary;
}

namespace {

struct ProviderRow {
    std::string label;
    std::string pooling_label;
    std::unique_ptr<EmbeddingProvider> provider;  // null for bm25
    std::unique_ptr<Ranker> ranker;
    TextMode bm25_mode = TextMode::TitleAbstract;
    bool is_bm25 = false;
};

}  // namespace

ojson run_evaluate(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "evaluate"), "evaluate.");
    v.check_allowed({"records", "citations", "testset", "providers", "metric",
                     "drop_unrankable", "k1", "b", "report_out", "table_out"});
    const std::string testset_path = v.require_string("testset");
    const std::string metric_name = v.get_string("metric", "cosine");
    auto metric = parse_similarity_metric(metric_name);
    if (!metric) v.add_error("metric: expected 'cosine' or 'l2'");
    const bool drop_unrankable = v.get_bool("drop_unrankable", false);
    const double k1 = v.get_double("k1", 1.2);
    const double b = v.get_double("b", 0.75);
    const fs::path report_out = out_path(g, v.get_string("report_out", ""), "reports.json");
    const fs::path table_out = out_path(g, v.get_string("table_out", ""), "metrics.tsv");
    const ojson* providers_json = v.get_array("providers");
    if (!providers_json || providers_json->empty())
        v.add_error("providers: at least one provider is required");
    Corpus corpus = load_corpus_inputs(v);

    std::vector<ProviderRow> rows;
    std::size_t index = 0;
    for (const auto& p : *providers_json) {
        const std::string prefix = "providers[" + std::to_string(index++) + "].";
        if (!p.is_object()) {
            v.add_error(prefix + ": expected object");
            continue;
        }
        ConfigView pv(p, prefix);
        pv.check_allowed({"label", "kind", "path", "poolings", "pooling_label", "text_mode"});
        const std::string label = pv.require_string("label");
        const std::string kind = pv.get_string("kind", "model");
        if (kind == "model") {
            const std::string path = pv.require_string("path");
            if (!pv.has_errors()) {
                Model model = load_model(path);
                const TextMode mode = pv.has("text_mode")
                                          ? parse_text_mode_key(pv, "text_mode", model.text_mode)
                                          : model.text_mode;
                std::vector<Pooling> poolings = {Pooling::Mean, Pooling::First};
                if (const ojson* pl = pv.get_array("poolings")) {
                    poolings.clear();
                    for (const auto& e : *pl) {
                        auto parsed = e.is_string() ? parse_pooling(e.get<std::string>())
                                                    : std::nullopt;
                        if (parsed) {
                            poolings.push_back(*parsed);
                        } else {
                            pv.add_error("poolings: expected 'mean' or 'first'");
                        }
                    }
                }
                for (Pooling pooling : poolings) {
                    ProviderRow row;
                    row.label = label;
                    row.pooling_label = std::string(to_string(pooling));
                    row.provider = std::make_unique<ModelProvider>(
                        corpus, model.tokenizer, model.params, pooling, mode, model.separator);
                    row.ranker = std::make_unique<EmbeddingRanker>(*row.provider, *metric);
                    rows.push_back(std::move(row));
                }
            }
        } else if (kind == "table") {
            const std::string path = pv.require_string("path");
            if (!pv.has_errors()) {
                ProviderRow row;
                row.label = label;
                row.pooling_label = pv.get_string("pooling_label", "mean");
                row.provider = std::make_unique<TableProvider>(load_external_embeddings(path));
                row.ranker = std::make_unique<EmbeddingRanker>(*row.provider, *metric);
                rows.push_back(std::move(row));
            }
        } else if (kind == "bm25") {
            const TextMode mode =
                parse_text_mode_key(pv, "text_mode", TextMode::TitleAbstract);
            // BM25 has no pooling; the table mirrors one value into both columns.
            for (const char* pooling_label : {"first", "mean"}) {
                ProviderRow row;
                row.label = label;
                row.pooling_label = pooling_label;
                row.ranker = std::make_unique<Bm25Ranker>(corpus, mode, k1, b);
                row.is_bm25 = true;
                row.bm25_mode = mode;
                rows.push_back(std::move(row));
            }
        } else {
            pv.add_error("kind: expected 'model', 'table' or 'bm25'");
        }
        v.merge_errors_from(pv);
    }
    v.throw_if_errors();

    auto samples = load_test_set(testset_path);
    std::size_t dropped = 0;
    if (drop_unrankable) {
        auto can_rank = [&](const ProviderRow& row, const TestSample& s) {
            std::vector<std::string> all_ids = s.candidate_ids();
            all_ids.push_back(s.focal_id);
            if (row.is_bm25) {
                for (const auto& id : all_ids) {
                    try {
                        compose_text(corpus, id, row.bm25_mode);
                    } catch (const DataError&) {
                        return false;
                    }
                }
                return true;
            }
            for (const auto& id : all_ids)
                if (!row.provider->vector_for(id)) return false;
            return true;
        };
        std::vector<TestSample> kept;
        for (auto& s : samples) {
            bool ok = true;
            for (const auto& row : rows) {
                if (!can_rank(row, s)) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                kept.push_back(std::move(s));
            } else {
                ++dropped;
            }
        }
        samples = std::move(kept);
        if (dropped > 0)
            std::cerr << "evaluate: dropped " << dropped
                      << " samples not rankable by every provider\n";
    }
    if (samples.empty()) throw DataError("evaluate: no usable test samples");

    std::vector<MetricsReport> reports;
    for (const auto& row : rows)
        reports.push_back(
            evaluate_model(*row.ranker, samples, row.label, row.pooling_label, g.threads));

    fs::create_directories(g.out);
    save_reports(report_out, reports);
    write_metrics_table(table_out, reports);

    ojson summary;
    summary["samples"] = samples.size();
    summary["dropped_samples"] = dropped;
    ojson rows_json = ojson::array();
    for (const auto& r : reports) {
        ojson e;
        e["model"] = r.model;
        e["pooling"] = r.pooling;
        e["avg_rfr"] = r.avg_rfr;
        e["map"] = r.map;
        e["mrr10"] = r.mrr_at_10;
        rows_json.push_back(std::move(e));
    }
    summary["rows"] = std::move(rows_json);
    ojson outputs;
    outputs["report"] = report_out.string();
    outputs["table"] = table_out.string();
    write_manifest(g, "evaluate", config, outputs, summary);
    return summary;
}

namespace {

const MetricsReport& select_report(const std::vector<MetricsReport>& reports,
                                   const std::string& label, const std::string& pooling,
                                   const std::string& which) {
    if (label.empty() && pooling.empty()) {
        if (reports.empty()) throw DataError("compare: empty report file for " + which);
        return reports.front();
    }
    for (const auto& r : reports) {
        if ((label.empty() || r.model == label) && (pooling.empty() || r.pooling == pooling))
            return r;
    }
    throw DataError("compare: no report entry matching model='" + label + "' pooling='" +
                    pooling + "' for " + which);
}

}  // namespace

ojson run_compare(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "compare"), "compare.");
    v.check_allowed({"report_a", "model_a", "pooling_a", "report_b", "model_b", "pooling_b",
                     "metric", "resamples", "compare_out"});
    const std::string report_a_path = v.require_string("report_a");
    const std::string report_b_path = v.require_string("report_b");
    const std::string metric_name = v.get_string("metric", "ap");
    auto metric = parse_metric_selector(metric_name);
    if (!metric) v.add_error("metric: expected 'rfr', 'ap' or 'mrr10'");
    const std::size_t resamples = static_cast<std::size_t>(v.get_u64("resamples", 10000));
    const fs::path compare_out = out_path(g, v.get_string("compare_out", ""), "compare.json");
    const std::string model_a = v.get_string("model_a", "");
    const std::string pooling_a = v.get_string("pooling_a", "");
    const std::string model_b = v.get_string("model_b", "");
    const std::string pooling_b = v.get_string("pooling_b", "");
    v.throw_if_errors();

    const auto reports_a = load_reports(report_a_path);
    const auto reports_b = load_reports(report_b_path);
    const MetricsReport& a = select_report(reports_a, model_a, pooling_a, "report_a");
    const MetricsReport& b = select_report(reports_b, model_b, pooling_b, "report_b");

    const double p = paired_significance(a, b, *metric, resamples, g.seed);

    double mean_a = 0, mean_b = 0;
    const auto& va = *metric == MetricSelector::Rfr
                         ? a.sample_rfr
                         : (*metric == MetricSelector::Ap ? a.sample_ap : a.sample_mrr10);
    const auto& vb = *metric == MetricSelector::Rfr
                         ? b.sample_rfr
                         : (*metric == MetricSelector::Ap ? b.sample_ap : b.sample_mrr10);
    for (double x : va) mean_a += x;
    for (double x : vb) mean_b += x;
    mean_a /= static_cast<double>(va.size());
    mean_b /= static_cast<double>(vb.size());

    ojson summary;
    summary["model_a"] = a.model + "/" + a.pooling;
    summary["model_b"] = b.model + "/" + b.pooling;
    summary["metric"] = std::string(to_string(*metric));
    summary["mean_a"] = mean_a;
    summary["mean_b"] = mean_b;
    summary["observed_diff"] = mean_a - mean_b;
    summary["resamples"] = resamples;
    summary["p_value"] = p;

    fs::create_directories(g.out);
    std::ofstream out(compare_out);
    if (!out) throw DataError("cannot write '" + compare_out.string() + "'");
    out << summary.dump(2) << "\n";
    ojson outputs;
    outputs["compare"] = compare_out.string();
    write_manifest(g, "compare", config, outputs, summary);
    return summary;
}

ojson run_ecdf(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "ecdf"), "ecdf.");
    v.check_allowed({"reports", "ecdf_out"});
    const fs::path ecdf_out = out_path(g, v.get_string("ecdf_out", ""), "ecdf.tsv");
    std::vector<std::string> report_paths;
    if (const ojson* arr = v.get_array("reports")) {
        for (const auto& e : *arr) {
            if (e.is_string()) {
                report_paths.push_back(e.get<std::string>());
            } else {
                v.add_error("reports: entries must be paths");
            }
        }
    }
    if (report_paths.empty()) v.add_error("reports: at least one report file is required");
    v.throw_if_errors();

    std::vector<MetricsReport> all;
    for (const auto& path : report_paths) {
        auto reports = load_reports(path);
        for (auto& r : reports) all.push_back(std::move(r));
    }
    const auto rows = ecdf_export(all);
    fs::create_directories(g.out);
    write_ecdf_table(ecdf_out, rows);

    ojson summary;
    summary["models"] = all.size();
    summary["rows"] = rows.size();
    ojson outputs;
    outputs["ecdf"] = ecdf_out.string();
    write_manifest(g, "ecdf", config, outputs, summary);
    return summary;
}

ojson run_stats(const ojson& config) {
    const Globals g = parse_globals(config);
    ConfigView v(section_of(config, "stats"), "stats.");
    v.check_allowed({"triplets", "stats_out"});
    const std::string triplets_path = v.require_string("triplets");
    const fs::path stats_out = out_path(g, v.get_string("stats_out", ""), "stats.json");
    v.throw_if_errors();

    const auto triplets = load_triplets(triplets_path);
    const DatasetStats stats = dataset_stats(triplets);

    ojson summary;
    summary["rows"] = stats.rows;
    summary["unique_focals"] = stats.unique_focals;
    summary["unique_positives"] = stats.unique_positives;
    summary["unique_negatives"] = stats.unique_negatives;
    summary["positives_used_once_fraction"] = stats.positives_used_once_fraction;
    summary["easy_rows"] = stats.easy_rows;
    summary["hard_rows"] = stats.hard_rows;

    fs::create_directories(g.out);
    std::ofstream out(stats_out);
    if (!out) throw DataError("cannot write '" + stats_out.string() + "'");
    out << summary.dump(2) << "\n";
    ojson outputs;
    outputs["stats"] = stats_out.string();
    write_manifest(g, "stats", config, outputs, summary);
    return summary;
}

ojson run_command(const std::string& command, const ojson& config) {
    validate_top_level(config);
    if (command == "synth") return run_synth(config);
    if (command == "ingest") return run_ingest(config);
    if (command == "mine") return run_mine(config);
    if (command == "split") return run_split(config);
    if (command == "testset" || command == "build-testset") return run_testset(config);
    if (command == "train") return run_train(config);
    if (command == "embed") return run_embed(config);
    if (command == "evaluate") return run_evaluate(config);
    if (command == "compare") return run_compare(config);
    if (command == "ecdf") return run_ecdf(config);
    if (command == "stats") return run_stats(config);
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace patvec
