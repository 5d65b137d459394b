// patvec — citation-mined patent triplets, a trainable text encoder, and
// rank-aware retrieval evaluation, one subcommand per pipeline stage.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "patvec/errors.hpp"
#include "patvec/pipeline.hpp"

namespace {

using patvec::ojson;

// One stderr line, machine parsable.
int fail(const char* category, const std::string& message, int code) {
    ojson j;
    j["error"]["category"] = category;
    j["error"]["message"] = message;
    std::cerr << j.dump() << "\n";
    return code;
}

// "key=value" with dotted paths into the command section; the value is parsed
// as JSON when it parses, else taken as a string.
void apply_set(ojson& section, const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos || eq == 0)
        throw patvec::ConfigError("--set expects key=value, got '" + expr + "'");
    const std::string path = expr.substr(0, eq);
    const std::string raw = expr.substr(eq + 1);
    ojson value;
    try {
        value = ojson::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    ojson* node = &section;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw patvec::ConfigError("--set has an empty key in '" + expr + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = ojson::object();
        node = &(*node)[key];
        start = dot + 1;
    }
}

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    std::vector<std::string> sets;
    ojson overrides = ojson::object();  // command-section overrides from flags
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--out", flags.out, "Output directory (default: out)");
    cmd->add_option("--seed", flags.seed, "Deterministic run seed")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--threads", flags.threads, "Worker threads for embedding/evaluation");
    cmd->add_option("--set", flags.sets,
                    "Override a section key, e.g. --set k=5 or --set criteria.min_xyi=2")
        ->take_all();
}

// Binds a string flag that lands in the command's config section.
void bind(CLI::App* cmd, CommonFlags& flags, const std::string& flag, const std::string& key,
          const std::string& help) {
    auto setter = [&flags, key](const std::string& value) { flags.overrides[key] = value; };
    cmd->add_option_function<std::string>(flag, setter, help);
}

int run(const std::string& command, const CommonFlags& flags) {
    ojson config = ojson::object();
    if (!flags.config_path.empty()) config = patvec::load_config_file(flags.config_path);
    const char* section = command == "build-testset" ? "testset" : command.c_str();
    if (!config.contains(section)) config[section] = ojson::object();
    config[section] = patvec::merge_config(config[section], flags.overrides);
    for (const auto& expr : flags.sets) apply_set(config[section], expr);
    if (flags.seed_set) config["seed"] = flags.seed;
    if (!flags.out.empty()) config["out"] = flags.out;
    if (flags.threads > 0) config["threads"] = flags.threads;

    const ojson summary = patvec::run_command(command, config);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patvec: patent triplet mining, encoder training and rank evaluation"};
    app.require_subcommand(1);

    struct Sub {
        std::string name;
        std::string help;
    };
    const std::vector<Sub> subs = {
        {"synth", "Generate a topic-clustered synthetic corpus"},
        {"ingest", "Load, validate and canonicalize records + citations"},
        {"mine", "Mine citation-informed training triplets"},
        {"split", "Grouped train/validation split of a triplet file"},
        {"build-testset", "Build the held-out 1+5+25 test set"},
        {"train", "Train the encoder with triplet margin loss"},
        {"embed", "Write embeddings for a model or external table"},
        {"evaluate", "Rank test samples and report RFR/MAP/MRR@10"},
        {"compare", "Paired bootstrap significance between two reports"},
        {"ecdf", "Export the RFR ECDF table"},
        {"stats", "Triplet dataset statistics"},
    };

    std::vector<CommonFlags> flag_blocks(subs.size());
    for (std::size_t i = 0; i < subs.size(); ++i) {
        CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
        CommonFlags& flags = flag_blocks[i];
        add_common(cmd, flags);
        const std::string& name = subs[i].name;
        if (name == "ingest" || name == "mine" || name == "build-testset" ||
            name == "train" || name == "embed" || name == "evaluate") {
            bind(cmd, flags, "--records", "records", "Records file (JSONL)");
            bind(cmd, flags, "--citations", "citations", "Citations file (JSONL)");
        }
        if (name == "mine")
            bind(cmd, flags, "--triplets-out", "triplets_out", "Triplet output path");
        if (name == "split") {
            bind(cmd, flags, "--triplets", "triplets", "Mined triplet file");
            bind(cmd, flags, "--train-out", "train_out", "Training split output");
            bind(cmd, flags, "--val-out", "val_out", "Validation split output");
        }
        if (name == "build-testset") {
            bind(cmd, flags, "--train", "train", "Training triplet file to stay disjoint from");
            bind(cmd, flags, "--testset-out", "testset_out", "Test set output path");
        }
        if (name == "train") {
            bind(cmd, flags, "--train", "train", "Training triplet file");
            bind(cmd, flags, "--val", "val", "Validation triplet file");
            bind(cmd, flags, "--model-out", "model_out", "Model output path");
            bind(cmd, flags, "--resume", "resume", "Checkpoint to resume from");
        }
        if (name == "embed") {
            bind(cmd, flags, "--model", "model", "Trained model file");
            bind(cmd, flags, "--embeddings", "embeddings", "External embedding table");
            bind(cmd, flags, "--ids-from", "ids_from", "'corpus' or a test-set file");
        }
        if (name == "evaluate")
            bind(cmd, flags, "--testset", "testset", "Test-set file (JSONL)");
        if (name == "compare") {
            bind(cmd, flags, "--report-a", "report_a", "First report file");
            bind(cmd, flags, "--report-b", "report_b", "Second report file");
            bind(cmd, flags, "--metric", "metric", "rfr, ap or mrr10");
        }
        if (name == "stats") bind(cmd, flags, "--triplets", "triplets", "Triplet file");
    }

    CLI11_PARSE(app, argc, argv);

    const CLI::App* chosen = app.get_subcommands().front();
    std::size_t idx = 0;
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i].name == chosen->get_name()) idx = i;

    try {
        return run(subs[idx].name, flag_blocks[idx]);
    } catch (const patvec::ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const patvec::DataError& e) {
        return fail("data", e.what(), 3);
    } catch (const patvec::NumericError& e) {
        return fail("numeric", e.what(), 4);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), 4);
    }
}
