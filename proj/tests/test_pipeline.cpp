#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "patvec/errors.hpp"
#include "patvec/pipeline.hpp"

using namespace patvec;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / ("patvec_pipe_" + std::to_string(::getpid()) +
                                                "_" + std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small but mineable synthetic corpus.
ojson synth_config(const fs::path& out, std::uint64_t seed) {
    ojson cfg;
    cfg["seed"] = seed;
    cfg["out"] = out.string();
    cfg["synth"]["n_topics"] = 4;
    cfg["synth"]["docs_per_topic"] = 120;
    cfg["synth"]["cites_min"] = 8;
    cfg["synth"]["cites_max"] = 12;
    cfg["synth"]["date_start"] = "2002-01-01";
    cfg["synth"]["date_end"] = "2012-12-31";
    return cfg;
}

struct Artifacts {
    fs::path dir;
    ojson base;
};

Artifacts make_corpus(std::uint64_t seed = 11) {
    Artifacts a;
    a.dir = temp_dir();
    a.base = synth_config(a.dir, seed);
    run_synth(a.base);
    return a;
}

const char* cli_path() {
    const char* p = std::getenv("PATVEC_CLI");
    return p ? p : nullptr;
}

int run_cli(const std::string& args) {
    REQUIRE(cli_path() != nullptr);
    const std::string cmd = std::string(cli_path()) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("ingest canonicalizes and round trips byte-identically") {
    Artifacts a = make_corpus();
    ojson cfg = a.base;
    cfg["ingest"]["records"] = (a.dir / "records.jsonl").string();
    cfg["ingest"]["citations"] = (a.dir / "citations.jsonl").string();
    const ojson summary = run_ingest(cfg);
    CHECK(summary["records"].get<std::size_t>() == 480);
    CHECK(summary["dangling_edges"].get<std::size_t>() == 0);
    // ingest of its own output reproduces it byte for byte
    ojson cfg2 = a.base;
    cfg2["out"] = (a.dir / "second").string();
    cfg2["ingest"]["records"] = (a.dir / "corpus.records.jsonl").string();
    cfg2["ingest"]["citations"] = (a.dir / "corpus.citations.jsonl").string();
    run_ingest(cfg2);
    CHECK(slurp(a.dir / "corpus.records.jsonl") ==
          slurp(a.dir / "second" / "corpus.records.jsonl"));
    CHECK(slurp(a.dir / "corpus.citations.jsonl") ==
          slurp(a.dir / "second" / "corpus.citations.jsonl"));
}

TEST_CASE("mine, split, stats and testset wire together") {
    Artifacts a = make_corpus();
    ojson cfg = a.base;
    cfg["mine"]["records"] = (a.dir / "records.jsonl").string();
    cfg["mine"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["mine"]["max_focals"] = 15;
    const ojson mined = run_mine(cfg);
    CHECK(mined["rows"].get<std::size_t>() == 75);

    cfg["split"]["triplets"] = (a.dir / "triplets.jsonl").string();
    const ojson split = run_split(cfg);
    CHECK(split["train_focals"].get<std::size_t>() +
              split["val_focals"].get<std::size_t>() ==
          15);

    cfg["stats"]["triplets"] = (a.dir / "train.jsonl").string();
    const ojson stats = run_stats(cfg);
    CHECK(stats["rows"] == split["train_rows"]);

    cfg["testset"]["records"] = (a.dir / "records.jsonl").string();
    cfg["testset"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["testset"]["train"] = (a.dir / "triplets.jsonl").string();
    cfg["testset"]["n"] = 5;
    const ojson testset = run_testset(cfg);
    CHECK(testset["emitted"].get<std::size_t>() >= 1);
    CHECK(fs::exists(a.dir / "manifest.mine.json"));
    CHECK(fs::exists(a.dir / "manifest.testset.json"));
}

TEST_CASE("train, embed and evaluate produce reports end to end") {
    Artifacts a = make_corpus(13);
    ojson cfg = a.base;
    cfg["mine"]["records"] = (a.dir / "records.jsonl").string();
    cfg["mine"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["mine"]["max_focals"] = 12;
    run_mine(cfg);
    cfg["split"]["triplets"] = (a.dir / "triplets.jsonl").string();
    run_split(cfg);
    cfg["testset"]["records"] = (a.dir / "records.jsonl").string();
    cfg["testset"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["testset"]["train"] = (a.dir / "triplets.jsonl").string();
    cfg["testset"]["n"] = 5;
    const ojson testset = run_testset(cfg);
    REQUIRE(testset["emitted"].get<std::size_t>() >= 1);

    cfg["train"]["records"] = (a.dir / "records.jsonl").string();
    cfg["train"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["train"]["train"] = (a.dir / "train.jsonl").string();
    cfg["train"]["val"] = (a.dir / "validation.jsonl").string();
    cfg["train"]["dim"] = 16;
    cfg["train"]["epochs"] = 2;
    cfg["train"]["grad_accum"] = 2;
    cfg["train"]["learning_rate"] = 3e-4;
    const ojson trained = run_train(cfg);
    CHECK(trained["steps"].get<long>() > 0);
    CHECK(fs::exists(a.dir / "model.json"));
    CHECK(fs::exists(a.dir / "history.tsv"));
    CHECK(fs::exists(a.dir / "checkpoint.json"));

    cfg["embed"]["records"] = (a.dir / "records.jsonl").string();
    cfg["embed"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["embed"]["model"] = (a.dir / "model.json").string();
    cfg["embed"]["ids_from"] = (a.dir / "testset.jsonl").string();
    const ojson embedded = run_embed(cfg);
    CHECK(embedded["embedded"].get<std::size_t>() > 0);

    cfg["evaluate"]["records"] = (a.dir / "records.jsonl").string();
    cfg["evaluate"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["evaluate"]["testset"] = (a.dir / "testset.jsonl").string();
    ojson providers = ojson::array();
    ojson model_provider;
    model_provider["label"] = "desk";
    model_provider["kind"] = "model";
    model_provider["path"] = (a.dir / "model.json").string();
    providers.push_back(model_provider);
    ojson table_provider;
    table_provider["label"] = "precomputed";
    table_provider["kind"] = "table";
    table_provider["path"] = (a.dir / "embeddings.txt").string();
    providers.push_back(table_provider);
    ojson bm25;
    bm25["label"] = "bm25";
    bm25["kind"] = "bm25";
    providers.push_back(bm25);
    cfg["evaluate"]["providers"] = providers;
    const ojson evaluated = run_evaluate(cfg);
    // model rows (mean+first) + table row + bm25 rows (both pooling columns)
    CHECK(evaluated["rows"].size() == 5);
    CHECK(fs::exists(a.dir / "reports.json"));
    CHECK(fs::exists(a.dir / "metrics.tsv"));

    cfg["compare"]["report_a"] = (a.dir / "reports.json").string();
    cfg["compare"]["report_b"] = (a.dir / "reports.json").string();
    cfg["compare"]["model_a"] = "desk";
    cfg["compare"]["pooling_a"] = "mean";
    cfg["compare"]["model_b"] = "bm25";
    cfg["compare"]["pooling_b"] = "mean";
    cfg["compare"]["resamples"] = 500;
    const ojson compared = run_compare(cfg);
    CHECK(compared["p_value"].get<double>() > 0.0);
    CHECK(compared["p_value"].get<double>() <= 1.0);

    cfg["ecdf"]["reports"] = ojson::array({(a.dir / "reports.json").string()});
    const ojson ecdf = run_ecdf(cfg);
    CHECK(ecdf["rows"].get<std::size_t>() > 0);
    CHECK(fs::exists(a.dir / "ecdf.tsv"));
}

TEST_CASE("evaluate with a missing embedding id names the id") {
    Artifacts a = make_corpus(17);
    ojson cfg = a.base;
    cfg["mine"]["records"] = (a.dir / "records.jsonl").string();
    cfg["mine"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["mine"]["max_focals"] = 12;
    run_mine(cfg);
    cfg["testset"]["records"] = (a.dir / "records.jsonl").string();
    cfg["testset"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["testset"]["train"] = (a.dir / "triplets.jsonl").string();
    cfg["testset"]["n"] = 2;
    run_testset(cfg);
    // a table with a single unrelated id cannot cover the test set
    std::ofstream(a.dir / "tiny.txt") << "NOBODY 1 2 3\n";
    cfg["evaluate"]["records"] = (a.dir / "records.jsonl").string();
    cfg["evaluate"]["citations"] = (a.dir / "citations.jsonl").string();
    cfg["evaluate"]["testset"] = (a.dir / "testset.jsonl").string();
    ojson provider;
    provider["label"] = "tiny";
    provider["kind"] = "table";
    provider["path"] = (a.dir / "tiny.txt").string();
    cfg["evaluate"]["providers"] = ojson::array({provider});
    try {
        run_evaluate(cfg);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("missing embedding") != std::string::npos);
    }
}

TEST_CASE("config validation lists every bad key at once") {
    ojson cfg;
    cfg["out"] = temp_dir().string();
    cfg["mine"]["bogus_key"] = 1;
    cfg["mine"]["k"] = "five";  // wrong type
    cfg["mine"]["criteria"]["min_xyi"] = "two";
    try {
        run_mine(cfg);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bogus_key") != std::string::npos);
        CHECK(msg.find("k:") != std::string::npos);
        CHECK(msg.find("min_xyi") != std::string::npos);
    }
}

TEST_CASE("manifests replay as config files") {
    Artifacts a = make_corpus(19);
    // replay the synth manifest into a fresh out dir; artifacts must match
    ojson manifest = load_config_file(a.dir / "manifest.synth.json");
    const fs::path replay_dir = temp_dir();
    manifest["out"] = replay_dir.string();
    manifest["synth"]["records_out"] = (replay_dir / "records.jsonl").string();
    manifest["synth"]["citations_out"] = (replay_dir / "citations.jsonl").string();
    run_command("synth", manifest);
    CHECK(slurp(a.dir / "records.jsonl") == slurp(replay_dir / "records.jsonl"));
    CHECK(slurp(a.dir / "citations.jsonl") == slurp(replay_dir / "citations.jsonl"));
}

TEST_CASE("CLI exit codes follow the error taxonomy") {
    if (!cli_path()) {
        MESSAGE("PATVEC_CLI not set; skipping CLI executions");
        return;
    }
    const fs::path dir = temp_dir();
    SUBCASE("successful synth exits 0") {
        CHECK(run_cli("synth --out " + (dir / "ok").string() +
                      " --seed 3 --set n_topics=2 --set docs_per_topic=40") == 0);
    }
    SUBCASE("unknown config key exits 2") {
        CHECK(run_cli("synth --out " + (dir / "bad").string() + " --set nonsense_key=1") == 2);
    }
    SUBCASE("missing input file exits 3") {
        CHECK(run_cli("ingest --out " + (dir / "gone").string() +
                      " --records /nonexistent/r.jsonl --citations /nonexistent/c.jsonl") == 3);
    }
}

TEST_CASE("CLI stages rerun byte-identically for a fixed seed") {
    if (!cli_path()) {
        MESSAGE("PATVEC_CLI not set; skipping CLI executions");
        return;
    }
    // reruns with identical config must overwrite every artifact byte-for-byte
    const fs::path out = temp_dir() / "run";
    auto synth_mine = [&] {
        REQUIRE(run_cli("synth --out " + out.string() +
                        " --seed 21 --set n_topics=3 --set docs_per_topic=60 "
                        "--set cites_min=6 --set cites_max=9") == 0);
        REQUIRE(run_cli("mine --out " + out.string() + " --seed 21 --records " +
                        (out / "records.jsonl").string() + " --citations " +
                        (out / "citations.jsonl").string() + " --set max_focals=15") == 0);
    };
    synth_mine();
    const std::string records = slurp(out / "records.jsonl");
    const std::string citations = slurp(out / "citations.jsonl");
    const std::string triplets = slurp(out / "triplets.jsonl");
    const std::string manifest = slurp(out / "manifest.mine.json");
    synth_mine();
    CHECK(records == slurp(out / "records.jsonl"));
    CHECK(citations == slurp(out / "citations.jsonl"));
    CHECK(triplets == slurp(out / "triplets.jsonl"));
    CHECK(manifest == slurp(out / "manifest.mine.json"));
}
