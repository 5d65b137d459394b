#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace patvec {

using ojson = nlohmann::ordered_json;

// Every command takes the fully merged configuration tree (global keys plus
// its own section), runs exactly one module operation, writes its artifacts
// and a manifest under <out>/, and returns a summary. The manifest embeds the
// resolved config, so it can be replayed directly via --config.

ojson run_synth(const ojson& config);
ojson run_ingest(const ojson& config);
ojson run_mine(const ojson& config);
ojson run_split(const ojson& config);
ojson run_testset(const ojson& config);
ojson run_train(const ojson& config);
ojson run_embed(const ojson& config);
ojson run_evaluate(const ojson& config);
ojson run_compare(const ojson& config);
ojson run_ecdf(const ojson& config);
ojson run_stats(const ojson& config);

// Dispatch by subcommand name (the names of the CLI surface).
ojson run_command(const std::string& command, const ojson& config);

ojson load_config_file(const std::filesystem::path& path);

// Right-biased deep merge of JSON objects; arrays and scalars replace.
ojson merge_config(ojson base, const ojson& overrides);

// Top-level validation shared by all commands (unknown keys, global types).
void validate_top_level(const ojson& config);

}  // namespace patvec
