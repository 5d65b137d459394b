#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "patvec/corpus.hpp"
#include "patvec/encoder.hpp"
#include "patvec/miner.hpp"

namespace patvec {

struct TrainConfig {
    double learning_rate = 1e-2;   // desk-scale default
    double margin = 1.0;
    int epochs = 4;
    int batch_size = 4;
    int grad_accum = 8;
    double warmup_fraction = 0.10;
    double weight_decay = 0.01;
    int validate_every = 50;
    std::uint64_t rng_seed = 0;
    Pooling pooling = Pooling::Mean;
    // Adaptive-moment constants (decoupled weight decay).
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Training distance is fixed to L2 (the loss definition).
};

// Token-id views of one triplet's three documents.
struct TripletDocs {
    std::vector<int> focal;
    std::vector<int> positive;
    std::vector<int> negative;
};

struct HistoryEntry {
    long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainState {
    EncoderParams params;
    Matrix m_embedding, v_embedding;   // first/second moments
    Matrix m_projection, v_projection;
    std::vector<double> m_bias, v_bias;
    long step = 0;
    int epochs_done = 0;
    std::string rng_state;             // engine state for exact resume
    double loss_accum = 0.0;           // running train loss since last validation
    long loss_accum_count = 0;
    std::vector<HistoryEntry> history;
};

// Hinge loss max(||vf-vp|| - ||vf-vn|| + m, 0) with Euclidean norms.
double triplet_loss(std::span<const double> vf, std::span<const double> vp,
                    std::span<const double> vn, double margin);

struct Gradients {
    Matrix d_embedding;
    Matrix d_projection;
    std::vector<double> d_bias;
    double mean_loss = 0.0;
};

// Analytic gradients of the mean batch loss w.r.t. embedding, projection and
// bias. Inactive hinges (including exactly at the boundary) contribute zero;
// distance denominators are guarded at 1e-12.
Gradients loss_gradients(const EncoderParams& params, std::span<const TripletDocs> batch,
                         double margin, Pooling pooling);

struct ValidationResult {
    double mean_loss = 0.0;
    double accuracy = 0.0;  // fraction with ||vf-vp||2 strictly < ||vf-vn||2
};

ValidationResult validate(const EncoderParams& params, std::span<const TripletDocs> triplets,
                          double margin, Pooling pooling);

// Tokenized-document cache for a triplet list; composes text in `mode` and
// tokenizes once per distinct id. Ids that cannot compose (or tokenize to
// nothing) are recorded and their triplets dropped.
struct DocCache {
    std::unordered_map<std::string, std::vector<int>> docs;
    std::vector<std::string> unusable_ids;
    std::size_t dropped_triplets = 0;
};

DocCache build_doc_cache(const Corpus& corpus, const Tokenizer& tok,
                         const std::vector<Triplet>& triplets, TextMode mode,
                         std::string_view separator = "[SEP]");

std::vector<TripletDocs> materialize(const DocCache& cache,
                                     const std::vector<Triplet>& triplets);

// Fresh optimizer state (zero moments, seeded rng) around initial parameters.
TrainState init_train_state(const EncoderParams& initial);

// AdamW loop: per optimizer step, gradients accumulate over grad_accum
// micro-batches of batch_size; weight decay is applied to the parameters
// directly; the learning rate ramps linearly over the first warmup_fraction
// of the configured total steps and stays constant after. Rows reshuffle
// every epoch from the seeded generator. Validation runs at step 0, every
// validate_every steps, and at the final step. Deterministic in
// (data, config, seed).
TrainState train(const EncoderParams& initial, const std::vector<TripletDocs>& train_rows,
                 const std::vector<TripletDocs>& val_rows, const TrainConfig& config);

// Advances a (possibly checkpointed) state to `target_epochs` of the same
// configured schedule; a stop-and-resume sequence is bit-identical to an
// unbroken run with the same config.
void train_continue(TrainState& state, const std::vector<TripletDocs>& train_rows,
                    const std::vector<TripletDocs>& val_rows, const TrainConfig& config,
                    int target_epochs);

void save_history(const std::filesystem::path& path, const std::vector<HistoryEntry>& history);

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const Tokenizer& tok, const TrainConfig& config, TextMode mode);

struct Checkpoint {
    TrainState state;
    Tokenizer tokenizer;
    TrainConfig config;
    TextMode text_mode = TextMode::TitleAbstract;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace patvec
