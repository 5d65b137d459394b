#include "patvec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"
#include "patvec/errors.hpp"
#include "patvec/rng.hpp"
#include "patvec/text.hpp"

namespace patvec {

using ojson = nlohmann::ordered_json;

double triplet_loss(std::span<const double> vf, std::span<const double> vp,
                    std::span<const double> vn, double margin) {
    if (vf.size() != vp.size() || vf.size() != vn.size())
        throw NumericError("triplet_loss: dimension mismatch");
    if (margin <= 0) throw ConfigError("triplet_loss: margin must be positive");
    const double term = l2_distance(vf, vp) - l2_distance(vf, vn) + margin;
    return term > 0.0 ? term : 0.0;
}

namespace {

constexpr double kDistanceFloor = 1e-12;

struct Forward {
    std::vector<double> pooled;  // pre-projection, dim
    std::vector<double> out;     // post-projection, out_dim
};

Forward forward_doc(const EncoderParams& params, const std::vector<int>& ids,
                    Pooling pooling) {
    Forward f;
    f.out = encode(params, ids, pooling);
    f.pooled = pool_tokens(params, ids, pooling);
    return f;
}

// dL/d(out) -> accumulate into parameter gradients for one document.
void backprop_doc(const EncoderParams& params, const std::vector<int>& ids,
                  Pooling pooling, const Forward& fwd, const std::vector<double>& g_out,
                  Gradients& grads) {
    const std::size_t dim = params.dim();
    const std::size_t out_dim = params.out_dim();
    for (std::size_t j = 0; j < out_dim; ++j) grads.d_bias[j] += g_out[j];
    std::vector<double> g_pooled(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        auto wrow = params.projection.row(i);
        auto grow = grads.d_projection.row(i);
        const double xi = fwd.pooled[i];
        double acc = 0.0;
        for (std::size_t j = 0; j < out_dim; ++j) {
            grow[j] += xi * g_out[j];
            acc += wrow[j] * g_out[j];
        }
        g_pooled[i] = acc;
    }
    if (pooling == Pooling::First) {
        auto row = grads.d_embedding.row(static_cast<std::size_t>(ids.front()));
        for (std::size_t i = 0; i < dim; ++i) row[i] += g_pooled[i];
        return;
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (int id : ids) {
        auto row = grads.d_embedding.row(static_cast<std::size_t>(id));
        for (std::size_t i = 0; i < dim; ++i) row[i] += inv * g_pooled[i];
    }
}

// Raw per-triplet gradient sums (no batch normalization); returns loss sum.
double accumulate_gradients(const EncoderParams& params, std::span<const TripletDocs> batch,
                            double margin, Pooling pooling, Gradients& grads) {
    double loss_sum = 0.0;
    const std::size_t out_dim = params.out_dim();
    for (const auto& t : batch) {
        const Forward f = forward_doc(params, t.focal, pooling);
        const Forward p = forward_doc(params, t.positive, pooling);
        const Forward n = forward_doc(params, t.negative, pooling);

        std::vector<double> diff_p(out_dim), diff_n(out_dim);
        for (std::size_t j = 0; j < out_dim; ++j) {
            diff_p[j] = f.out[j] - p.out[j];
            diff_n[j] = f.out[j] - n.out[j];
        }
        const double dist_p = l2_norm(diff_p);
        const double dist_n = l2_norm(diff_n);
        const double term = dist_p - dist_n + margin;
        if (!std::isfinite(term)) return std::numeric_limits<double>::quiet_NaN();
        if (!(term > 0.0)) continue;  // inactive hinge, zero subgradient
        loss_sum += term;

        const double inv_p = 1.0 / std::max(dist_p, kDistanceFloor);
        const double inv_n = 1.0 / std::max(dist_n, kDistanceFloor);
        std::vector<double> g_f(out_dim), g_p(out_dim), g_n(out_dim);
        for (std::size_t j = 0; j < out_dim; ++j) {
            const double up = diff_p[j] * inv_p;
            const double un = diff_n[j] * inv_n;
            g_f[j] = up - un;
            g_p[j] = -up;
            g_n[j] = un;
        }
        backprop_doc(params, t.focal, pooling, f, g_f, grads);
        backprop_doc(params, t.positive, pooling, p, g_p, grads);
        backprop_doc(params, t.negative, pooling, n, g_n, grads);
    }
    return loss_sum;
}

Gradients make_zero_gradients(const EncoderParams& params) {
    Gradients g;
    g.d_embedding = Matrix(params.embedding.rows, params.embedding.cols);
    g.d_projection = Matrix(params.projection.rows, params.projection.cols);
    g.d_bias.assign(params.out_dim(), 0.0);
    return g;
}

}  // namespace

Gradients loss_gradients(const EncoderParams& params, std::span<const TripletDocs> batch,
                         double margin, Pooling pooling) {
    if (batch.empty()) throw DataError("loss_gradients: empty batch");
    Gradients grads = make_zero_gradients(params);
    const double loss_sum = accumulate_gradients(params, batch, margin, pooling, grads);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& v : grads.d_embedding.data) v *= inv;
    for (auto& v : grads.d_projection.data) v *= inv;
    for (auto& v : grads.d_bias) v *= inv;
    grads.mean_loss = loss_sum * inv;
    return grads;
}

ValidationResult validate(const EncoderParams& params, std::span<const TripletDocs> triplets,
                          double margin, Pooling pooling) {
    if (triplets.empty()) throw DataError("validate: empty triplet set");
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& t : triplets) {
        const auto vf = encode(params, t.focal, pooling);
        const auto vp = encode(params, t.positive, pooling);
        const auto vn = encode(params, t.negative, pooling);
        const double dist_p = l2_distance(vf, vp);
        const double dist_n = l2_distance(vf, vn);
        const double term = dist_p - dist_n + margin;
        if (!std::isfinite(term)) {
            loss_sum = std::numeric_limits<double>::quiet_NaN();
            break;
        }
        loss_sum += term > 0.0 ? term : 0.0;
        if (dist_p < dist_n) ++correct;
    }
    const double n = static_cast<double>(triplets.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

DocCache build_doc_cache(const Corpus& corpus, const Tokenizer& tok,
                         const std::vector<Triplet>& triplets, TextMode mode,
                         std::string_view separator) {
    DocCache cache;
    std::set<std::string> ids;
    for (const auto& t : triplets) {
        ids.insert(t.focal_id);
        ids.insert(t.positive_id);
        ids.insert(t.negative_id);
    }
    for (const auto& id : ids) {
        try {
            auto token_ids = tokenize(tok, compose_text(corpus, id, mode, separator));
            if (token_ids.empty()) {
                cache.unusable_ids.push_back(id);
            } else {
                cache.docs.emplace(id, std::move(token_ids));
            }
        } catch (const DataError&) {
            cache.unusable_ids.push_back(id);
        }
    }
    for (const auto& t : triplets) {
        if (!cache.docs.count(t.focal_id) || !cache.docs.count(t.positive_id) ||
            !cache.docs.count(t.negative_id))
            ++cache.dropped_triplets;
    }
    return cache;
}

std::vector<TripletDocs> materialize(const DocCache& cache,
                                     const std::vector<Triplet>& triplets) {
    std::vector<TripletDocs> rows;
    rows.reserve(triplets.size());
    for (const auto& t : triplets) {
        auto f = cache.docs.find(t.focal_id);
        auto p = cache.docs.find(t.positive_id);
        auto n = cache.docs.find(t.negative_id);
        if (f == cache.docs.end() || p == cache.docs.end() || n == cache.docs.end())
            continue;  // dropped, counted by the cache
        rows.push_back({f->second, p->second, n->second});
    }
    return rows;
}

namespace {

// In-place AdamW over one parameter group. Decay multiplies the parameter
// first so a zero-gradient step contracts by exactly (1 - lr*wd).
void adamw_update(std::vector<double>& param, std::vector<double>& m, std::vector<double>& v,
                  const std::vector<double>& grad, const TrainConfig& cfg, double lr_t,
                  long step) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const double decay = 1.0 - lr_t * cfg.weight_decay;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        param[i] = param[i] * decay - lr_t * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

void check_config(const TrainConfig& config) {
    if (config.margin <= 0) throw ConfigError("train: margin must be > 0");
    if (config.warmup_fraction < 0 || config.warmup_fraction >= 1)
        throw ConfigError("train: warmup_fraction must be in [0, 1)");
    if (config.batch_size < 1 || config.grad_accum < 1)
        throw ConfigError("train: batch_size and grad_accum must be >= 1");
    if (config.learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
    if (config.weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (config.epochs < 0) throw ConfigError("train: epochs must be >= 0");
}

void run_epochs(TrainState& state, const std::vector<TripletDocs>& train_rows,
                const std::vector<TripletDocs>& val_rows, const TrainConfig& config,
                int target_epochs) {
    check_config(config);
    if (train_rows.empty()) throw DataError("train: empty training set");
    if (val_rows.empty()) throw DataError("train: empty validation set");
    if (target_epochs < state.epochs_done) throw ConfigError("train: target epochs in the past");
    if (target_epochs > config.epochs)
        throw ConfigError("train: target epochs beyond the configured schedule");

    const std::size_t rows = train_rows.size();
    const std::size_t per_step =
        static_cast<std::size_t>(config.batch_size) * static_cast<std::size_t>(config.grad_accum);
    const long steps_per_epoch = static_cast<long>((rows + per_step - 1) / per_step);
    // The warmup schedule and the end-of-run validation are pinned to the
    // configured epoch count, so a checkpointed run resumed later replays an
    // unbroken run exactly.
    const long total_steps = steps_per_epoch * config.epochs;
    const long warmup_steps =
        static_cast<long>(std::floor(config.warmup_fraction * static_cast<double>(total_steps)));

    Rng rng(config.rng_seed);
    if (!state.rng_state.empty()) rng.restore_state(state.rng_state);

    auto record_validation = [&](double train_loss) {
        const ValidationResult val =
            validate(state.params, val_rows, config.margin, config.pooling);
        state.history.push_back({state.step, train_loss, val.mean_loss, val.accuracy});
    };

    if (state.step == 0 && state.history.empty()) {
        const double initial_train_loss =
            validate(state.params, train_rows, config.margin, config.pooling).mean_loss;
        record_validation(initial_train_loss);
    }

    std::vector<std::size_t> order(rows);
    for (int epoch = state.epochs_done; epoch < target_epochs; ++epoch) {
        for (std::size_t i = 0; i < rows; ++i) order[i] = i;
        rng.shuffle(order);

        std::size_t cursor = 0;
        while (cursor < rows) {
            const std::size_t take = std::min(per_step, rows - cursor);
            Gradients grads = make_zero_gradients(state.params);
            double loss_sum = 0.0;
            std::vector<TripletDocs> micro;
            micro.reserve(static_cast<std::size_t>(config.batch_size));
            for (std::size_t off = 0; off < take; off += static_cast<std::size_t>(config.batch_size)) {
                micro.clear();
                const std::size_t hi = std::min(take, off + static_cast<std::size_t>(config.batch_size));
                for (std::size_t i = off; i < hi; ++i)
                    micro.push_back(train_rows[order[cursor + i]]);
                loss_sum +=
                    accumulate_gradients(state.params, micro, config.margin, config.pooling, grads);
            }
            const double inv = 1.0 / static_cast<double>(take);
            for (auto& v : grads.d_embedding.data) v *= inv;
            for (auto& v : grads.d_projection.data) v *= inv;
            for (auto& v : grads.d_bias) v *= inv;
            const double step_loss = loss_sum * inv;
            if (!std::isfinite(step_loss)) {
                throw NumericError("train: non-finite loss at step " +
                                   std::to_string(state.step + 1) + " (epoch " +
                                   std::to_string(epoch + 1) + ", rows " +
                                   std::to_string(cursor) + ".." +
                                   std::to_string(cursor + take) + ")");
            }

            ++state.step;
            const double lr_t =
                (warmup_steps > 0 && state.step <= warmup_steps)
                    ? config.learning_rate * static_cast<double>(state.step) /
                          static_cast<double>(warmup_steps)
                    : config.learning_rate;
            adamw_update(state.params.embedding.data, state.m_embedding.data,
                         state.v_embedding.data, grads.d_embedding.data, config, lr_t,
                         state.step);
            adamw_update(state.params.projection.data, state.m_projection.data,
                         state.v_projection.data, grads.d_projection.data, config, lr_t,
                         state.step);
            adamw_update(state.params.bias, state.m_bias, state.v_bias, grads.d_bias, config,
                         lr_t, state.step);

            state.loss_accum += step_loss;
            ++state.loss_accum_count;
            if (config.validate_every > 0 && state.step % config.validate_every == 0 &&
                state.step != total_steps) {
                record_validation(state.loss_accum / static_cast<double>(state.loss_accum_count));
                state.loss_accum = 0.0;
                state.loss_accum_count = 0;
            }
            cursor += take;
        }
        state.epochs_done = epoch + 1;
    }

    if (state.step == total_steps && total_steps > 0) {
        const double train_loss = state.loss_accum_count > 0
                                      ? state.loss_accum / static_cast<double>(state.loss_accum_count)
                                      : state.history.back().train_loss;
        record_validation(train_loss);
        state.loss_accum = 0.0;
        state.loss_accum_count = 0;
    }
    state.rng_state = rng.save_state();
}

}  // namespace

TrainState init_train_state(const EncoderParams& initial) {
    TrainState state;
    state.params = initial;
    state.m_embedding = Matrix(initial.embedding.rows, initial.embedding.cols);
    state.v_embedding = Matrix(initial.embedding.rows, initial.embedding.cols);
    state.m_projection = Matrix(initial.projection.rows, initial.projection.cols);
    state.v_projection = Matrix(initial.projection.rows, initial.projection.cols);
    state.m_bias.assign(initial.out_dim(), 0.0);
    state.v_bias.assign(initial.out_dim(), 0.0);
    return state;
}

TrainState train(const EncoderParams& initial, const std::vector<TripletDocs>& train_rows,
                 const std::vector<TripletDocs>& val_rows, const TrainConfig& config) {
    TrainState state = init_train_state(initial);
    run_epochs(state, train_rows, val_rows, config, config.epochs);
    return state;
}

void train_continue(TrainState& state, const std::vector<TripletDocs>& train_rows,
                    const std::vector<TripletDocs>& val_rows, const TrainConfig& config,
                    int target_epochs) {
    run_epochs(state, train_rows, val_rows, config, target_epochs);
}

void save_history(const std::filesystem::path& path,
                  const std::vector<HistoryEntry>& history) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "step\ttrain_loss\tval_loss\tval_accuracy\n";
    for (const auto& h : history) {
        out << h.step << '\t' << format_double(h.train_loss) << '\t'
            << format_double(h.val_loss) << '\t' << format_double(h.val_accuracy) << '\n';
    }
}

namespace {

ojson matrix_to_json(const Matrix& m) {
    ojson j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data"] = m.data;
    return j;
}

Matrix matrix_from_json(const ojson& j) {
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols)
        throw DataError("checkpoint: matrix shape mismatch");
    return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const Tokenizer& tok, const TrainConfig& config, TextMode mode) {
    ojson j;
    j["format"] = "patvec-checkpoint";
    j["version"] = 1;
    ojson cfg;
    cfg["learning_rate"] = config.learning_rate;
    cfg["margin"] = config.margin;
    cfg["epochs"] = config.epochs;
    cfg["batch_size"] = config.batch_size;
    cfg["grad_accum"] = config.grad_accum;
    cfg["warmup_fraction"] = config.warmup_fraction;
    cfg["weight_decay"] = config.weight_decay;
    cfg["validate_every"] = config.validate_every;
    cfg["rng_seed"] = config.rng_seed;
    cfg["pooling"] = std::string(to_string(config.pooling));
    cfg["beta1"] = config.beta1;
    cfg["beta2"] = config.beta2;
    cfg["epsilon"] = config.epsilon;
    j["config"] = std::move(cfg);
    j["text_mode"] = std::string(to_string(mode));
    ojson tokj;
    tokj["max_len"] = tok.max_len;
    tokj["vocab"] = tok.id_to_token;
    j["tokenizer"] = std::move(tokj);

    ojson st;
    st["step"] = state.step;
    st["epochs_done"] = state.epochs_done;
    st["rng_state"] = state.rng_state;
    st["loss_accum"] = state.loss_accum;
    st["loss_accum_count"] = state.loss_accum_count;
    ojson hist = ojson::array();
    for (const auto& h : state.history)
        hist.push_back({h.step, h.train_loss, h.val_loss, h.val_accuracy});
    st["history"] = std::move(hist);
    st["seed"] = state.params.rng_seed;
    st["embedding"] = matrix_to_json(state.params.embedding);
    st["projection"] = matrix_to_json(state.params.projection);
    st["bias"] = state.params.bias;
    st["m_embedding"] = matrix_to_json(state.m_embedding);
    st["v_embedding"] = matrix_to_json(state.v_embedding);
    st["m_projection"] = matrix_to_json(state.m_projection);
    st["v_projection"] = matrix_to_json(state.v_projection);
    st["m_bias"] = state.m_bias;
    st["v_bias"] = state.v_bias;
    j["state"] = std::move(st);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    ojson j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed checkpoint (" + std::string(e.what()) + ")");
    }
    if (!j.contains("format") || j["format"] != "patvec-checkpoint")
        throw DataError(path.string() + ": not a patvec checkpoint");
    if (j.at("version").get<int>() != 1)
        throw DataError(path.string() + ": unsupported checkpoint version");

    Checkpoint cp;
    const auto& cfg = j.at("config");
    cp.config.learning_rate = cfg.at("learning_rate").get<double>();
    cp.config.margin = cfg.at("margin").get<double>();
    cp.config.epochs = cfg.at("epochs").get<int>();
    cp.config.batch_size = cfg.at("batch_size").get<int>();
    cp.config.grad_accum = cfg.at("grad_accum").get<int>();
    cp.config.warmup_fraction = cfg.at("warmup_fraction").get<double>();
    cp.config.weight_decay = cfg.at("weight_decay").get<double>();
    cp.config.validate_every = cfg.at("validate_every").get<int>();
    cp.config.rng_seed = cfg.at("rng_seed").get<std::uint64_t>();
    auto pooling = parse_pooling(cfg.at("pooling").get<std::string>());
    if (!pooling) throw DataError(path.string() + ": unknown pooling");
    cp.config.pooling = *pooling;
    cp.config.beta1 = cfg.at("beta1").get<double>();
    cp.config.beta2 = cfg.at("beta2").get<double>();
    cp.config.epsilon = cfg.at("epsilon").get<double>();
    auto mode = parse_text_mode(j.at("text_mode").get<std::string>());
    if (!mode) throw DataError(path.string() + ": unknown text mode");
    cp.text_mode = *mode;

    cp.tokenizer.max_len = j.at("tokenizer").at("max_len").get<int>();
    cp.tokenizer.id_to_token =
        j.at("tokenizer").at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 1; i < cp.tokenizer.id_to_token.size(); ++i)
        cp.tokenizer.token_to_id.emplace(cp.tokenizer.id_to_token[i], static_cast<int>(i));

    const auto& st = j.at("state");
    cp.state.step = st.at("step").get<long>();
    cp.state.epochs_done = st.at("epochs_done").get<int>();
    cp.state.rng_state = st.at("rng_state").get<std::string>();
    cp.state.loss_accum = st.at("loss_accum").get<double>();
    cp.state.loss_accum_count = st.at("loss_accum_count").get<long>();
    for (const auto& h : st.at("history")) {
        cp.state.history.push_back({h.at(0).get<long>(), h.at(1).get<double>(),
                                    h.at(2).get<double>(), h.at(3).get<double>()});
    }
    cp.state.params.rng_seed = st.at("seed").get<std::uint64_t>();
    cp.state.params.embedding = matrix_from_json(st.at("embedding"));
    cp.state.params.projection = matrix_from_json(st.at("projection"));
    cp.state.params.bias = st.at("bias").get<std::vector<double>>();
    cp.state.m_embedding = matrix_from_json(st.at("m_embedding"));
    cp.state.v_embedding = matrix_from_json(st.at("v_embedding"));
    cp.state.m_projection = matrix_from_json(st.at("m_projection"));
    cp.state.v_projection = matrix_from_json(st.at("v_projection"));
    cp.state.m_bias = st.at("m_bias").get<std::vector<double>>();
    cp.state.v_bias = st.at("v_bias").get<std::vector<double>>();
    return cp;
}

}  // namespace patvec
