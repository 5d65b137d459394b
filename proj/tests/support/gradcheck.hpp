#pragma once

// Central finite-difference oracle for the triplet-loss gradients. The scalar
// loss goes through the public forward path only (encode + triplet_loss).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "patvec/encoder.hpp"
#include "patvec/rng.hpp"
#include "patvec/trainer.hpp"

namespace patvec::gradcheck {

inline std::vector<int> random_doc(Rng& rng, std::size_t vocab, int max_tokens) {
    const int n = static_cast<int>(rng.uniform_int(1, max_tokens));
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.uniform_u64(vocab)));
    return ids;
}

// Finite differences are only trustworthy away from the hinge kink and from
// the sqrt singularity at zero distance.
inline bool fd_friendly(const EncoderParams& params, const TripletDocs& t, double margin,
                        Pooling pooling) {
    const auto vf = encode(params, t.focal, pooling);
    const auto vp = encode(params, t.positive, pooling);
    const auto vn = encode(params, t.negative, pooling);
    const double dp = l2_distance(vf, vp);
    const double dn = l2_distance(vf, vn);
    return dp > 2e-2 && dn > 2e-2 && std::abs(dp - dn + margin) > 1e-3;
}

inline TripletDocs fd_friendly_triplet(Rng& rng, const EncoderParams& params,
                                       std::size_t vocab, int max_tokens, double margin,
                                       Pooling pooling) {
    for (int tries = 0; tries < 500; ++tries) {
        TripletDocs t{random_doc(rng, vocab, max_tokens), random_doc(rng, vocab, max_tokens),
                      random_doc(rng, vocab, max_tokens)};
        if (fd_friendly(params, t, margin, pooling)) return t;
    }
    throw std::runtime_error("gradcheck: could not build an fd-friendly triplet");
}

inline EncoderParams random_params(Rng& rng, std::size_t vocab, std::size_t dim,
                                   std::size_t out_dim) {
    EncoderParams p = init_encoder_params(vocab, dim, out_dim, rng.next_u64());
    for (auto& v : p.projection.data) v = rng.uniform_real(-0.5, 0.5);
    for (auto& v : p.bias) v = rng.uniform_real(-0.1, 0.1);
    return p;
}

inline double batch_loss(const EncoderParams& params, const std::vector<TripletDocs>& batch,
                         double margin, Pooling pooling) {
    double sum = 0.0;
    for (const auto& t : batch) {
        const auto vf = encode(params, t.focal, pooling);
        const auto vp = encode(params, t.positive, pooling);
        const auto vn = encode(params, t.negative, pooling);
        sum += triplet_loss(vf, vp, vn, margin);
    }
    return sum / static_cast<double>(batch.size());
}

// Worst relative error between analytic and central-difference gradients,
// with differences below the 1e-8 absolute floor ignored.
inline double worst_relative_error(EncoderParams params, const std::vector<TripletDocs>& batch,
                                   double margin, Pooling pooling) {
    const Gradients grads = loss_gradients(params, batch, margin, pooling);
    const double h = 1e-5;
    double worst = 0.0;
    auto check_group = [&](std::vector<double>& values, const std::vector<double>& analytic) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = batch_loss(params, batch, margin, pooling);
            values[i] = saved - h;
            const double down = batch_loss(params, batch, margin, pooling);
            values[i] = saved;
            const double fd = (up - down) / (2 * h);
            const double diff = std::abs(analytic[i] - fd);
            if (diff <= 1e-8) continue;  // absolute floor
            worst = std::max(worst, diff / std::max(std::abs(analytic[i]), std::abs(fd)));
        }
    };
    check_group(params.embedding.data, grads.d_embedding.data);
    check_group(params.projection.data, grads.d_projection.data);
    check_group(params.bias, grads.d_bias);
    return worst;
}

}  // namespace patvec::gradcheck
