#pragma once

// Central finite-difference check of the analytic batch-loss gradient.
// The numeric side only runs forward passes, so it stays independent of the
// backward implementation it verifies.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tripletrack/embedding_model.hpp"
#include "tripletrack/random.hpp"

namespace tripletrack {

struct GradcheckConfig {
    ModelConfig model;
    int triplets = 20;
    double margin = 0.3;
    double epsilon = 1e-5;
    // Smallest step tried when a probe straddles a ReLU / max-pool / hinge switch.
    double min_epsilon = 1e-9;
    int coordinates_per_tensor = 3;
    std::uint64_t seed = 1;
    // Adds a bias to the analytic gradient; negative control for the harness.
    double corrupt_gradient = 0.0;
};

namespace detail {

/// Batch loss plus a fingerprint of every piecewise decision taken on the way
/// (ReLU signs, max-pool winners, hinge activity). Two evaluations with equal
/// fingerprints lie on the same smooth piece of the loss.
struct LossPiece {
    double loss = 0.0;
    std::uint64_t fingerprint = 1469598103934665603ull;
};

inline void mix(std::uint64_t& h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
}

inline LossPiece loss_piece(const ModelParameters& params, const TripletBatch& batch, double margin) {
    LossPiece piece;
    auto fingerprint = [&](const ForwardTrace& t) {
        const auto& layers = params.plan().layers;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].spec.kind == LayerKind::relu) {
                std::uint64_t word = 0;
                int bits = 0;
                for (double v : t.activations[i + 1]) {
                    word = (word << 1) | (v > 0.0 ? 1u : 0u);
                    if (++bits == 64) {
                        mix(piece.fingerprint, word);
                        word = 0;
                        bits = 0;
                    }
                }
                mix(piece.fingerprint, word);
            } else if (layers[i].spec.kind == LayerKind::maxpool) {
                for (std::uint32_t a : t.pool_argmax[i]) mix(piece.fingerprint, a);
            }
        }
    };
    double total = 0.0;
    for (const auto& tr : batch.triplets) {
        const ForwardTrace ta = forward_traced(params, *tr.anchor);
        const ForwardTrace tp = forward_traced(params, *tr.positive);
        const ForwardTrace tn = forward_traced(params, *tr.negative);
        fingerprint(ta);
        fingerprint(tp);
        fingerprint(tn);
        const Descriptor a(std::vector<double>(ta.output().begin(), ta.output().end()));
        const Descriptor p(std::vector<double>(tp.output().begin(), tp.output().end()));
        const Descriptor n(std::vector<double>(tn.output().begin(), tn.output().end()));
        const double arg = cosine_distance(a, p) + margin - cosine_distance(a, n);
        mix(piece.fingerprint, arg > 0.0 ? 1u : 0u);
        total += arg > 0.0 ? arg : 0.0;
    }
    piece.loss = batch.triplets.empty() ? 0.0 : total / static_cast<double>(batch.triplets.size());
    return piece;
}

}  // namespace detail

struct TensorCheck {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t probes = 0;
};

struct GradcheckReport {
    std::vector<TensorCheck> tensors;
    double max_relative_error = 0.0;
    std::size_t active_triplets = 0;

    bool passed(double tolerance) const { return max_relative_error <= tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// directions with vanishing gradient from turning rounding noise into a large ratio.
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-7) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

inline TripletBatch random_triplet_batch(const Shape3& shape, int count, Rng& rng) {
    auto make_patch = [&] {
        std::vector<double> px(shape.size());
        for (double& v : px) v = rng.uniform();
        return std::make_shared<const Patch>(shape, std::move(px));
    };
    TripletBatch batch;
    for (int i = 0; i < count; ++i) batch.triplets.push_back({make_patch(), make_patch(), make_patch()});
    return batch;
}

/// For every parameter tensor: one random-direction probe plus a few single-coordinate probes.
inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
    Rng rng(cfg.seed);
    ModelConfig mc = cfg.model;
    mc.seed = rng.next();
    const ModelParameters params = init_model(mc);
    const TripletBatch batch = random_triplet_batch(mc.input, cfg.triplets, rng);

    BatchEvaluation ev = evaluate_batch(params, batch, cfg.margin);
    std::vector<double> analytic = ev.gradient;
    if (cfg.corrupt_gradient != 0.0)
        for (double& g : analytic) g += cfg.corrupt_gradient;

    GradcheckReport report;
    report.active_triplets = ev.active;
    ModelParameters probe = params;
    auto theta = probe.mutable_values();
    const auto base = params.values();

    const std::uint64_t base_piece = detail::loss_piece(params, batch, cfg.margin).fingerprint;

    // Central difference with the configured step; the step shrinks tenfold while
    // either side lands on a different smooth piece than the base point.
    auto numeric_along = [&](const std::vector<std::pair<std::size_t, double>>& dir) {
        double eps = cfg.epsilon;
        for (;;) {
            for (auto [i, d] : dir) theta[i] = base[i] + eps * d;
            const auto up = detail::loss_piece(probe, batch, cfg.margin);
            for (auto [i, d] : dir) theta[i] = base[i] - eps * d;
            const auto down = detail::loss_piece(probe, batch, cfg.margin);
            for (auto [i, d] : dir) theta[i] = base[i];
            const bool smooth = up.fingerprint == base_piece && down.fingerprint == base_piece;
            if (smooth || eps / 10.0 < cfg.min_epsilon) return (up.loss - down.loss) / (2.0 * eps);
            eps /= 10.0;
        }
    };

    for (const TensorView& t : params.tensors()) {
        TensorCheck tc{t.name};
        auto record = [&](double a, double n) {
            tc.max_relative_error = std::max(tc.max_relative_error, gradient_relative_error(a, n));
            ++tc.probes;
        };

        std::vector<std::pair<std::size_t, double>> dir;
        double sq = 0.0;
        for (std::size_t k = 0; k < t.count; ++k) {
            const double d = rng.normal();
            dir.emplace_back(t.offset + k, d);
            sq += d * d;
        }
        const double inv = 1.0 / std::sqrt(sq);
        double a = 0.0;
        for (auto& [i, d] : dir) {
            d *= inv;
            a += analytic[i] * d;
        }
        record(a, numeric_along(dir));

        const std::size_t coords = std::min<std::size_t>(t.count, static_cast<std::size_t>(cfg.coordinates_per_tensor));
        for (std::size_t k = 0; k < coords; ++k) {
            const std::size_t i = t.offset + rng.index(t.count);
            record(analytic[i], numeric_along({{i, 1.0}}));
        }
        report.max_relative_error = std::max(report.max_relative_error, tc.max_relative_error);
        report.tensors.push_back(tc);
    }
    return report;
}

}  // namespace tripletrack
