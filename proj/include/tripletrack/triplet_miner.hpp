#pragma once

// Self-labelled triplet mining. Selective buffers are extended only by mutually
// nearest detections; a full buffer yields (oldest, newest) as anchor/positive,
// and the negative is the same-frame detection closest to the positive.

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tripletrack/descriptor.hpp"
#include "tripletrack/embedder.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/patch.hpp"
#include "tripletrack/random.hpp"
#include "tripletrack/triplet.hpp"

namespace tripletrack {

enum class PositiveMode { temporal_distant, adjacent };
enum class NegativeMode { hardest, random };

struct MinerConfig {
    int buffer_length = 19;  // L
    int batch_size = 20;     // N
    PositiveMode positive_mode = PositiveMode::temporal_distant;
    NegativeMode negative_mode = NegativeMode::hardest;
    std::uint64_t seed = 7;  // random negatives only

    void validate() const {
        if (buffer_length < 2) throw ConfigError("buffer length L must be >= 2");
        if (batch_size < 1) throw ConfigError("batch size N must be >= 1");
    }
};

struct SelectiveBuffer {
    std::deque<PatchPtr> patches;  // oldest first
    int created_frame = 0;

    std::size_t size() const noexcept { return patches.size(); }
    const PatchPtr& newest() const { return patches.back(); }
    const PatchPtr& oldest() const { return patches.front(); }
};

/// Index of the smallest value; ties go to the lowest index. Empty input gives npos.
inline std::size_t argmin_index(const std::vector<double>& v) {
    std::size_t best = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (best == static_cast<std::size_t>(-1) || v[i] < v[best]) best = i;
    return best;
}

/// dist[i][j]: detection i vs buffer head j. Returns (detection, buffer) pairs where
/// j is i's nearest buffer and i is j's nearest detection.
inline std::vector<std::pair<std::size_t, std::size_t>> mutual_nearest_pairs(
    const std::vector<std::vector<double>>& dist) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t Z = dist.size(), M = Z ? dist[0].size() : 0;
    if (!Z || !M) return out;
    std::vector<std::size_t> nearest_det(M);
    for (std::size_t j = 0; j < M; ++j) {
        std::vector<double> col(Z);
        for (std::size_t i = 0; i < Z; ++i) col[i] = dist[i][j];
        nearest_det[j] = argmin_index(col);
    }
    for (std::size_t i = 0; i < Z; ++i) {
        const std::size_t j = argmin_index(dist[i]);
        if (nearest_det[j] == i) out.emplace_back(i, j);
    }
    return out;
}

/// Unconstrained one-directional matching: every detection goes to its nearest buffer.
inline std::vector<std::pair<std::size_t, std::size_t>> nearest_buffer_pairs(
    const std::vector<std::vector<double>>& dist) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (!dist[i].empty()) out.emplace_back(i, argmin_index(dist[i]));
    return out;
}

/// Appends `incoming` to the FIFO pool and, once it holds at least n triplets,
/// removes and returns the n oldest as one batch.
inline std::optional<TripletBatch> accumulate(std::deque<Triplet>& pool, std::vector<Triplet> incoming, int n) {
    for (auto& t : incoming) pool.push_back(std::move(t));
    if (n < 1 || pool.size() < static_cast<std::size_t>(n)) return std::nullopt;
    TripletBatch batch;
    batch.triplets.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        batch.triplets.push_back(std::move(pool.front()));
        pool.pop_front();
    }
    return batch;
}

class TripletMiner {
public:
    explicit TripletMiner(MinerConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

    const MinerConfig& config() const noexcept { return cfg_; }
    const std::vector<SelectiveBuffer>& buffers() const noexcept { return buffers_; }

    /// Mutual-nearest extension of the buffers with this frame's detections.
    /// Buffers left unextended are deleted; unclaimed detections seed new buffers.
    template <Embedder E>
    void update_buffers(const FrameDetections& frame, E& embed) {
        if (frame.frame <= last_frame_)
            throw SequencingError("miner frame " + std::to_string(frame.frame) + " does not follow " +
                                  std::to_string(last_frame_));
        const std::size_t Z = frame.detections.size(), M = buffers_.size();
        std::vector<std::vector<double>> dist(Z, std::vector<double>(M, 0.0));
        if (Z && M) {
            std::vector<Descriptor> det;
            det.reserve(Z);
            for (const auto& d : frame.detections) det.push_back(embed(*d.patch));
            for (std::size_t j = 0; j < M; ++j) {
                const Descriptor head = embed(*buffers_[j].newest());
                for (std::size_t i = 0; i < Z; ++i) dist[i][j] = cosine_distance(det[i], head);
            }
        }

        std::vector<char> claimed(Z, 0), extended(M, 0);
        for (auto [i, j] : mutual_nearest_pairs(dist)) {
            auto& buf = buffers_[j];
            buf.patches.push_back(frame.detections[i].patch);
            while (buf.patches.size() > static_cast<std::size_t>(cfg_.buffer_length)) buf.patches.pop_front();
            claimed[i] = 1;
            extended[j] = 1;
        }
        std::vector<SelectiveBuffer> next;
        for (std::size_t j = 0; j < M; ++j)
            if (extended[j]) next.push_back(std::move(buffers_[j]));
        for (std::size_t i = 0; i < Z; ++i) {
            if (claimed[i]) continue;
            SelectiveBuffer b;
            b.created_frame = frame.frame;
            b.patches.push_back(frame.detections[i].patch);
            next.push_back(std::move(b));
        }
        buffers_ = std::move(next);
        last_frame_ = frame.frame;
    }

    /// One triplet per full buffer (exactly L patches) whose frame offers another detection.
    template <Embedder E>
    std::vector<Triplet> emit_triplets(const FrameDetections& frame, E& embed) {
        std::vector<Triplet> out;
        const std::size_t L = static_cast<std::size_t>(cfg_.buffer_length);
        for (const auto& buf : buffers_) {
            if (buf.size() != L) continue;
            const PatchPtr& positive = buf.newest();
            if (positive->source.frame != frame.frame) continue;
            const PatchPtr& anchor =
                cfg_.positive_mode == PositiveMode::temporal_distant ? buf.oldest() : buf.patches[buf.size() - 2];

            std::vector<std::size_t> candidates;
            for (std::size_t i = 0; i < frame.detections.size(); ++i)
                if (frame.detections[i].patch != positive) candidates.push_back(i);
            if (candidates.empty()) continue;

            const Descriptor d_pos = embed(*positive);
            std::size_t chosen = candidates.front();
            double chosen_dist = 0.0;
            if (cfg_.negative_mode == NegativeMode::hardest) {
                chosen_dist = std::numeric_limits<double>::infinity();
                for (std::size_t i : candidates) {
                    const double d = cosine_distance(d_pos, embed(*frame.detections[i].patch));
                    if (d < chosen_dist) {
                        chosen_dist = d;
                        chosen = i;
                    }
                }
            } else {
                chosen = candidates[rng_.index(candidates.size())];
                chosen_dist = cosine_distance(d_pos, embed(*frame.detections[chosen].patch));
            }
            Triplet t{anchor, positive, frame.detections[chosen].patch};
            t.anchor_positive_distance = cosine_distance(embed(*anchor), d_pos);
            t.positive_negative_distance = chosen_dist;
            out.push_back(std::move(t));
        }
        return out;
    }

private:
    MinerConfig cfg_;
    Rng rng_;
    std::vector<SelectiveBuffer> buffers_;
    int last_frame_ = std::numeric_limits<int>::min();
};

/// One JSON line describing the triplets emitted at `frame`.
inline void write_triplet_log_line(std::ostream& os, int frame, const std::vector<Triplet>& triplets) {
    auto ref = [](const PatchPtr& p) {
        return "{\"frame\":" + std::to_string(p->source.frame) + ",\"detection\":" + std::to_string(p->source.detection) + "}";
    };
    os << "{\"frame\":" << frame << ",\"triplets\":[";
    for (std::size_t k = 0; k < triplets.size(); ++k) {
        const auto& t = triplets[k];
        if (k) os << ',';
        os << "{\"anchor\":" << ref(t.anchor) << ",\"positive\":" << ref(t.positive)
           << ",\"negative\":" << ref(t.negative) << ",\"d_anchor_positive\":" << t.anchor_positive_distance
           << ",\"d_positive_negative\":" << t.positive_negative_distance << '}';
    }
    os << "]}\n";
}

}  // namespace tripletrack
