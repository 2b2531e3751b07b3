#pragma once

// Frame-to-frame tracking by appearance only: each detection is matched to the
// most recent patch of an active track by gated Hungarian assignment on cosine
// distance. No motion model and no spatial gating.

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "tripletrack/assignment.hpp"
#include "tripletrack/descriptor.hpp"
#include "tripletrack/embedder.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/mot_io.hpp"
#include "tripletrack/patch.hpp"

namespace tripletrack {

struct TrackerConfig {
    double gate_threshold = 0.59;
    int max_frames_unextended = 1;  // deregister once a track misses more frames than this
    int min_track_length = 12;      // deregistered tracks shorter than this are erased
    bool keep_active_short_tracks = true;  // at export, active tracks survive regardless of length

    void validate() const {
        if (!(gate_threshold > 0.0)) throw ConfigError("gate_threshold must be > 0");
        if (max_frames_unextended < 1) throw ConfigError("max_frames_unextended must be >= 1");
        if (min_track_length < 1) throw ConfigError("min_track_length must be >= 1");
    }
};

enum class TrackState { active, deregistered };

struct Observation {
    int frame = 0;
    BBox box;
    double confidence = 1.0;
};

/// One identity. Keeps the full observation history and only the latest patch,
/// since matching uses nothing older.
struct Track {
    int id = 0;
    std::vector<Observation> observations;
    PatchPtr head;
    int start_frame = 0;
    int last_extended = 0;
    TrackState state = TrackState::active;

    std::size_t length() const noexcept { return observations.size(); }
};

struct FrameAssignment {
    int detection = 0;
    int track_id = 0;
    bool new_track = false;

    friend bool operator==(const FrameAssignment&, const FrameAssignment&) = default;
};

class Tracker {
public:
    explicit Tracker(TrackerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    const TrackerConfig& config() const noexcept { return cfg_; }
    int last_frame() const noexcept { return last_frame_; }
    const std::vector<Track>& active_tracks() const noexcept { return active_; }
    const std::vector<Track>& finished_tracks() const noexcept { return finished_; }
    std::size_t erased_count() const noexcept { return erased_; }

    /// Advances by one frame. Returns one entry per detection, in detection order.
    template <Embedder E>
    std::vector<FrameAssignment> step(const FrameDetections& frame, E& embed) {
        if (frame.frame <= last_frame_)
            throw SequencingError("frame " + std::to_string(frame.frame) + " does not follow frame " +
                                  std::to_string(last_frame_));
        const int t = frame.frame;
        const std::size_t Z = frame.detections.size(), M = active_.size();

        std::vector<Descriptor> det_desc;
        det_desc.reserve(Z);
        for (const auto& d : frame.detections) det_desc.push_back(embed(*d.patch));

        CostMatrix costs(Z, M);
        if (Z && M) {
            for (std::size_t j = 0; j < M; ++j) {
                const Descriptor head = embed(*active_[j].head);
                for (std::size_t i = 0; i < Z; ++i) costs(i, j) = cosine_distance(det_desc[i], head);
            }
        }
        const Assignment match = solve_gated(costs, cfg_.gate_threshold);

        std::vector<FrameAssignment> out(Z);
        for (auto [i, j] : match.pairs) {
            extend(active_[j], frame, i);
            out[i] = {static_cast<int>(i), active_[j].id, false};
        }
        for (std::size_t i : match.unmatched_rows) {
            Track tr;
            tr.id = next_id_++;
            tr.start_frame = t;
            extend(tr, frame, i);
            active_.push_back(std::move(tr));
            out[i] = {static_cast<int>(i), active_.back().id, true};
        }
        retire(t);
        last_frame_ = t;
        return out;
    }

    std::vector<FrameAssignment> step(const FrameDetections& frame, const ModelParameters& model) {
        ModelEmbedder e(model);
        return step(frame, e);
    }

    /// Surviving tracks as per-frame records sorted by frame, then id.
    std::vector<TrackRecord> export_tracks() const {
        std::vector<TrackRecord> out;
        auto emit = [&](const Track& tr) {
            for (const auto& o : tr.observations) out.push_back({o.frame, tr.id, o.box});
        };
        for (const auto& tr : finished_) emit(tr);
        for (const auto& tr : active_)
            if (cfg_.keep_active_short_tracks || tr.length() >= static_cast<std::size_t>(cfg_.min_track_length)) emit(tr);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static void extend(Track& tr, const FrameDetections& frame, std::size_t i) {
        const Detection& d = frame.detections[i];
        tr.observations.push_back({frame.frame, d.bbox(), d.confidence});
        tr.head = d.patch;
        tr.last_extended = frame.frame;
    }

    void retire(int t) {
        std::vector<Track> still;
        still.reserve(active_.size());
        for (auto& tr : active_) {
            if (t - tr.last_extended <= cfg_.max_frames_unextended) {
                still.push_back(std::move(tr));
                continue;
            }
            tr.state = TrackState::deregistered;
            tr.head.reset();
            if (tr.length() < static_cast<std::size_t>(cfg_.min_track_length))
                ++erased_;
            else
                finished_.push_back(std::move(tr));
        }
        active_ = std::move(still);
    }

    TrackerConfig cfg_;
    std::vector<Track> active_;
    std::vector<Track> finished_;
    std::size_t erased_ = 0;
    int next_id_ = 0;
    int last_frame_ = std::numeric_limits<int>::min();
};

}  // namespace tripletrack
