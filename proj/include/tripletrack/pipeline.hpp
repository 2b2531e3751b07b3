#pragma once

// Tracking and descriptor refinement over one sequence. The two share nothing
// but the model: every frame is tracked under one immutable snapshot, and a
// batch trained after that frame becomes visible from the next frame on.

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tripletrack/embedder.hpp"
#include "tripletrack/embedding_model.hpp"
#include "tripletrack/errors.hpp"
#include "tripletrack/mot_io.hpp"
#include "tripletrack/tracker.hpp"
#include "tripletrack/triplet_miner.hpp"

namespace tripletrack {

enum class Mode { delta, frozen, easy_positives, random_negatives };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::delta: return "delta";
        case Mode::frozen: return "frozen";
        case Mode::easy_positives: return "easy_positives";
        case Mode::random_negatives: return "random_negatives";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "delta") return Mode::delta;
    if (s == "frozen") return Mode::frozen;
    if (s == "easy_positives") return Mode::easy_positives;
    if (s == "random_negatives") return Mode::random_negatives;
    throw ConfigError("unknown mode '" + s + "'");
}

inline const std::vector<Mode>& all_modes() {
    static const std::vector<Mode> modes{Mode::delta, Mode::frozen, Mode::easy_positives, Mode::random_negatives};
    return modes;
}

struct PipelineConfig {
    TrackerConfig tracker;
    MinerConfig miner;
    TrainerConfig trainer;
    ModelConfig model;
    Mode mode = Mode::delta;
    bool reset_model_per_sequence = true;

    /// Miner settings after applying the mode.
    MinerConfig effective_miner() const {
        MinerConfig m = miner;
        m.batch_size = trainer.batch_size;
        if (mode == Mode::easy_positives) m.positive_mode = PositiveMode::adjacent;
        if (mode == Mode::random_negatives) m.negative_mode = NegativeMode::random;
        return m;
    }

    bool trains() const noexcept { return mode != Mode::frozen; }

    void validate() const {
        tracker.validate();
        effective_miner().validate();
        trainer.validate();
        plan_model(model);
    }
};

struct RunStats {
    int frames = 0;
    std::size_t triplets_emitted = 0;
    std::size_t batches_trained = 0;
    std::vector<double> mean_loss_per_batch;
    double wall_time_sec = 0.0;
    bool diverged = false;
    std::string error;
};

inline nlohmann::json to_json(const RunStats& s, bool with_timing = true) {
    nlohmann::json j;
    j["frames"] = s.frames;
    j["triplets_emitted"] = s.triplets_emitted;
    j["batches_trained"] = s.batches_trained;
    j["mean_loss_per_batch"] = s.mean_loss_per_batch;
    if (with_timing) j["wall_time_sec"] = s.wall_time_sec;
    if (s.diverged) j["error"] = s.error;
    return j;
}

/// Model snapshot in force from `first_frame` until the next entry.
struct SnapshotEntry {
    int first_frame = 0;
    std::shared_ptr<const ModelParameters> model;
};

struct RunResult {
    std::vector<TrackRecord> tracks;
    RunStats stats;
    std::shared_ptr<const ModelParameters> final_model;
    std::vector<SnapshotEntry> snapshots;  // filled when recording is enabled
};

struct PipelineHooks {
    bool record_snapshots = false;
    std::ostream* triplet_log = nullptr;  // JSON lines of emitted triplets
};

class OnlinePipeline {
public:
    explicit OnlinePipeline(PipelineConfig cfg, std::shared_ptr<const ModelParameters> initial = nullptr,
                            PipelineHooks hooks = {})
        : cfg_(std::move(cfg)),
          hooks_(hooks),
          tracker_(cfg_.tracker),
          miner_(cfg_.effective_miner()),
          model_(initial ? std::move(initial) : std::make_shared<const ModelParameters>(init_model(cfg_.model))) {
        cfg_.validate();
        if (model_->config().input != cfg_.model.input)
            throw ConfigError("initial model input shape differs from configuration");
    }

    const std::shared_ptr<const ModelParameters>& model() const noexcept { return model_; }
    const Tracker& tracker() const noexcept { return tracker_; }
    const TripletMiner& miner() const noexcept { return miner_; }
    const RunStats& stats() const noexcept { return stats_; }

    /// Reference order: track, update buffers, emit, accumulate, train.
    std::vector<FrameAssignment> process(const FrameDetections& frame) {
        embed_.set_model(model_);
        embed_.forget_before(frame.frame - cfg_.tracker.max_frames_unextended - 1);
        if (hooks_.record_snapshots && (snapshots_.empty() || snapshots_.back().model != model_))
            snapshots_.push_back({frame.frame, model_});

        auto assignments = tracker_.step(frame, embed_);
        miner_.update_buffers(frame, embed_);
        std::vector<Triplet> triplets = miner_.emit_triplets(frame, embed_);
        if (hooks_.triplet_log) write_triplet_log_line(*hooks_.triplet_log, frame.frame, triplets);
        stats_.triplets_emitted += triplets.size();
        ++stats_.frames;

        auto batch = accumulate(pool_, std::move(triplets), cfg_.trainer.batch_size);
        if (batch && cfg_.trains()) {
            TrainResult r = train_batch(*model_, *batch, cfg_.trainer);
            model_ = std::make_shared<const ModelParameters>(std::move(r.params));
            stats_.mean_loss_per_batch.push_back(r.mean_loss);
            ++stats_.batches_trained;
        }
        return assignments;
    }

    RunResult finish() const {
        RunResult r;
        r.tracks = tracker_.export_tracks();
        r.stats = stats_;
        r.final_model = model_;
        r.snapshots = snapshots_;
        return r;
    }

    void mark_diverged(const std::string& why) {
        stats_.diverged = true;
        stats_.error = why;
    }

private:
    PipelineConfig cfg_;
    PipelineHooks hooks_;
    Tracker tracker_;
    TripletMiner miner_;
    std::shared_ptr<const ModelParameters> model_;
    CachingEmbedder embed_;
    std::deque<Triplet> pool_;
    RunStats stats_;
    std::vector<SnapshotEntry> snapshots_;
};

/// Runs a whole sequence. Training divergence stops the run early; the partial
/// result is returned with stats.diverged set.
inline RunResult run_sequence(const SequenceSource& seq, const PipelineConfig& cfg,
                              std::shared_ptr<const ModelParameters> initial = nullptr, PipelineHooks hooks = {}) {
    const auto start = std::chrono::steady_clock::now();
    if (cfg.reset_model_per_sequence) initial.reset();
    OnlinePipeline pipe(cfg, std::move(initial), hooks);
    const auto by_frame = group_by_frame(seq.detections, seq.num_frames());
    for (int t = 1; t <= seq.num_frames(); ++t) {
        const FrameDetections fd = make_frame_detections(seq.frame(t), t, by_frame[static_cast<std::size_t>(t)],
                                                         cfg.model.input);
        try {
            pipe.process(fd);
        } catch (const TrainingDivergenceError& e) {
            pipe.mark_diverged(e.what());
            break;
        }
    }
    RunResult r = pipe.finish();
    r.stats.wall_time_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

/// Tracker only, driven by a recorded snapshot schedule (no miner, no trainer).
inline std::vector<TrackRecord> replay_tracks(const SequenceSource& seq, const TrackerConfig& tracker_cfg,
                                              const Shape3& patch_shape, const std::vector<SnapshotEntry>& schedule) {
    if (schedule.empty()) throw InputError("empty snapshot schedule");
    Tracker tracker(tracker_cfg);
    const auto by_frame = group_by_frame(seq.detections, seq.num_frames());
    std::size_t next = 0;
    std::shared_ptr<const ModelParameters> current;
    for (int t = 1; t <= seq.num_frames(); ++t) {
        while (next < schedule.size() && schedule[next].first_frame <= t) current = schedule[next++].model;
        if (!current) throw InputError("no snapshot in force at frame " + std::to_string(t));
        ModelEmbedder embed(*current);
        tracker.step(make_frame_detections(seq.frame(t), t, by_frame[static_cast<std::size_t>(t)], patch_shape), embed);
    }
    return tracker.export_tracks();
}

}  // namespace tripletrack
