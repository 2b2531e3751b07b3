#include <limits>

#include <gtest/gtest.h>

#include "tripletrack/pipeline.hpp"
#include "tripletrack/synthetic.hpp"

using namespace tripletrack;

namespace {

SequenceSource small_sequence(int frames, std::uint64_t seed = 3) {
    SynthConfig s;
    s.seed = seed;
    s.num_objects = 4;
    s.num_frames = frames;
    s.frame_height = 120;
    s.frame_width = 160;
    s.occlusion_count = 1;
    return generate(s).source;
}

PipelineConfig fast_config(Mode mode) {
    PipelineConfig c;
    c.mode = mode;
    c.miner.buffer_length = 6;
    c.trainer.batch_size = 8;
    c.trainer.learning_rate = 0.05;
    c.model.input_mean = {0.5, 0.5, 0.5};
    c.model.input_std = {0.25, 0.25, 0.25};
    return c;
}

}  // namespace

TEST(Pipeline, FrozenTrainsNothingAndMatchesATrainerlessTracker) {
    const SequenceSource seq = small_sequence(40);
    const PipelineConfig cfg = fast_config(Mode::frozen);
    const RunResult r = run_sequence(seq, cfg);
    EXPECT_EQ(r.stats.batches_trained, 0u);
    EXPECT_GT(r.stats.triplets_emitted, 0u);
    EXPECT_EQ(r.final_model->version(), 0u);

    const auto initial = std::make_shared<const ModelParameters>(init_model(cfg.model));
    EXPECT_EQ(replay_tracks(seq, cfg.tracker, cfg.model.input, {{1, initial}}), r.tracks);
}

TEST(Pipeline, SequenceShorterThanBufferEmitsNoTriplets) {
    const SequenceSource seq = small_sequence(18);
    PipelineConfig cfg;  // L = 19
    const RunResult r = run_sequence(seq, cfg);
    EXPECT_EQ(r.stats.frames, 18);
    EXPECT_EQ(r.stats.triplets_emitted, 0u);
    EXPECT_EQ(r.stats.batches_trained, 0u);
    EXPECT_FALSE(r.tracks.empty());
}

TEST(Pipeline, RunsAreDeterministic) {
    const SequenceSource seq = small_sequence(40);
    for (Mode m : all_modes()) {
        const PipelineConfig cfg = fast_config(m);
        const RunResult a = run_sequence(seq, cfg), b = run_sequence(seq, cfg);
        EXPECT_EQ(a.tracks, b.tracks) << to_string(m);
        EXPECT_EQ(to_json(a.stats, false), to_json(b.stats, false)) << to_string(m);
        EXPECT_EQ(*a.final_model, *b.final_model) << to_string(m);
    }
}

TEST(Pipeline, TrainingModesTrainAndLossesAreRecorded) {
    const SequenceSource seq = small_sequence(40);
    for (Mode m : {Mode::delta, Mode::easy_positives, Mode::random_negatives}) {
        const RunResult r = run_sequence(seq, fast_config(m));
        EXPECT_GT(r.stats.batches_trained, 0u) << to_string(m);
        EXPECT_EQ(r.stats.mean_loss_per_batch.size(), r.stats.batches_trained);
        EXPECT_EQ(r.final_model->version(), r.stats.batches_trained);
        EXPECT_LE(r.stats.batches_trained * 8, r.stats.triplets_emitted);
    }
}

TEST(Pipeline, ReplayingSnapshotsReproducesTheTracks) {
    const SequenceSource seq = small_sequence(50);
    const PipelineConfig cfg = fast_config(Mode::delta);
    PipelineHooks hooks;
    hooks.record_snapshots = true;
    const RunResult r = run_sequence(seq, cfg, nullptr, hooks);
    ASSERT_GT(r.stats.batches_trained, 0u);
    ASSERT_EQ(r.snapshots.size(), r.stats.batches_trained + 1);
    EXPECT_EQ(r.snapshots.front().first_frame, 1);
    for (std::size_t k = 1; k < r.snapshots.size(); ++k) {
        EXPECT_GT(r.snapshots[k].first_frame, r.snapshots[k - 1].first_frame);
        EXPECT_EQ(r.snapshots[k].model->version(), k);
    }
    EXPECT_EQ(replay_tracks(seq, cfg.tracker, cfg.model.input, r.snapshots), r.tracks);

    // Dropping the training makes a difference, so the replay check is not vacuous.
    const std::vector<SnapshotEntry> first_only{r.snapshots.front()};
    EXPECT_EQ(replay_tracks(seq, cfg.tracker, cfg.model.input, first_only), run_sequence(seq, fast_config(Mode::frozen)).tracks);
}

TEST(Pipeline, ModelResetFollowsTheConfig) {
    const SequenceSource seq = small_sequence(30);
    PipelineConfig cfg = fast_config(Mode::frozen);
    ModelConfig other = cfg.model;
    other.seed = 99;
    const auto foreign = std::make_shared<const ModelParameters>(init_model(other));

    cfg.reset_model_per_sequence = true;
    EXPECT_EQ(*run_sequence(seq, cfg, foreign).final_model, init_model(cfg.model));
    cfg.reset_model_per_sequence = false;
    EXPECT_EQ(*run_sequence(seq, cfg, foreign).final_model, *foreign);
}

TEST(Pipeline, DivergenceStopsTheRunAndFlagsIt) {
    const SequenceSource seq = small_sequence(40);
    PipelineConfig cfg = fast_config(Mode::delta);
    cfg.trainer.learning_rate = std::numeric_limits<double>::max();
    const RunResult r = run_sequence(seq, cfg);
    EXPECT_TRUE(r.stats.diverged);
    EXPECT_LT(r.stats.frames, 40);
    EXPECT_TRUE(to_json(r.stats).contains("error"));
}

TEST(Pipeline, FramesMustIncrease) {
    OnlinePipeline p(fast_config(Mode::frozen));
    p.process({2, {}});
    EXPECT_THROW(p.process({2, {}}), SequencingError);
}

TEST(Pipeline, StatsJsonHasTheDocumentedKeys) {
    RunStats s;
    s.frames = 3;
    s.mean_loss_per_batch = {0.25};
    const auto j = to_json(s);
    for (const char* k : {"frames", "triplets_emitted", "batches_trained", "mean_loss_per_batch", "wall_time_sec"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_FALSE(to_json(s, false).contains("wall_time_sec"));
}

TEST(Mode, NamesRoundTrip) {
    for (Mode m : all_modes()) EXPECT_EQ(parse_mode(to_string(m)), m);
    EXPECT_THROW(parse_mode("turbo"), ConfigError);
}

TEST(PipelineConfig, ModesMapToMinerSettings) {
    PipelineConfig c;
    c.mode = Mode::easy_positives;
    EXPECT_EQ(c.effective_miner().positive_mode, PositiveMode::adjacent);
    c.mode = Mode::random_negatives;
    EXPECT_EQ(c.effective_miner().negative_mode, NegativeMode::random);
    c.mode = Mode::frozen;
    EXPECT_FALSE(c.trains());
}
