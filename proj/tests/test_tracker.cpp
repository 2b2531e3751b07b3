#include <limits>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tripletrack/tracker.hpp"

using namespace tripletrack;
using tt_test::IdentityEmbedder;
using tt_test::vector_frame;

namespace {

// Unit vector whose cosine distance to (1, 0) is d.
std::vector<double> at_distance(double d) { return {1.0 - d, std::sqrt(1.0 - (1.0 - d) * (1.0 - d))}; }

}  // namespace

TEST(Tracker, ColdStartCreatesOneTrackPerDetection) {
    Tracker tr;
    IdentityEmbedder e;
    const auto out = tr.step(vector_frame(1, {{1, 0}, {0, 1}, {-1, 0}}), e);
    ASSERT_EQ(out.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(out[i].detection, i);
        EXPECT_EQ(out[i].track_id, i);
        EXPECT_TRUE(out[i].new_track);
    }
    EXPECT_EQ(tr.active_tracks().size(), 3u);
}

TEST(Tracker, NearDetectionExtendsTheTrack) {
    Tracker tr;
    IdentityEmbedder e;
    tr.step(vector_frame(1, {{1, 0}}), e);
    const auto out = tr.step(vector_frame(2, {at_distance(0.3)}), e);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].track_id, 0);
    EXPECT_FALSE(out[0].new_track);
    EXPECT_EQ(tr.active_tracks()[0].length(), 2u);
}

TEST(Tracker, FarDetectionStartsANewTrackAndTheOldOneRetiresLater) {
    TrackerConfig cfg;
    cfg.min_track_length = 1;
    Tracker tr(cfg);
    IdentityEmbedder e;
    tr.step(vector_frame(1, {{1, 0}}), e);
    const auto out = tr.step(vector_frame(2, {at_distance(0.8)}), e);
    EXPECT_EQ(out[0].track_id, 1);
    EXPECT_TRUE(out[0].new_track);
    EXPECT_EQ(tr.active_tracks().size(), 2u);  // track 0 missed one frame: still active

    tr.step(vector_frame(3, {at_distance(0.8)}), e);
    ASSERT_EQ(tr.active_tracks().size(), 1u);  // missed two frames: deregistered
    EXPECT_EQ(tr.active_tracks()[0].id, 1);
    ASSERT_EQ(tr.finished_tracks().size(), 1u);
    EXPECT_EQ(tr.finished_tracks()[0].id, 0);
}

TEST(Tracker, GateBoundaryIsKept) {
    TrackerConfig cfg;
    cfg.gate_threshold = cosine_distance(Descriptor{1, 0}, Descriptor{1, 1});  // cost exactly at the gate
    Tracker tr(cfg);
    IdentityEmbedder e;
    tr.step(vector_frame(1, {{1, 0}}), e);
    EXPECT_FALSE(tr.step(vector_frame(2, {{1, 1}}), e)[0].new_track);
}

namespace {

// Runs a track of `len` frames, then lets it lapse, and returns the export.
std::vector<TrackRecord> lapsed_track(int len) {
    Tracker tr;
    IdentityEmbedder e;
    int t = 1;
    for (; t <= len; ++t) tr.step(vector_frame(t, {{1, 0}}), e);
    tr.step(vector_frame(t++, {}), e);
    tr.step(vector_frame(t++, {}), e);
    EXPECT_TRUE(tr.active_tracks().empty());
    return tr.export_tracks();
}

}  // namespace

TEST(Tracker, ShortDeregisteredTracksAreErased) {
    EXPECT_TRUE(lapsed_track(11).empty());
    const auto kept = lapsed_track(12);
    ASSERT_EQ(kept.size(), 12u);
    for (int i = 0; i < 12; ++i) {
        EXPECT_EQ(kept[i].frame, i + 1);
        EXPECT_EQ(kept[i].id, 0);
    }
}

TEST(Tracker, EmptyStateExportsNothing) { EXPECT_TRUE(Tracker().export_tracks().empty()); }

TEST(Tracker, ActiveShortTracksAtTheEndFollowTheConfig) {
    for (bool keep : {true, false}) {
        TrackerConfig cfg;
        cfg.keep_active_short_tracks = keep;
        Tracker tr(cfg);
        IdentityEmbedder e;
        for (int t = 1; t <= 5; ++t) tr.step(vector_frame(t, {{1, 0}}), e);
        EXPECT_EQ(tr.export_tracks().size(), keep ? 5u : 0u);
    }
}

TEST(Tracker, FramesMustIncrease) {
    Tracker tr;
    IdentityEmbedder e;
    tr.step(vector_frame(3, {{1, 0}}), e);
    EXPECT_THROW(tr.step(vector_frame(3, {{1, 0}}), e), SequencingError);
    EXPECT_THROW(tr.step(vector_frame(2, {{1, 0}}), e), SequencingError);
}

TEST(Tracker, RecordsCarryTheDetectionBoxes) {
    Tracker tr;
    IdentityEmbedder e;
    FrameDetections f = vector_frame(1, {{1, 0}});
    tr.step(f, e);
    const auto recs = tr.export_tracks();
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].box, f.detections[0].bbox());
}

TEST(Tracker, UnlimitedGateWithOneDetectionJoinsTheNearestTrack) {
    TrackerConfig cfg;
    cfg.gate_threshold = std::numeric_limits<double>::infinity();
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        Tracker tr(cfg);
        IdentityEmbedder e;
        std::vector<std::vector<double>> heads;
        for (int k = 0; k < 4; ++k) heads.push_back({rng.normal(), rng.normal(), rng.normal()});
        tr.step(vector_frame(1, heads), e);
        const std::vector<double> det{rng.normal(), rng.normal(), rng.normal()};
        const auto out = tr.step(vector_frame(2, {det}), e);
        std::size_t best = 0;
        for (std::size_t k = 1; k < heads.size(); ++k)
            if (cosine_distance(Descriptor(det), Descriptor(heads[k])) <
                cosine_distance(Descriptor(det), Descriptor(heads[best])))
                best = k;
        ASSERT_EQ(out[0].track_id, static_cast<int>(best));
    }
}

TEST(Tracker, IdsAreUniquePerFrameAndNeverReused) {
    Rng rng(21);
    TrackerConfig cfg;
    cfg.min_track_length = 1;
    Tracker tr(cfg);
    IdentityEmbedder e;
    std::set<int> retired;
    std::map<int, int> last_frame;
    for (int t = 1; t <= 200; ++t) {
        std::vector<std::vector<double>> dets;
        const std::size_t z = rng.index(6);
        for (std::size_t i = 0; i < z; ++i) dets.push_back({rng.normal(), rng.normal()});
        const auto out = tr.step(vector_frame(t, dets), e);
        std::set<int> ids;
        for (const auto& a : out) {
            ASSERT_TRUE(ids.insert(a.track_id).second);
            ASSERT_FALSE(retired.count(a.track_id));
            if (a.new_track) {
                ASSERT_FALSE(last_frame.count(a.track_id));
            }
            last_frame[a.track_id] = t;
        }
        for (const auto& [id, f] : last_frame)
            if (t - f > cfg.max_frames_unextended) retired.insert(id);
    }
}

TEST(Tracker, ErasedTracksNeverReappear) {
    Tracker tr;
    IdentityEmbedder e;
    tr.step(vector_frame(1, {{1, 0}}), e);  // track 0, erased after the gap
    tr.step(vector_frame(2, {}), e);
    tr.step(vector_frame(3, {}), e);
    for (int t = 4; t <= 20; ++t) tr.step(vector_frame(t, {{1, 0}}), e);
    EXPECT_EQ(tr.erased_count(), 1u);
    for (const auto& r : tr.export_tracks()) EXPECT_NE(r.id, 0);
}

TEST(TrackerConfig, RejectsBadValues) {
    TrackerConfig c;
    c.gate_threshold = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.max_frames_unextended = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.min_track_length = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}
