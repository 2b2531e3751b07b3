#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tripletrack/triplet_miner.hpp"

using namespace tripletrack;
using tt_test::IdentityEmbedder;
using tt_test::vector_frame;
using tt_test::vector_patch;

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

namespace {

// Brute-force mutual-nearest predicate with lowest-index ties.
bool mutually_nearest(const std::vector<std::vector<double>>& d, std::size_t i, std::size_t j) {
    for (std::size_t k = 0; k < d[i].size(); ++k)
        if (d[i][k] < d[i][j] || (d[i][k] == d[i][j] && k < j)) return false;
    for (std::size_t z = 0; z < d.size(); ++z)
        if (d[z][j] < d[i][j] || (d[z][j] == d[i][j] && z < i)) return false;
    return true;
}

std::vector<Triplet> make_triplets(int count, int first_frame) {
    std::vector<Triplet> out;
    for (int k = 0; k < count; ++k) {
        auto p = vector_patch({1.0}, first_frame + k);
        out.push_back({p, p, p});
    }
    return out;
}

// Objects with fixed, well-separated directions plus a little noise per frame.
std::vector<std::vector<double>> noisy_objects(Rng& rng, int count, double noise) {
    std::vector<std::vector<double>> out;
    for (int k = 0; k < count; ++k) {
        std::vector<double> v(static_cast<std::size_t>(count), 0.0);
        v[static_cast<std::size_t>(k)] = 1.0;
        for (double& x : v) x += noise * rng.normal();
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST(MutualNearest, SingletonIsAlwaysMatched) {
    EXPECT_EQ(mutual_nearest_pairs({{1.7}}), (Pairs{{0, 0}}));
}

TEST(MutualNearest, RejectsOneSidedNearestPairs) {
    // Detection 0 prefers buffer 0, but buffer 0 prefers detection 1.
    const std::vector<std::vector<double>> d{{0.1, 0.2}, {0.05, 0.9}};
    EXPECT_EQ(mutual_nearest_pairs(d), (Pairs{{1, 0}}));
    EXPECT_EQ(nearest_buffer_pairs(d), (Pairs{{0, 0}, {1, 0}}));
}

TEST(MutualNearest, EmptySidesGiveNothing) {
    EXPECT_TRUE(mutual_nearest_pairs({}).empty());
    EXPECT_TRUE(mutual_nearest_pairs({{}, {}}).empty());
}

TEST(MutualNearest, AgreesWithEnumerationAndIsAMatching) {
    Rng rng(31);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t Z = 1 + rng.index(5), M = 1 + rng.index(5);
        std::vector<std::vector<double>> d(Z, std::vector<double>(M));
        // Coarse values so ties occur often.
        for (auto& row : d)
            for (double& x : row) x = static_cast<double>(rng.index(4)) * 0.25;
        const Pairs got = mutual_nearest_pairs(d);
        Pairs want;
        for (std::size_t i = 0; i < Z; ++i)
            for (std::size_t j = 0; j < M; ++j)
                if (mutually_nearest(d, i, j)) want.emplace_back(i, j);
        ASSERT_EQ(got, want);

        std::set<std::size_t> rows, cols;
        for (auto [i, j] : got) {
            ASSERT_TRUE(rows.insert(i).second);
            ASSERT_TRUE(cols.insert(j).second);
        }
        const Pairs loose = nearest_buffer_pairs(d);
        for (const auto& p : got) ASSERT_NE(std::find(loose.begin(), loose.end(), p), loose.end());
    }
}

TEST(UpdateBuffers, ColdStartSeedsOneBufferPerDetection) {
    TripletMiner m;
    IdentityEmbedder e;
    m.update_buffers(vector_frame(1, {{1, 0}, {0, 1}, {1, 1}}), e);
    ASSERT_EQ(m.buffers().size(), 3u);
    for (const auto& b : m.buffers()) {
        EXPECT_EQ(b.size(), 1u);
        EXPECT_EQ(b.created_frame, 1);
    }
}

TEST(UpdateBuffers, SingleBufferAndDetectionExtends) {
    TripletMiner m;
    IdentityEmbedder e;
    m.update_buffers(vector_frame(1, {{1, 0}}), e);
    m.update_buffers(vector_frame(2, {{-1, 0}}), e);
    ASSERT_EQ(m.buffers().size(), 1u);
    EXPECT_EQ(m.buffers()[0].size(), 2u);
}

TEST(UpdateBuffers, OneSidedMatchDeletesTheBufferAndSeedsNewOnes) {
    TripletMiner m;
    IdentityEmbedder e;
    // Buffer heads: A = (1, 0), B = (0, 1).
    m.update_buffers(vector_frame(1, {{1, 0}, {0, 1}}), e);
    // Both detections lie nearest to A; A keeps only the closer one, B is unextended.
    m.update_buffers(vector_frame(2, {{1, 0.2}, {1, 0.05}}), e);
    ASSERT_EQ(m.buffers().size(), 2u);
    EXPECT_EQ(m.buffers()[0].size(), 2u);
    EXPECT_EQ(m.buffers()[0].newest()->source.detection, 1);
    EXPECT_EQ(m.buffers()[1].size(), 1u);
    EXPECT_EQ(m.buffers()[1].newest()->source.detection, 0);
    EXPECT_EQ(m.buffers()[1].created_frame, 2);
}

TEST(UpdateBuffers, EmptyFrameDeletesEverything) {
    TripletMiner m;
    IdentityEmbedder e;
    m.update_buffers(vector_frame(1, {{1, 0}, {0, 1}}), e);
    m.update_buffers(vector_frame(2, {}), e);
    EXPECT_TRUE(m.buffers().empty());
}

TEST(UpdateBuffers, FullBuffersSlide) {
    MinerConfig cfg;
    cfg.buffer_length = 3;
    TripletMiner m(cfg);
    IdentityEmbedder e;
    for (int t = 1; t <= 6; ++t) m.update_buffers(vector_frame(t, {{1, 0}}), e);
    ASSERT_EQ(m.buffers().size(), 1u);
    const auto& b = m.buffers()[0];
    EXPECT_EQ(b.size(), 3u);
    EXPECT_EQ(b.oldest()->source.frame, 4);
    EXPECT_EQ(b.newest()->source.frame, 6);
}

TEST(UpdateBuffers, FramesMustIncrease) {
    TripletMiner m;
    IdentityEmbedder e;
    m.update_buffers(vector_frame(5, {{1, 0}}), e);
    EXPECT_THROW(m.update_buffers(vector_frame(5, {{1, 0}}), e), SequencingError);
}

namespace {

// Fills one buffer with L frames of (1, 0) plus the given extra detections in the last frame.
std::vector<Triplet> emit_after_fill(MinerConfig cfg, const std::vector<std::vector<double>>& others) {
    TripletMiner m(cfg);
    IdentityEmbedder e;
    for (int t = 1; t < cfg.buffer_length; ++t) {
        m.update_buffers(vector_frame(t, {{1, 0}}), e);
        EXPECT_TRUE(m.emit_triplets(vector_frame(t, {{1, 0}}), e).empty());
    }
    std::vector<std::vector<double>> last{{1, 0}};
    last.insert(last.end(), others.begin(), others.end());
    const FrameDetections f = vector_frame(cfg.buffer_length, last);
    m.update_buffers(f, e);
    return m.emit_triplets(f, e);
}

std::vector<double> at_distance(double d) { return {1.0 - d, std::sqrt(1.0 - (1.0 - d) * (1.0 - d))}; }

}  // namespace

TEST(EmitTriplets, ForcedNegativeWithTwoDetections) {
    MinerConfig cfg;
    cfg.buffer_length = 4;
    const auto ts = emit_after_fill(cfg, {{-1, 0}});
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_EQ(ts[0].anchor->source.frame, 1);
    EXPECT_EQ(ts[0].positive->source.frame, 4);
    EXPECT_EQ(ts[0].positive->source.detection, 0);
    EXPECT_EQ(ts[0].negative->source.detection, 1);
}

TEST(EmitTriplets, NoNegativeCandidateNoTriplet) {
    MinerConfig cfg;
    cfg.buffer_length = 4;
    EXPECT_TRUE(emit_after_fill(cfg, {}).empty());
}

TEST(EmitTriplets, HardestNegativeIsTheClosestCandidate) {
    MinerConfig cfg;
    cfg.buffer_length = 4;
    // The seeded singleton buffers also fill later, but here only the first buffer is full.
    const auto ts = emit_after_fill(cfg, {at_distance(0.9), at_distance(0.2), at_distance(0.6)});
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_EQ(ts[0].negative->source.detection, 2);
    EXPECT_NEAR(ts[0].positive_negative_distance, 0.2, 1e-12);
}

TEST(EmitTriplets, AdjacentModeUsesThePreviousFrame) {
    MinerConfig cfg;
    cfg.buffer_length = 5;
    cfg.positive_mode = PositiveMode::adjacent;
    const auto ts = emit_after_fill(cfg, {{-1, 0}});
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_EQ(ts[0].positive->source.frame - ts[0].anchor->source.frame, 1);
}

TEST(EmitTriplets, RandomNegativesAreSeededAndNeverThePositive) {
    MinerConfig cfg;
    cfg.buffer_length = 3;
    cfg.negative_mode = NegativeMode::random;
    std::set<int> seen;
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        cfg.seed = seed;
        const auto a = emit_after_fill(cfg, {at_distance(0.9), at_distance(0.2), at_distance(0.6)});
        const auto b = emit_after_fill(cfg, {at_distance(0.9), at_distance(0.2), at_distance(0.6)});
        ASSERT_EQ(a.size(), 1u);
        EXPECT_EQ(a[0].negative->source, b[0].negative->source);
        EXPECT_NE(a[0].negative, a[0].positive);
        seen.insert(a[0].negative->source.detection);
    }
    EXPECT_EQ(seen, (std::set<int>{1, 2, 3}));
}

TEST(EmitTriplets, TemporalGapAndHardNegativeOptimalityOnLongRuns) {
    for (auto mode : {PositiveMode::temporal_distant, PositiveMode::adjacent}) {
        MinerConfig cfg;
        cfg.buffer_length = 6;
        cfg.positive_mode = mode;
        TripletMiner m(cfg);
        IdentityEmbedder e;
        Rng rng(77);
        std::size_t emitted = 0;
        for (int t = 1; t <= 120; ++t) {
            auto dets = noisy_objects(rng, 4, 0.15);
            if (rng.bernoulli(0.1)) dets.pop_back();  // occasional miss breaks a buffer
            const FrameDetections f = vector_frame(t, dets);
            m.update_buffers(f, e);
            for (const auto& tr : m.emit_triplets(f, e)) {
                ++emitted;
                const int gap = tr.positive->source.frame - tr.anchor->source.frame;
                ASSERT_EQ(gap, mode == PositiveMode::temporal_distant ? cfg.buffer_length - 1 : 1);
                ASSERT_EQ(tr.positive->source.frame, t);
                ASSERT_EQ(tr.negative->source.frame, t);
                ASSERT_NE(tr.negative, tr.positive);
                const Descriptor dp(tr.positive->pixels);
                for (const auto& d : f.detections) {
                    if (d.patch == tr.positive) continue;
                    ASSERT_GE(cosine_distance(dp, Descriptor(d.patch->pixels)), tr.positive_negative_distance);
                }
            }
            for (const auto& b : m.buffers()) ASSERT_LE(b.size(), static_cast<std::size_t>(cfg.buffer_length));
        }
        EXPECT_GT(emitted, 50u);
    }
}

TEST(Accumulate, WorkedExamples) {
    std::deque<Triplet> pool;
    EXPECT_FALSE(accumulate(pool, make_triplets(19, 0), 20));
    auto batch = accumulate(pool, make_triplets(1, 100), 20);
    ASSERT_TRUE(batch);
    EXPECT_EQ(batch->size(), 20u);
    EXPECT_TRUE(pool.empty());

    EXPECT_FALSE(accumulate(pool, make_triplets(5, 0), 20));
    EXPECT_FALSE(accumulate(pool, make_triplets(3, 5), 20));
    EXPECT_EQ(pool.size(), 8u);

    pool.clear();
    accumulate(pool, make_triplets(19, 0), 20);
    batch = accumulate(pool, make_triplets(3, 19), 20);
    ASSERT_TRUE(batch);
    for (int k = 0; k < 20; ++k) EXPECT_EQ(batch->triplets[k].anchor->source.frame, k);
    ASSERT_EQ(pool.size(), 2u);
    EXPECT_EQ(pool.front().anchor->source.frame, 20);
}

TEST(Accumulate, NoTripletIsBatchedTwice) {
    std::deque<Triplet> pool;
    Rng rng(4);
    std::set<int> used;  // anchor frame numbers are unique per triplet
    int next = 0;
    for (int step = 0; step < 300; ++step) {
        const int k = static_cast<int>(rng.index(7));
        if (auto b = accumulate(pool, make_triplets(k, next), 20)) {
            for (const auto& t : b->triplets) ASSERT_TRUE(used.insert(t.anchor->source.frame).second);
        }
        next += k;
    }
    EXPECT_EQ(used.size() + pool.size(), static_cast<std::size_t>(next));
}

TEST(MinerConfig, RejectsBadValues) {
    MinerConfig c;
    c.buffer_length = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}
