#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "tripletrack/gradcheck.hpp"

using namespace tripletrack;

namespace {

GradcheckConfig three_layer() {
    GradcheckConfig g;
    g.model.input = {8, 8, 3};
    g.model.layers = {LayerSpec::conv(3, 4, 3), LayerSpec::relu(), LayerSpec::maxpool(2), LayerSpec::flatten(),
                      LayerSpec::dense(16)};
    g.model.output_dim = 16;
    return g;
}

}  // namespace

TEST(RelativeError, UsesLargerMagnitudeWithFloor) {
    EXPECT_DOUBLE_EQ(gradient_relative_error(1.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(gradient_relative_error(2.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(gradient_relative_error(0.0, 1e-9), 1e-9 / 1e-7);
}

TEST(LossGradient, MatchesFiniteDifferencesOnDescriptors) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(6), p(6), n(6);
        for (auto* v : {&a, &p, &n})
            for (double& x : *v) x = rng.normal();
        std::vector<double> ga(6, 0.0), gp(6, 0.0), gn(6, 0.0);
        const double l = triplet_loss_with_gradient(a, p, n, 0.3, 1.0, ga, gp, gn);
        if (l <= 1e-6) continue;
        auto loss = [&] {
            return triplet_cosine_loss(Descriptor(a), Descriptor(p), Descriptor(n), 0.3);
        };
        for (auto [v, g] : {std::pair{&a, &ga}, std::pair{&p, &gp}, std::pair{&n, &gn}}) {
            for (std::size_t i = 0; i < 6; ++i) {
                const double keep = (*v)[i], eps = 1e-6;
                (*v)[i] = keep + eps;
                const double up = loss();
                (*v)[i] = keep - eps;
                const double down = loss();
                (*v)[i] = keep;
                ASSERT_LT(gradient_relative_error((*g)[i], (up - down) / (2 * eps)), 1e-5);
            }
        }
    }
}

TEST(Gradcheck, ThreeLayerModelPasses) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        GradcheckConfig g = three_layer();
        g.seed = seed;
        const GradcheckReport r = run_gradcheck(g);
        EXPECT_TRUE(r.passed(1e-4)) << "seed " << seed << " error " << r.max_relative_error;
        EXPECT_GT(r.active_triplets, 0u);
        EXPECT_EQ(r.tensors.size(), 4u);
    }
}

TEST(Gradcheck, DefaultNetworkPasses) {
    const GradcheckReport r = run_gradcheck(GradcheckConfig{});
    EXPECT_TRUE(r.passed(1e-4)) << r.max_relative_error;
    EXPECT_EQ(r.tensors.size(), 6u);
}

TEST(Gradcheck, MinimalOutputDimensionPasses) {
    GradcheckConfig g;
    g.model.layers.back() = LayerSpec::dense(8);
    g.model.output_dim = 8;
    EXPECT_TRUE(run_gradcheck(g).passed(1e-4));
}

TEST(Gradcheck, CorruptedGradientFails) {
    GradcheckConfig g = three_layer();
    g.corrupt_gradient = 1e-2;
    EXPECT_FALSE(run_gradcheck(g).passed(1e-4));
}
