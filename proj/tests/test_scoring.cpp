#include <gtest/gtest.h>

#include "testing_util.hpp"
#include "trd/scoring.hpp"

using namespace trd;
using test::random_normal_tensor;

namespace {

std::vector<Tensor> toy_value_pyramid(Rng& rng) {
    return {random_normal_tensor({1, 16, 16, 16}, rng), random_normal_tensor({1, 32, 8, 8}, rng),
            random_normal_tensor({1, 64, 4, 4}, rng)};
}

std::vector<Tensor> negated(const std::vector<Tensor>& pyr) {
    std::vector<Tensor> out;
    for (const Tensor& t : pyr) {
        Tensor n(t.shape());
        for (std::int64_t i = 0; i < t.size(); ++i) n[i] = -t[i];
        out.push_back(std::move(n));
    }
    return out;
}

AnomalyMap constant_map(int res, double v, BranchTag tag) { return {Tensor({res, res}, v), tag}; }

}  // namespace

TEST(BranchMap, PerfectReconstructionIsZero) {
    Rng rng(1);
    std::vector<Tensor> pyr = toy_value_pyramid(rng);
    AnomalyMap m = branch_map(pyr, pyr, 64, 64, BranchTag::k2D);
    EXPECT_EQ(m.data.shape(), (Shape{64, 64}));
    for (std::int64_t i = 0; i < m.data.size(); ++i) EXPECT_NEAR(m.data[i], 0.0, 1e-9);
}

TEST(BranchMap, AntipodalIsSixInInterior) {
    Rng rng(3);
    std::vector<Tensor> pyr = toy_value_pyramid(rng);
    AnomalyMap m = branch_map(pyr, negated(pyr), 64, 64, BranchTag::k3D);
    // interior pixels away from interpolation edges
    for (int y = 16; y < 48; ++y)
        for (int x = 16; x < 48; ++x) EXPECT_NEAR(m.data.at(y, x), 6.0, 1e-9);
    for (std::int64_t i = 0; i < m.data.size(); ++i) {
        EXPECT_GE(m.data[i], -1e-9);
        EXPECT_LE(m.data[i], 6.0 + 1e-9);
    }
}

TEST(BranchMap, HandComputedSingleLevel) {
    // one 2-channel 2x2 level with hand-set vectors, upsampled to 2x2 (identity)
    Tensor e({1, 2, 2, 2}), c({1, 2, 2, 2});
    // (0,0): (1,0) vs (0,1) -> cos 0 -> 1
    e.at(0, 0, 0, 0) = 1;
    c.at(0, 1, 0, 0) = 1;
    // (0,1): (1,1) vs (1,1) -> cos 1 -> 0
    e.at(0, 0, 0, 1) = 1;
    e.at(0, 1, 0, 1) = 1;
    c.at(0, 0, 0, 1) = 1;
    c.at(0, 1, 0, 1) = 1;
    // (1,0): (1,1) vs (1,0) -> 1 - 1/sqrt(2)
    e.at(0, 0, 1, 0) = 1;
    e.at(0, 1, 1, 0) = 1;
    c.at(0, 0, 1, 0) = 1;
    // (1,1): (2,0) vs (-1,0) -> 1 - (-1) = 2
    e.at(0, 0, 1, 1) = 2;
    c.at(0, 0, 1, 1) = -1;
    AnomalyMap m = branch_map({e}, {c}, 2, 2, BranchTag::k2D);
    EXPECT_NEAR(m.data.at(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(m.data.at(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(m.data.at(1, 0), 1.0 - 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(m.data.at(1, 1), 2.0, 1e-12);
}

TEST(Smooth, ConstantMapUnchanged) {
    AnomalyMap m = constant_map(32, 1.37, BranchTag::k2D);
    AnomalyMap s = smooth(m, 1.0);
    for (std::int64_t i = 0; i < s.data.size(); ++i) EXPECT_NEAR(s.data[i], 1.37, 1e-6);
}

TEST(Smooth, ImpulseMassPreserved) {
    AnomalyMap m = constant_map(33, 0.0, BranchTag::k2D);
    m.data.at(16, 16) = 1.0;
    AnomalyMap s = smooth(m, 1.0);
    EXPECT_NEAR(s.data.sum(), 1.0, 1e-3);
}

TEST(Calibrate, DegenerateConstantMap) {
    std::vector<BranchMaps> maps;
    maps.push_back({constant_map(8, 2.5, BranchTag::k2D), constant_map(8, -0.5, BranchTag::k3D)});
    CalibrationStats stats = calibrate_from_maps(maps);
    EXPECT_NEAR(stats.mu_2d, 2.5, 1e-12);
    EXPECT_NEAR(stats.mu_3d, -0.5, 1e-12);
    EXPECT_EQ(stats.sigma_2d, kSigmaFloor);
    EXPECT_EQ(stats.sigma_3d, kSigmaFloor);
}

TEST(Calibrate, PooledTwoConstantMaps) {
    // two constant maps c1 != c2: mu = (c1+c2)/2, sigma = population std = |c1-c2|/2
    const double c1 = 1.0, c2 = 3.0;
    std::vector<BranchMaps> maps;
    maps.push_back({constant_map(4, c1, BranchTag::k2D), constant_map(4, 0.0, BranchTag::k3D)});
    maps.push_back({constant_map(4, c2, BranchTag::k2D), constant_map(4, 0.0, BranchTag::k3D)});
    CalibrationStats stats = calibrate_from_maps(maps);
    EXPECT_NEAR(stats.mu_2d, 2.0, 1e-12);
    EXPECT_NEAR(stats.sigma_2d, 1.0, 1e-9);
}

TEST(Calibrate, NormalizationSanityByConstruction) {
    Rng rng(5);
    std::vector<BranchMaps> maps;
    for (int i = 0; i < 3; ++i)
        maps.push_back({{random_normal_tensor({16, 16}, rng, 2.0), BranchTag::k2D},
                        {random_normal_tensor({16, 16}, rng, 0.3), BranchTag::k3D}});
    CalibrationStats stats = calibrate_from_maps(maps);
    double sum = 0.0, sq = 0.0;
    std::int64_t n = 0;
    for (const BranchMaps& m : maps)
        for (std::int64_t i = 0; i < m.m2d.data.size(); ++i) {
            const double z = (m.m2d.data[i] - stats.mu_2d) / stats.sigma_2d;
            sum += z;
            sq += z * z;
            ++n;
        }
    EXPECT_NEAR(sum / static_cast<double>(n), 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 1.0, 1e-6);
}

TEST(Fuse, CenteringAndIdentityStats) {
    CalibrationStats stats{2.0, 0.5, -1.0, 2.0};
    AnomalyMap fused = fuse(constant_map(8, 2.0, BranchTag::k2D), constant_map(8, -1.0, BranchTag::k3D), stats);
    for (std::int64_t i = 0; i < fused.data.size(); ++i) EXPECT_NEAR(fused.data[i], 0.0, 1e-12);

    Rng rng(7);
    AnomalyMap m2{random_normal_tensor({8, 8}, rng), BranchTag::k2D};
    AnomalyMap m3{random_normal_tensor({8, 8}, rng), BranchTag::k3D};
    CalibrationStats identity{0.0, 1.0, 0.0, 1.0};
    AnomalyMap sum = fuse(m2, m3, identity);
    AnomalyMap raw = fuse(m2, m3, identity, FusionStrategy::kSumRaw);
    AnomalyMap prod = fuse(m2, m3, identity, FusionStrategy::kProduct);
    for (std::int64_t i = 0; i < sum.data.size(); ++i) {
        EXPECT_NEAR(sum.data[i], m2.data[i] + m3.data[i], 1e-12);
        EXPECT_NEAR(raw.data[i], m2.data[i] + m3.data[i], 1e-12);
        EXPECT_NEAR(prod.data[i], m2.data[i] * m3.data[i], 1e-12);
    }
}

TEST(Fuse, MonotoneInEachPixel) {
    Rng rng(9);
    AnomalyMap m2{random_normal_tensor({6, 6}, rng), BranchTag::k2D};
    AnomalyMap m3{random_normal_tensor({6, 6}, rng), BranchTag::k3D};
    CalibrationStats stats{0.3, 0.7, -0.2, 1.9};
    AnomalyMap base = fuse(m2, m3, stats);
    AnomalyMap bumped2 = m2;
    bumped2.data.at(3, 4) += 0.5;
    AnomalyMap after = fuse(bumped2, m3, stats);
    EXPECT_GT(after.data.at(3, 4), base.data.at(3, 4));
    AnomalyMap bumped3 = m3;
    bumped3.data.at(2, 1) += 0.25;
    AnomalyMap after3 = fuse(m2, bumped3, stats);
    EXPECT_GT(after3.data.at(2, 1), base.data.at(2, 1));
}

TEST(ImageScore, MaxSemantics) {
    AnomalyMap zeros = constant_map(8, 0.0, BranchTag::kFused);
    EXPECT_EQ(image_score(zeros), 0.0);
    AnomalyMap one = zeros;
    one.data.at(5, 2) = 5.0;
    EXPECT_EQ(image_score(one), 5.0);

    Rng rng(11);
    AnomalyMap r{random_normal_tensor({12, 9}, rng), BranchTag::kFused};
    double best = -1e300;
    for (std::int64_t i = 0; i < r.data.size(); ++i) best = std::max(best, r.data[i]);
    EXPECT_EQ(image_score(r), best);
    for (std::int64_t i = 0; i < r.data.size(); ++i) EXPECT_GE(image_score(r), r.data[i]);
}

TEST(EffectiveSigma, ScalesWithResolution) {
    EXPECT_DOUBLE_EQ(effective_sigma(4.0, 256), 4.0);
    EXPECT_DOUBLE_EQ(effective_sigma(4.0, 64), 1.0);
}

TEST(FusionStrategyNames, RoundTripAndErrors) {
    EXPECT_EQ(fusion_from_string("norm_sum"), FusionStrategy::kNormSum);
    EXPECT_EQ(fusion_from_string("sum_raw"), FusionStrategy::kSumRaw);
    EXPECT_EQ(fusion_from_string("product"), FusionStrategy::kProduct);
    EXPECT_THROW(fusion_from_string("mean"), ConfigError);
    EXPECT_EQ(to_string(FusionStrategy::kProduct), "product");
}
