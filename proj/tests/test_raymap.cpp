#include "dexp/core/rng.hpp"
#include "dexp/raymap.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace dexp;

namespace {

PoseRTS random_pose(Rng& rng)
{
    return make_pose(euler_to_rotation(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)),
                     rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0));
}

// Direct evaluation of s R [u v 0]^T + w t - [u v 0]^T at one pixel.
Eigen::Vector3d expected(const PoseRTS& p, double u, double v, bool w1)
{
    const Eigen::Vector3d x(u, v, 0.0);
    return p.scale * p.rotation * x + (w1 ? p.translation : Eigen::Vector3d::Zero()) - x;
}

} // namespace

TEST(Raymap, CanonicalPoseIsZeroInBothModes)
{
    for (auto mode : {RaymapMode::literal_w0, RaymapMode::homogeneous_w1})
    {
        const RayMap m = compute_raymap(PoseRTS::identity(), 17, 9, mode);
        for (double v : m.data.data())
            ASSERT_EQ(v, 0.0);
    }
}

TEST(Raymap, ScaleTwoGivesPixelCoordinates)
{
    const PoseRTS p = make_pose(Eigen::Matrix3d::Identity(), 0, 0, 2.0);
    for (std::size_t n : {8u, 64u})
    {
        const RayMap m = compute_raymap(p, n, n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
            {
                ASSERT_NEAR(m.data(0, j, i), cell_center(i, n), 1e-12);
                ASSERT_NEAR(m.data(1, j, i), cell_center(j, n), 1e-12);
                ASSERT_EQ(m.data(2, j, i), 0.0);
            }
    }
}

TEST(Raymap, TranslationOnlyAppearsInW1)
{
    const PoseRTS p = make_pose(Eigen::Matrix3d::Identity(), 0.3, -0.1, 1.0);
    const RayMap w0 = compute_raymap(p, 12, 7, RaymapMode::literal_w0);
    const RayMap w1 = compute_raymap(p, 12, 7, RaymapMode::homogeneous_w1);
    for (std::size_t j = 0; j < 7; ++j)
        for (std::size_t i = 0; i < 12; ++i)
        {
            for (std::size_t c = 0; c < 3; ++c)
                ASSERT_EQ(w0.data(c, j, i), 0.0);
            ASSERT_NEAR(w1.data(0, j, i), 0.3, 1e-15);
            ASSERT_NEAR(w1.data(1, j, i), -0.1, 1e-15);
            ASSERT_EQ(w1.data(2, j, i), 0.0);
        }
}

TEST(Raymap, QuarterTurnHandEvaluation)
{
    // width 2 puts column 1 at u = 0.5, height 3 puts row 1 at v = 0
    const RayMap m = compute_raymap(make_pose(rotation_z(std::numbers::pi / 2), 0, 0, 1.0), 2, 3);
    EXPECT_NEAR(m.data(0, 1, 1), -0.5, 1e-15);
    EXPECT_NEAR(m.data(1, 1, 1), 0.5, 1e-15);
    EXPECT_NEAR(m.data(2, 1, 1), 0.0, 1e-15);
}

TEST(Raymap, MatchesDirectEvaluation)
{
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial)
    {
        const PoseRTS p = random_pose(rng);
        for (bool w1 : {false, true})
        {
            const RayMap m =
                compute_raymap(p, 9, 6, w1 ? RaymapMode::homogeneous_w1 : RaymapMode::literal_w0);
            for (std::size_t j = 0; j < 6; ++j)
                for (std::size_t i = 0; i < 9; ++i)
                {
                    const Eigen::Vector3d e = expected(p, cell_center(i, 9), cell_center(j, 6), w1);
                    for (int c = 0; c < 3; ++c)
                        ASSERT_NEAR(m.data(static_cast<std::size_t>(c), j, i), e(c), 1e-14);
                }
        }
    }
}

TEST(Raymap, LinearInScale)
{
    for (double s : {0.5, 1.0, 2.0, 3.0})
    {
        const RayMap m = compute_raymap(make_pose(Eigen::Matrix3d::Identity(), 0, 0, s), 10, 10);
        for (std::size_t j = 0; j < 10; ++j)
            for (std::size_t i = 0; i < 10; ++i)
            {
                ASSERT_NEAR(m.data(0, j, i), (s - 1) * cell_center(i, 10), 1e-14);
                ASSERT_NEAR(m.data(1, j, i), (s - 1) * cell_center(j, 10), 1e-14);
            }
    }
}

TEST(Raymap, ZRotationEquivariance)
{
    Rng rng(22);
    const PoseRTS p = random_pose(rng);
    const double a = 0.7;
    const PoseRTS q{rotation_z(a) * p.rotation, p.translation, p.scale};
    const RayMap mp = compute_raymap(p, 8, 8), mq = compute_raymap(q, 8, 8);
    for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t i = 0; i < 8; ++i)
        {
            const double u = cell_center(i, 8), v = cell_center(j, 8);
            // s R x = map + x, so the rotated map is Rz (map + x) - x
            const Eigen::Vector3d srx(mp.data(0, j, i) + u, mp.data(1, j, i) + v, mp.data(2, j, i));
            const Eigen::Vector3d e = rotation_z(a) * srx - Eigen::Vector3d(u, v, 0);
            for (int c = 0; c < 3; ++c)
                ASSERT_NEAR(mq.data(static_cast<std::size_t>(c), j, i), e(c), 1e-14);
        }
}

TEST(Raymap, ResolutionConsistency)
{
    Rng rng(23);
    const PoseRTS p = random_pose(rng);
    const std::size_t n = 16;
    const RayMap fine = compute_raymap(p, 2 * n, 2 * n, RaymapMode::homogeneous_w1);
    const RayMap coarse = compute_raymap(p, n, n, RaymapMode::homogeneous_w1);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
            {
                const double avg = 0.25 * (fine.data(c, 2 * j, 2 * i) + fine.data(c, 2 * j + 1, 2 * i) +
                                           fine.data(c, 2 * j, 2 * i + 1) + fine.data(c, 2 * j + 1, 2 * i + 1));
                ASSERT_NEAR(avg, coarse.data(c, j, i), 1e-6);
            }
}

TEST(Raymap, Errors)
{
    EXPECT_THROW(compute_raymap(PoseRTS::identity(), 0, 4), ValidationError);
    PoseRTS bad;
    bad.scale = 0.0;
    EXPECT_THROW(compute_raymap(bad, 4, 4), ValidationError);
    EXPECT_EQ(parse_raymap_mode("w1"), RaymapMode::homogeneous_w1);
    EXPECT_THROW(parse_raymap_mode("w2"), ValidationError);
}

TEST(RaymapPair, Properties)
{
    Rng rng(24);
    const PoseRTS a = random_pose(rng), b = random_pose(rng);
    const Tensor same = raymap_pair(a, a, 6, 5);
    ASSERT_EQ(same.shape(), (Shape{6, 5, 6}));
    for (std::size_t k = 0; k < 90; ++k)
        EXPECT_EQ(same[k], same[90 + k]);
    const Tensor ab = raymap_pair(a, b, 6, 5), ba = raymap_pair(b, a, 6, 5);
    for (std::size_t k = 0; k < 90; ++k)
    {
        EXPECT_EQ(ab[k], ba[90 + k]);
        EXPECT_EQ(ab[90 + k], ba[k]);
    }
    const Tensor canonical = raymap_pair(PoseRTS::identity(), PoseRTS::identity(), 4, 4);
    for (double v : canonical.data())
        EXPECT_EQ(v, 0.0);
}

TEST(RaymapFit, RecoversPoseFromW1Map)
{
    Rng rng(25);
    for (int trial = 0; trial < 50; ++trial)
    {
        const PoseRTS p = random_pose(rng);
        const PoseRTS q = fit_raymap_pose(compute_raymap(p, 16, 16, RaymapMode::homogeneous_w1).data);
        ASSERT_LE(pose_distance(p, q), 1e-9);
    }
}

TEST(RaymapRgb, AffineMapping)
{
    Rng rng(26);
    const RayMap m = compute_raymap(random_pose(rng), 8, 8);
    double extent = 0;
    const Tensor rgb = raymap_to_rgb(m.data, &extent);
    double max_abs = 0;
    for (double v : m.data.data())
        max_abs = std::max(max_abs, std::abs(v));
    EXPECT_EQ(extent, max_abs);
    for (std::size_t k = 0; k < rgb.size(); ++k)
    {
        ASSERT_GE(rgb[k], 0.0);
        ASSERT_LE(rgb[k], 1.0);
        ASSERT_NEAR(rgb[k], 0.5 + 0.5 * m.data[k] / extent, 1e-15);
    }
}
