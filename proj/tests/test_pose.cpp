#include "dexp/core/rng.hpp"
#include "dexp/pose.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace dexp;

namespace {

PoseRTS random_pose(Rng& rng)
{
    const double pi = std::numbers::pi;
    const Eigen::Matrix3d r =
        euler_to_rotation(rng.uniform(-pi, pi), rng.uniform(-pi / 2, pi / 2), rng.uniform(-pi, pi));
    return make_pose(r, rng.uniform(-1, 1), rng.uniform(-1, 1), std::exp(rng.uniform(-1.5, 1.5)));
}

double identity_deviation(const PoseRTS& p) { return pose_distance(p, PoseRTS::identity()); }

} // namespace

TEST(PoseMatrix, Examples)
{
    EXPECT_EQ(pose_to_matrix(PoseRTS::identity()), (PoseMatrix() << Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()).finished());

    const PoseMatrix m = pose_to_matrix(make_pose(Eigen::Matrix3d::Identity(), 0.3, -0.1, 2.0));
    EXPECT_EQ(m.leftCols<3>(), Eigen::Matrix3d(Eigen::Vector3d(2, 2, 2).asDiagonal()));
    EXPECT_EQ(m.col(3), Eigen::Vector3d(0.3, -0.1, 0.0));

    const PoseMatrix q = pose_to_matrix(make_pose(rotation_z(std::numbers::pi / 2), 0, 0, 1));
    EXPECT_NEAR((q.col(0) - Eigen::Vector3d(0, 1, 0)).norm(), 0.0, 1e-15);
    EXPECT_NEAR((q.col(1) - Eigen::Vector3d(-1, 0, 0)).norm(), 0.0, 1e-15);
    EXPECT_NEAR((q.col(2) - Eigen::Vector3d(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(PoseMatrix, ValidationListsFailures)
{
    PoseRTS bad;
    bad.rotation(0, 0) = 2.0;
    bad.scale = -1.0;
    try
    {
        pose_to_matrix(bad);
        FAIL();
    }
    catch (const ValidationError& e)
    {
        const std::string msg = e.what();
        EXPECT_EQ(e.code(), "pose");
        EXPECT_NE(msg.find("orthonormal"), std::string::npos);
        EXPECT_NE(msg.find("scale"), std::string::npos);
    }
    PoseRTS reflect;
    reflect.rotation = Eigen::Vector3d(1, 1, -1).asDiagonal();
    EXPECT_EQ(pose_violations(reflect).size(), 1u);
    PoseRTS lifted;
    lifted.translation.z() = 0.5;
    EXPECT_TRUE(pose_violations(lifted).empty());
    EXPECT_EQ(pose_violations(lifted, true).size(), 1u);
}

TEST(PoseMatrix, RoundTrip)
{
    Rng rng(1);
    for (int i = 0; i < 200; ++i)
    {
        const PoseRTS p = random_pose(rng);
        const PoseRTS q = matrix_to_pose(pose_to_matrix(p));
        EXPECT_LE((q.rotation - p.rotation).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE((q.translation - p.translation).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(q.scale, p.scale, 1e-9);
    }
}

TEST(PoseInvert, Examples)
{
    EXPECT_EQ(identity_deviation(pose_invert(PoseRTS::identity())), 0.0);
    const PoseRTS q = pose_invert(make_pose(Eigen::Matrix3d::Identity(), 0, 0, 2.0));
    EXPECT_EQ(q.scale, 0.5);
    EXPECT_EQ(q.rotation, Eigen::Matrix3d::Identity());
    EXPECT_EQ(q.translation, Eigen::Vector3d::Zero());
}

TEST(PoseInvert, TwoSidedInverseOverRandomPoses)
{
    Rng rng(2);
    for (int i = 0; i < 1000; ++i)
    {
        const PoseRTS p = random_pose(rng);
        ASSERT_LE(identity_deviation(pose_compose(p, pose_invert(p))), 1e-9);
        ASSERT_LE(identity_deviation(pose_compose(pose_invert(p), p)), 1e-9);
    }
}

TEST(PoseCompose, Examples)
{
    Rng rng(3);
    const PoseRTS p = random_pose(rng);
    EXPECT_EQ(pose_distance(pose_compose(p, PoseRTS::identity()), p), 0.0);
    EXPECT_LE(pose_distance(pose_compose(PoseRTS::identity(), p), p), 1e-15);
    const PoseRTS a = make_pose(Eigen::Matrix3d::Identity(), 0, 0, 2.0), b = make_pose(Eigen::Matrix3d::Identity(), 0, 0, 3.0);
    EXPECT_EQ(pose_compose(a, b).scale, 6.0);
}

TEST(PoseCompose, MatchesHomogeneousMultiply)
{
    Rng rng(4);
    for (int i = 0; i < 1000; ++i)
    {
        const PoseRTS a = random_pose(rng), b = random_pose(rng);
        const PoseMatrix m = pose_to_matrix(pose_compose(a, b));
        const auto ref = oracle::multiply(oracle::homogeneous(a), oracle::homogeneous(b));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c)
                ASSERT_NEAR(m(r, c), static_cast<double>(ref[r][c]), 1e-12);
    }
}

TEST(PoseCompose, Associative)
{
    Rng rng(5);
    for (int i = 0; i < 500; ++i)
    {
        const PoseRTS a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        ASSERT_LE(pose_distance(pose_compose(pose_compose(a, b), c), pose_compose(a, pose_compose(b, c))), 1e-9);
    }
}

TEST(PoseCompose, ApplyAgrees)
{
    Rng rng(6);
    const PoseRTS a = random_pose(rng), b = random_pose(rng);
    const Eigen::Vector3d x(0.2, -0.4, 0.9);
    EXPECT_LE((pose_compose(a, b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
}

TEST(RelativePose, Properties)
{
    Rng rng(7);
    for (int i = 0; i < 1000; ++i)
    {
        const PoseRTS s = random_pose(rng), d = random_pose(rng);
        ASSERT_LE(identity_deviation(relative_pose(s, s)), 1e-9);
        ASSERT_LE(pose_distance(pose_compose(relative_pose(s, d), s), d), 1e-9);
    }
    const PoseRTS d = random_pose(rng);
    EXPECT_LE(pose_distance(relative_pose(PoseRTS::identity(), d), d), 1e-15);
}

TEST(Euler, Examples)
{
    EXPECT_EQ(euler_to_rotation(0, 0, 0), Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d half = euler_to_rotation(std::numbers::pi, 0, 0);
    EXPECT_LE((half - Eigen::Matrix3d(Eigen::Vector3d(-1, 1, -1).asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Euler, OrthonormalAndMatchesElementaryComposition)
{
    Rng rng(8);
    for (int i = 0; i < 1000; ++i)
    {
        const double y = rng.uniform(-4, 4), p = rng.uniform(-4, 4), r = rng.uniform(-4, 4);
        const Eigen::Matrix3d m = euler_to_rotation(y, p, r);
        ASSERT_LE((m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        ASSERT_NEAR(m.determinant(), 1.0, 1e-12);
        ASSERT_LE((m - oracle::euler(y, p, r)).cwiseAbs().maxCoeff(), 1e-12);
    }
}
