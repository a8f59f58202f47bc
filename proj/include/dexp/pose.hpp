#pragma once

#include "dexp/core/error.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <string>
#include <vector>

namespace dexp {

/**
 * Explicit head pose: rotation R, translation t and scale s.
 *
 * Acts on a point as x -> s * R * x + t. A pose obtained from an image has
 * 6 degrees of freedom (3 rotation, 2 translation, 1 scale), so t = (tx, ty, 0).
 * Results of compose and invert may carry a nonzero tz; they are still valid
 * similarity transforms and every operation accepts them.
 */
struct PoseRTS
{
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double scale = 1.0;

    static PoseRTS identity() { return {}; }

    Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return scale * (rotation * x) + translation; }
};

/// The 3x4 block matrix [s*R | t].
using PoseMatrix = Eigen::Matrix<double, 3, 4>;

inline constexpr double pose_tolerance = 1e-6;

/**
 * Lists every violated pose invariant; empty if the pose is valid.
 * With `require_planar`, a nonzero tz is reported as well.
 */
inline std::vector<std::string> pose_violations(const PoseRTS& p, bool require_planar = false)
{
    std::vector<std::string> failed;
    if (!p.rotation.allFinite() || !p.translation.allFinite() || !std::isfinite(p.scale))
    {
        failed.emplace_back("non-finite entry");
        return failed;
    }
    const Eigen::Matrix3d gram = p.rotation.transpose() * p.rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > pose_tolerance)
        failed.emplace_back("rotation is not orthonormal (R^T R != I)");
    if (std::abs(p.rotation.determinant() - 1.0) > pose_tolerance)
        failed.emplace_back("det(rotation) != +1");
    if (!(p.scale > 0.0))
        failed.emplace_back("scale must be positive");
    if (require_planar && p.translation.z() != 0.0)
        failed.emplace_back("translation z must be 0");
    return failed;
}

inline void validate_pose(const PoseRTS& p, bool require_planar = false)
{
    const auto failed = pose_violations(p, require_planar);
    if (failed.empty())
        return;
    std::string msg = "invalid pose:";
    for (std::size_t i = 0; i < failed.size(); ++i)
        msg += (i == 0 ? " " : "; ") + failed[i];
    throw ValidationError("pose", msg);
}

/// Builds a validated 6-DOF pose with image-plane translation.
inline PoseRTS make_pose(const Eigen::Matrix3d& rotation, double tx, double ty, double scale)
{
    PoseRTS p{rotation, Eigen::Vector3d(tx, ty, 0.0), scale};
    validate_pose(p, true);
    return p;
}

/// R = Rz(roll) * Ry(yaw) * Rx(pitch), angles in radians.
inline Eigen::Matrix3d euler_to_rotation(double yaw, double pitch, double roll)
{
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cr = std::cos(roll), sr = std::sin(roll);
    Eigen::Matrix3d rx, ry, rz;
    rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
    return rz * ry * rx;
}

inline Eigen::Matrix3d rotation_z(double angle) { return euler_to_rotation(0.0, 0.0, angle); }

inline PoseMatrix pose_to_matrix(const PoseRTS& p)
{
    validate_pose(p);
    PoseMatrix m;
    m.leftCols<3>() = p.scale * p.rotation;
    m.col(3) = p.translation;
    return m;
}

/**
 * Inverse of pose_to_matrix.
 *
 * The scale is the mean column norm of the left block and R is that block
 * divided by the scale. The result is validated, so a block that is not a
 * scaled rotation is rejected.
 */
inline PoseRTS matrix_to_pose(const PoseMatrix& m)
{
    const Eigen::Matrix3d block = m.leftCols<3>();
    const double s = (block.col(0).norm() + block.col(1).norm() + block.col(2).norm()) / 3.0;
    PoseRTS p{block / s, m.col(3), s};
    validate_pose(p);
    return p;
}

/// x -> a(b(x)).
inline PoseRTS pose_compose(const PoseRTS& a, const PoseRTS& b)
{
    return {a.rotation * b.rotation, a.scale * (a.rotation * b.translation) + a.translation, a.scale * b.scale};
}

inline PoseRTS pose_invert(const PoseRTS& p)
{
    const Eigen::Matrix3d rt = p.rotation.transpose();
    const double inv_s = 1.0 / p.scale;
    return {rt, -inv_s * (rt * p.translation), inv_s};
}

/// The transform that carries the source pose onto the driving pose: driving * source^-1.
inline PoseRTS relative_pose(const PoseRTS& source, const PoseRTS& driving)
{
    return pose_compose(driving, pose_invert(source));
}

/// Largest absolute entry difference between the [sR | t] matrices of two poses.
inline double pose_distance(const PoseRTS& a, const PoseRTS& b)
{
    PoseMatrix ma, mb;
    ma.leftCols<3>() = a.scale * a.rotation;
    ma.col(3) = a.translation;
    mb.leftCols<3>() = b.scale * b.rotation;
    mb.col(3) = b.translation;
    return (ma - mb).cwiseAbs().maxCoeff();
}

} // namespace dexp
