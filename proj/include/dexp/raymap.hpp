#pragma once

#include "dexp/core/sampling.hpp"
#include "dexp/core/tensor.hpp"
#include "dexp/pose.hpp"

#include <Eigen/Dense>

#include <string>

namespace dexp {

/**
 * How the homogeneous weight of the pixel coordinate is chosen.
 *
 * `literal_w0` evaluates P [u, v, 0, 0]^T - [u, v, 0]^T: the weight is 0, so
 * the translation column drops out. `homogeneous_w1` uses weight 1 and
 * therefore adds t.
 */
enum class RaymapMode
{
    literal_w0,
    homogeneous_w1,
};

inline std::string to_string(RaymapMode mode) { return mode == RaymapMode::literal_w0 ? "w0" : "w1"; }

inline RaymapMode parse_raymap_mode(const std::string& s)
{
    if (s == "w0" || s == "literal-w0")
        return RaymapMode::literal_w0;
    if (s == "w1" || s == "homogeneous-w1")
        return RaymapMode::homogeneous_w1;
    throw ValidationError("raymap mode must be w0 or w1, got '" + s + "'");
}

/// Per-pixel displacement from the canonical pose. `data` is [3,H,W], channels (x, y, z).
struct RayMap
{
    std::size_t width = 0;
    std::size_t height = 0;
    RaymapMode mode = RaymapMode::literal_w0;
    Tensor data;
};

/**
 * Ray map of a head pose.
 *
 * Pixel (col i, row j) sits at u = cell_center(i, width), v = cell_center(j, height)
 * and stores s R [u, v, 0]^T (+ t in w1 mode) - [u, v, 0]^T.
 */
inline RayMap compute_raymap(const PoseRTS& p, std::size_t width, std::size_t height,
                             RaymapMode mode = RaymapMode::literal_w0)
{
    if (width == 0 || height == 0)
        throw ValidationError("raymap: image size must be at least 1x1, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    validate_pose(p);
    const Eigen::Matrix3d sr = p.scale * p.rotation;
    const Eigen::Vector3d offset = mode == RaymapMode::homogeneous_w1 ? p.translation : Eigen::Vector3d::Zero();
    RayMap map{width, height, mode, Tensor({3, height, width})};
    const std::size_t plane = width * height;
    auto out = map.data.data();
    for (std::size_t j = 0; j < height; ++j)
    {
        const double v = cell_center(j, height);
        for (std::size_t i = 0; i < width; ++i)
        {
            const double u = cell_center(i, width);
            const std::size_t k = j * width + i;
            out[k] = sr(0, 0) * u + sr(0, 1) * v + offset.x() - u;
            out[plane + k] = sr(1, 0) * u + sr(1, 1) * v + offset.y() - v;
            out[2 * plane + k] = sr(2, 0) * u + sr(2, 1) * v + offset.z();
        }
    }
    return map;
}

/// Source map followed by driving map along the channel axis: [6,H,W].
inline Tensor raymap_pair(const PoseRTS& source, const PoseRTS& driving, std::size_t width, std::size_t height,
                          RaymapMode mode = RaymapMode::literal_w0)
{
    return concat_leading(compute_raymap(source, width, height, mode).data,
                          compute_raymap(driving, width, height, mode).data);
}

/**
 * Recovers the pose encoded in a [3,H,W] ray map by a least-squares affine fit.
 *
 * The map is affine in (u, v): map + (u, v, 0) = s R[:, 0:2] (u, v) + c, so the
 * first two columns of s R and the offset c are fitted, s is their mean norm
 * and the third column of R is the cross product. In w0 mode c is zero by
 * construction and the returned translation is whatever the fit finds (≈ 0).
 * Needs at least a 2x2 map.
 */
inline PoseRTS fit_raymap_pose(const Tensor& map)
{
    if (map.rank() != 3 || map.extent(0) != 3)
        throw ShapeError("fit_raymap_pose: expected a [3,H,W] map, got " + to_string(map.shape()));
    const std::size_t height = map.extent(1), width = map.extent(2);
    if (width < 2 || height < 2)
        throw ShapeError("fit_raymap_pose: map must be at least 2x2");
    const std::size_t n = width * height;
    Eigen::MatrixXd design(n, 3);
    Eigen::MatrixXd target(n, 3);
    for (std::size_t j = 0; j < height; ++j)
    {
        const double v = cell_center(j, height);
        for (std::size_t i = 0; i < width; ++i)
        {
            const double u = cell_center(i, width);
            const std::size_t k = j * width + i;
            design.row(static_cast<Eigen::Index>(k)) << u, v, 1.0;
            target(static_cast<Eigen::Index>(k), 0) = map[k] + u;
            target(static_cast<Eigen::Index>(k), 1) = map[n + k] + v;
            target(static_cast<Eigen::Index>(k), 2) = map[2 * n + k];
        }
    }
    const Eigen::Matrix3d coef = design.colPivHouseholderQr().solve(target); // rows: d/du, d/dv, offset
    const Eigen::Vector3d c0 = coef.row(0).transpose();
    const Eigen::Vector3d c1 = coef.row(1).transpose();
    const double s = 0.5 * (c0.norm() + c1.norm());
    PoseRTS p;
    p.scale = s;
    p.rotation.col(0) = c0 / s;
    p.rotation.col(1) = c1 / s;
    p.rotation.col(2) = p.rotation.col(0).cross(p.rotation.col(1));
    p.translation = coef.row(2).transpose();
    return p;
}

/**
 * Maps a ray map to an RGB image in [0,1] for viewing.
 *
 * value -> 0.5 + 0.5 * value / extent, with extent the largest absolute entry
 * (1 for an all-zero map). Returns the extent through `extent_out`.
 */
inline Tensor raymap_to_rgb(const Tensor& map, double* extent_out = nullptr)
{
    double extent = 0.0;
    for (double v : map.data())
        extent = std::max(extent, std::abs(v));
    if (extent == 0.0)
        extent = 1.0;
    Tensor rgb(map.shape());
    for (std::size_t k = 0; k < map.size(); ++k)
        rgb[k] = 0.5 + 0.5 * map[k] / extent;
    if (extent_out)
        *extent_out = extent;
    return rgb;
}

} // namespace dexp
