#pragma once

#include "dexp/core/rng.hpp"
#include "dexp/core/sampling.hpp"
#include "dexp/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

namespace dexp {

/*
 * Images are [C,H,W] tensors with values in [0,1]. Pixel coordinates are
 * continuous: pixel column i covers [i, i+1), so its center is at i + 0.5.
 */

struct Landmark
{
    std::string name;
    double x = 0.0;
    double y = 0.0;
};

/// Axis-aligned box in pixel coordinates.
struct BBox
{
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
};

/**
 * Named facial landmarks with region groups and a face box.
 *
 * Groups are index lists into `points`. The pose augmentation reads the
 * groups "left_eye", "right_eye" and "mouth".
 */
struct LandmarkSet
{
    std::vector<Landmark> points;
    std::map<std::string, std::vector<std::size_t>> groups;
    BBox bbox;

    const Landmark* find(const std::string& name) const
    {
        for (const auto& p : points)
            if (p.name == name)
                return &p;
        return nullptr;
    }
};

inline const std::vector<std::string>& pose_mask_groups()
{
    static const std::vector<std::string> names{"left_eye", "right_eye", "mouth"};
    return names;
}

/// Clamps every point and the box into a width x height image; checks group indices.
inline void clamp_landmarks(LandmarkSet& lm, double width, double height)
{
    for (auto& p : lm.points)
    {
        p.x = std::clamp(p.x, 0.0, width);
        p.y = std::clamp(p.y, 0.0, height);
    }
    const double x1 = std::clamp(lm.bbox.x + lm.bbox.w, 0.0, width);
    const double y1 = std::clamp(lm.bbox.y + lm.bbox.h, 0.0, height);
    lm.bbox.x = std::clamp(lm.bbox.x, 0.0, width);
    lm.bbox.y = std::clamp(lm.bbox.y, 0.0, height);
    lm.bbox.w = std::max(0.0, x1 - lm.bbox.x);
    lm.bbox.h = std::max(0.0, y1 - lm.bbox.y);
    for (const auto& [name, idx] : lm.groups)
    {
        if (idx.empty())
            throw ValidationError("landmarks", "group '" + name + "' is empty");
        for (auto i : idx)
            if (i >= lm.points.size())
                throw ValidationError("landmarks", "group '" + name + "' references point " + std::to_string(i));
    }
}

/// Half-open pixel index range [col0, col1) x [row0, row1).
struct PixelRect
{
    long col0 = 0, col1 = 0, row0 = 0, row1 = 0;

    bool empty() const { return col1 <= col0 || row1 <= row0; }
    bool contains(long col, long row) const { return col >= col0 && col < col1 && row >= row0 && row < row1; }
};

/**
 * Pixels whose centers fall inside the bounding box of a landmark group
 * dilated by `pad` pixels (a negative pad shrinks it), clipped to the image.
 */
inline PixelRect group_rect(const LandmarkSet& lm, const std::string& group, double pad, std::size_t width,
                            std::size_t height)
{
    const auto it = lm.groups.find(group);
    if (it == lm.groups.end())
        throw ValidationError("landmarks", "missing landmark group '" + group + "'");
    if (it->second.empty())
        throw ValidationError("landmarks", "landmark group '" + group + "' is empty");
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (auto i : it->second)
    {
        if (i >= lm.points.size())
            throw ValidationError("landmarks", "group '" + group + "' references point " + std::to_string(i));
        const auto& p = lm.points[i];
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
    }
    x0 -= pad;
    y0 -= pad;
    x1 += pad;
    y1 += pad;
    // center c = i + 0.5 lies in [x0, x1]  <=>  i in [ceil(x0 - 0.5), floor(x1 - 0.5)]
    PixelRect r;
    r.col0 = std::max(0L, static_cast<long>(std::ceil(x0 - 0.5)));
    r.col1 = std::min(static_cast<long>(width), static_cast<long>(std::floor(x1 - 0.5)) + 1);
    r.row0 = std::max(0L, static_cast<long>(std::ceil(y0 - 0.5)));
    r.row1 = std::min(static_cast<long>(height), static_cast<long>(std::floor(y1 - 0.5)) + 1);
    return r;
}

inline void require_image(const Tensor& img, const char* what)
{
    if (img.rank() != 3)
        throw ShapeError(std::string(what) + ": image must be [C,H,W], got " + to_string(img.shape()));
}

/**
 * Covers the eye and mouth regions: the boxes of the "left_eye",
 * "right_eye" and "mouth" groups, dilated by `pad`, are filled with `cover`.
 */
inline Tensor mask_pose_regions(const Tensor& img, const LandmarkSet& lm, double pad, double cover = 0.5)
{
    require_image(img, "mask_pose_regions");
    const std::size_t channels = img.extent(0), height = img.extent(1), width = img.extent(2);
    Tensor out = img;
    for (const auto& group : pose_mask_groups())
    {
        const PixelRect r = group_rect(lm, group, pad, width, height);
        for (std::size_t ch = 0; ch < channels; ++ch)
            for (long row = r.row0; row < r.row1; ++row)
                for (long col = r.col0; col < r.col1; ++col)
                    out(ch, row, col) = cover;
    }
    return out;
}

/// Maps original pixel coordinates into the crop: p' = (p - origin) * scale.
struct CropTransform
{
    double origin_x = 0.0;
    double origin_y = 0.0;
    double scale = 1.0;

    Landmark apply(const Landmark& p) const { return {p.name, (p.x - origin_x) * scale, (p.y - origin_y) * scale}; }
};

struct CropOptions
{
    std::size_t size = 224;
    double margin = 0.1; ///< the square side is max(w, h) * (1 + margin)
    SampleOptions sampling{};
};

/// The square crop window used by crop_expression.
inline CropTransform crop_window(const BBox& bbox, const CropOptions& options = {})
{
    if (!(bbox.w > 0.0 && bbox.h > 0.0) || !std::isfinite(bbox.w) || !std::isfinite(bbox.h))
        throw ValidationError("crop", "face box must have positive area");
    const double side = std::max(bbox.w, bbox.h) * (1.0 + options.margin);
    return {bbox.cx() - 0.5 * side, bbox.cy() - 0.5 * side, static_cast<double>(options.size) / side};
}

/**
 * Crops the face box, expanded to a square about its center, and resizes it
 * bilinearly to options.size x options.size.
 */
inline Tensor crop_expression(const Tensor& img, const LandmarkSet& lm, const CropOptions& options = {})
{
    require_image(img, "crop_expression");
    if (options.size == 0)
        throw ValidationError("crop", "crop size must be positive");
    const CropTransform tf = crop_window(lm.bbox, options);
    const std::size_t channels = img.extent(0), n = options.size;
    Tensor out({channels, n, n});
    std::vector<double> px(channels);
    const double step = 1.0 / tf.scale;
    for (std::size_t j = 0; j < n; ++j)
    {
        const double row = tf.origin_y + (static_cast<double>(j) + 0.5) * step - 0.5;
        for (std::size_t i = 0; i < n; ++i)
        {
            const double col = tf.origin_x + (static_cast<double>(i) + 0.5) * step - 0.5;
            bilinear_at_index(img, col, row, px, options.sampling);
            for (std::size_t ch = 0; ch < channels; ++ch)
                out(ch, j, i) = px[ch];
        }
    }
    return out;
}

inline double degrees_to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

/**
 * Rotates image content by `degrees` about the image center.
 *
 * In pixel coordinates (x right, y down) a point p moves to
 * c + R(angle) (p - c) with R = [cos -sin; sin cos]; output pixels are
 * filled by bilinear inverse mapping.
 */
inline Tensor rotate_image(const Tensor& img, double degrees, const SampleOptions& fill = {})
{
    require_image(img, "rotate_image");
    const std::size_t channels = img.extent(0), height = img.extent(1), width = img.extent(2);
    const double a = degrees_to_radians(degrees);
    const double c = std::cos(a), s = std::sin(a);
    const double cx = 0.5 * static_cast<double>(width), cy = 0.5 * static_cast<double>(height);
    Tensor out(img.shape());
    std::vector<double> px(channels);
    for (std::size_t j = 0; j < height; ++j)
    {
        for (std::size_t i = 0; i < width; ++i)
        {
            const double dx = static_cast<double>(i) + 0.5 - cx, dy = static_cast<double>(j) + 0.5 - cy;
            // inverse rotation
            const double sx = cx + c * dx + s * dy, sy = cy - s * dx + c * dy;
            bilinear_at_index(img, sx - 0.5, sy - 0.5, px, fill);
            for (std::size_t ch = 0; ch < channels; ++ch)
                out(ch, j, i) = px[ch];
        }
    }
    return out;
}

/// Applies the rotate_image point map to landmarks; the box becomes the hull of its rotated corners.
inline LandmarkSet rotate_landmarks(const LandmarkSet& lm, double degrees, std::size_t width, std::size_t height)
{
    const double a = degrees_to_radians(degrees);
    const double c = std::cos(a), s = std::sin(a);
    const double cx = 0.5 * static_cast<double>(width), cy = 0.5 * static_cast<double>(height);
    auto rot = [&](double x, double y) {
        const double dx = x - cx, dy = y - cy;
        return std::pair{cx + c * dx - s * dy, cy + s * dx + c * dy};
    };
    LandmarkSet out = lm;
    for (auto& p : out.points)
        std::tie(p.x, p.y) = rot(p.x, p.y);
    const BBox& b = lm.bbox;
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (auto [px, py] : {std::pair{b.x, b.y}, std::pair{b.x + b.w, b.y}, std::pair{b.x, b.y + b.h},
                          std::pair{b.x + b.w, b.y + b.h}})
    {
        const auto [qx, qy] = rot(px, py);
        x0 = std::min(x0, qx);
        y0 = std::min(y0, qy);
        x1 = std::max(x1, qx);
        y1 = std::max(y1, qy);
    }
    out.bbox = {x0, y0, x1 - x0, y1 - y0};
    return out;
}

struct RotatedImage
{
    Tensor image;
    double degrees = 0.0;
};

/// Rotation by an angle drawn uniformly from [-max_degrees, max_degrees].
inline RotatedImage random_rotate(const Tensor& img, Rng& rng, double max_degrees, const SampleOptions& fill = {})
{
    if (!(max_degrees >= 0.0))
        throw ValidationError("augment", "max_degrees must be non-negative");
    const double angle = max_degrees == 0.0 ? 0.0 : rng.uniform(-max_degrees, max_degrees);
    return {rotate_image(img, angle, fill), angle};
}

} // namespace dexp
