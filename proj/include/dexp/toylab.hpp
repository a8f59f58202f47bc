#pragma once

#include "dexp/augment.hpp"
#include "dexp/conditioning.hpp"
#include "dexp/core/rng.hpp"
#include "dexp/core/sampling.hpp"
#include "dexp/core/tensor.hpp"
#include "dexp/pose.hpp"
#include "dexp/raymap.hpp"
#include "dexp/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dexp::toylab {

/// Planar pose and a two-parameter expression of the synthetic face.
struct ToyFactors
{
    double theta = 0.0; ///< in-plane rotation, radians
    double tx = 0.0;    ///< normalized image units
    double ty = 0.0;
    double scale = 1.0;
    double eye_open = 1.0;   ///< [0, 1]
    double mouth_curve = 0.0; ///< [-1, 1], positive is a smile
};

inline void validate_factors(const ToyFactors& f)
{
    if (!(f.scale > 0.0) || !std::isfinite(f.scale))
        throw ValidationError("toylab", "scale must be positive");
    if (!(f.eye_open >= 0.0 && f.eye_open <= 1.0))
        throw ValidationError("toylab", "eye_open must lie in [0,1]");
    if (!(f.mouth_curve >= -1.0 && f.mouth_curve <= 1.0))
        throw ValidationError("toylab", "mouth_curve must lie in [-1,1]");
    if (!std::isfinite(f.theta) || !std::isfinite(f.tx) || !std::isfinite(f.ty))
        throw ValidationError("toylab", "pose factors must be finite");
}

/// The factors' pose as a 6-DOF head pose (rotation about the viewing axis).
inline PoseRTS factors_pose(const ToyFactors& f) { return make_pose(rotation_z(f.theta), f.tx, f.ty, f.scale); }

/*
 * Face geometry in canonical units (before the pose similarity), y down.
 */
namespace geometry {
inline constexpr double head_a = 0.42, head_b = 0.52;
inline constexpr double eye_x = 0.17, eye_y = -0.12, eye_a = 0.085, eye_b = 0.055;
inline constexpr double nose_y = 0.06, nose_a = 0.03, nose_b = 0.05;
inline constexpr double mouth_y = 0.24, mouth_half_len = 0.18, mouth_depth = 0.07, mouth_half_thickness = 0.022;
inline constexpr int contour_points = 16;

inline double mouth_center_y(double x, double curve)
{
    const double r = x / mouth_half_len;
    return mouth_y + mouth_depth * curve * (1.0 - r * r);
}
} // namespace geometry

namespace shading {
inline constexpr double background = 0.1, skin = 0.75, feature = 0.25, nose = 0.55;
}

struct ToyRender
{
    Tensor image; ///< [1,size,size]
    LandmarkSet landmarks;
    std::map<std::string, BBox> regions; ///< ink extent of "left_eye", "right_eye", "mouth", pixels
};

namespace detail {

/// Signed distance (approximate, first order) to an axis-aligned ellipse centered at the origin.
inline double ellipse_sdf(double x, double y, double a, double b)
{
    const double k = std::hypot(x / a, y / b);
    if (k < 1e-12)
        return -std::min(a, b);
    const double grad = std::hypot(x / (a * a), y / (b * b)) / k;
    return (k - 1.0) / grad;
}

inline double mouth_sdf(double x, double y, double curve)
{
    using namespace geometry;
    if (std::abs(x) <= mouth_half_len)
    {
        const double slope = -2.0 * mouth_depth * curve * x / (mouth_half_len * mouth_half_len);
        return std::abs(y - mouth_center_y(x, curve)) / std::sqrt(1.0 + slope * slope) - mouth_half_thickness;
    }
    const double ex = std::copysign(mouth_half_len, x);
    return std::hypot(x - ex, y - mouth_center_y(ex, curve)) - mouth_half_thickness;
}

inline double coverage(double sdf_pixels) { return std::clamp(0.5 - sdf_pixels, 0.0, 1.0); }

/// AABB half extents of an ellipse with semi-axes (a, b) rotated by theta.
inline std::pair<double, double> rotated_ellipse_extent(double a, double b, double theta)
{
    const double c = std::cos(theta), s = std::sin(theta);
    return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
}

} // namespace detail

/**
 * Maps canonical face coordinates to pixel coordinates of a size x size image
 * for the given pose factors.
 */
struct FaceFrame
{
    ToyFactors f;
    double size;

    std::pair<double, double> to_pixels(double cx, double cy) const
    {
        const double c = std::cos(f.theta), s = std::sin(f.theta);
        const double u = f.scale * (c * cx - s * cy) + f.tx;
        const double v = f.scale * (s * cx + c * cy) + f.ty;
        return {(u + 1.0) * 0.5 * size, (v + 1.0) * 0.5 * size};
    }

    double pixels_per_unit() const { return f.scale * 0.5 * size; }
};

/// Landmarks of the face in canonical units (identity pose).
inline std::vector<Landmark> canonical_points(double eye_open, double mouth_curve)
{
    using namespace geometry;
    std::vector<Landmark> pts;
    for (int k = 0; k < contour_points; ++k)
    {
        const double a = 2.0 * std::numbers::pi * k / contour_points;
        char name[32];
        std::snprintf(name, sizeof(name), "contour_%02d", k);
        pts.push_back({name, head_a * std::sin(a), -head_b * std::cos(a)});
    }
    for (const auto& [side, sx] : {std::pair<std::string, double>{"left_eye", -1.0}, {"right_eye", 1.0}})
    {
        const double ex = sx * eye_x, hb = eye_b * eye_open;
        pts.push_back({side + "_outer", ex + sx * eye_a, eye_y});
        pts.push_back({side + "_inner", ex - sx * eye_a, eye_y});
        pts.push_back({side + "_top", ex, eye_y - hb});
        pts.push_back({side + "_bottom", ex, eye_y + hb});
    }
    pts.push_back({"nose_bridge", 0.0, nose_y - nose_b});
    pts.push_back({"nose_tip", 0.0, nose_y + nose_b});
    for (const auto& [name, x] : {std::pair<std::string, double>{"mouth_left", -mouth_half_len},
                                  {"mouth_left_mid", -0.5 * mouth_half_len},
                                  {"mouth_center", 0.0},
                                  {"mouth_right_mid", 0.5 * mouth_half_len},
                                  {"mouth_right", mouth_half_len}})
        pts.push_back({name, x, mouth_center_y(x, mouth_curve)});
    return pts;
}

inline std::map<std::string, std::vector<std::size_t>> landmark_groups(const std::vector<Landmark>& pts)
{
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        const auto& n = pts[i].name;
        if (n.rfind("contour_", 0) == 0)
            groups["contour"].push_back(i);
        else if (n.rfind("left_eye", 0) == 0)
            groups["left_eye"].push_back(i);
        else if (n.rfind("right_eye", 0) == 0)
            groups["right_eye"].push_back(i);
        else if (n.rfind("mouth", 0) == 0)
            groups["mouth"].push_back(i);
        else if (n.rfind("nose", 0) == 0)
            groups["nose"].push_back(i);
    }
    return groups;
}

/**
 * Reference layout for landmark metrics: the canonical landmarks of a
 * neutral face (eye_open 0.5, mouth_curve 0) in canonical units.
 */
inline LandmarkSet reference_landmarks()
{
    LandmarkSet lm;
    lm.points = canonical_points(0.5, 0.0);
    lm.groups = landmark_groups(lm.points);
    lm.bbox = {-geometry::head_a, -geometry::head_b, 2 * geometry::head_a, 2 * geometry::head_b};
    return lm;
}

/// Landmarks and face box of the given factors in pixels of a size x size image.
inline LandmarkSet face_landmarks(const ToyFactors& f, std::size_t size)
{
    const FaceFrame frame{f, static_cast<double>(size)};
    LandmarkSet lm;
    lm.points = canonical_points(f.eye_open, f.mouth_curve);
    for (auto& p : lm.points)
        std::tie(p.x, p.y) = frame.to_pixels(p.x, p.y);
    lm.groups = landmark_groups(lm.points);
    const auto [hx, hy] = detail::rotated_ellipse_extent(geometry::head_a, geometry::head_b, f.theta);
    const auto [cx, cy] = frame.to_pixels(0.0, 0.0);
    const double k = frame.pixels_per_unit();
    lm.bbox = {cx - hx * k, cy - hy * k, 2 * hx * k, 2 * hy * k};
    return lm;
}

/**
 * Renders the synthetic face: a skin ellipse, two eye ellipses whose height
 * scales with eye_open, a nose and a mouth arc bent by mouth_curve, all
 * posed by the similarity (theta, t, scale). Edges are anti-aliased with a
 * one-pixel linear ramp of the signed distance.
 */
inline ToyRender render_face(const ToyFactors& f, std::size_t size = 64)
{
    using namespace geometry;
    validate_factors(f);
    if (size < 32)
        throw ValidationError("toylab", "render size must be at least 32, got " + std::to_string(size));
    const double n = static_cast<double>(size);
    const FaceFrame frame{f, n};
    const double ppu = frame.pixels_per_unit();
    const double c = std::cos(f.theta), s = std::sin(f.theta);
    ToyRender out{Tensor({1, size, size}), face_landmarks(f, size), {}};
    for (std::size_t j = 0; j < size; ++j)
    {
        for (std::size_t i = 0; i < size; ++i)
        {
            // back to canonical coordinates
            const double u = cell_center(i, size) - f.tx, v = cell_center(j, size) - f.ty;
            const double x = (c * u + s * v) / f.scale, y = (-s * u + c * v) / f.scale;
            double value = shading::background;
            const double head = detail::coverage(detail::ellipse_sdf(x, y, head_a, head_b) * ppu);
            value += head * (shading::skin - value);
            const double nose = detail::coverage(detail::ellipse_sdf(x, y - nose_y, nose_a, nose_b) * ppu);
            value += nose * (shading::nose - value);
            if (f.eye_open > 0.0)
            {
                for (double sx : {-1.0, 1.0})
                {
                    const double eye = detail::coverage(
                        detail::ellipse_sdf(x - sx * eye_x, y - eye_y, eye_a, eye_b * f.eye_open) * ppu);
                    value += eye * (shading::feature - value);
                }
            }
            const double mouth = detail::coverage(detail::mouth_sdf(x, y, f.mouth_curve) * ppu);
            value += mouth * (shading::feature - value);
            out.image(0, j, i) = value;
        }
    }
    // Ink extents, including the half-pixel anti-aliasing ramp.
    const double aa = 0.5;
    for (const auto& [name, sx] : {std::pair<std::string, double>{"left_eye", -1.0}, {"right_eye", 1.0}})
    {
        const auto [hx, hy] = detail::rotated_ellipse_extent(eye_a, eye_b * f.eye_open, f.theta);
        const auto [cx, cy] = frame.to_pixels(sx * eye_x, eye_y);
        out.regions[name] = {cx - hx * ppu - aa, cy - hy * ppu - aa, 2 * (hx * ppu + aa), 2 * (hy * ppu + aa)};
    }
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (int k = 0; k <= 256; ++k)
    {
        const double mx = -mouth_half_len + 2.0 * mouth_half_len * k / 256.0;
        const auto [px, py] = frame.to_pixels(mx, mouth_center_y(mx, f.mouth_curve));
        x0 = std::min(x0, px);
        y0 = std::min(y0, py);
        x1 = std::max(x1, px);
        y1 = std::max(y1, py);
    }
    const double pad = mouth_half_thickness * ppu + aa;
    out.regions["mouth"] = {x0 - pad, y0 - pad, x1 - x0 + 2 * pad, y1 - y0 + 2 * pad};
    return out;
}

/// Image in [0,1] to the zero-centered data space the diffusion runs in, and back.
inline Tensor to_data_space(const Tensor& img) { return axpby(2.0, img, 0.0, img) - Tensor(img.shape(), 1.0); }
inline Tensor from_data_space(const Tensor& z)
{
    Tensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = 0.5 * (z[i] + 1.0);
    return out;
}

/**
 * Exact noise prediction for a discrete data distribution.
 *
 * With items x_i (uniform prior) and z_t = sqrt(a) x + sqrt(1-a) eps, the
 * posterior mean is x_bar = sum_i w_i x_i with
 * w_i ∝ exp(-|z_t - sqrt(a) x_i|^2 / (2 (1-a))), and the returned estimate is
 * (z_t - sqrt(a) x_bar) / sqrt(1-a). Weights are normalized by log-sum-exp.
 */
inline Tensor oracle_epsilon(const Tensor& z, std::span<const Tensor* const> items, std::size_t t,
                             const NoiseSchedule& schedule)
{
    if (items.empty())
        throw ValidationError("oracle", "oracle denoiser: the conditioned subset is empty");
    if (t == 0)
        throw ValidationError("oracle", "oracle denoiser needs t >= 1");
    const double a = schedule.alpha_bar(t), sa = std::sqrt(a), var = 1.0 - a;
    std::vector<double> logw(items.size());
    for (std::size_t k = 0; k < items.size(); ++k)
    {
        z.require_same_shape(*items[k], "oracle item");
        double d2 = 0.0;
        const auto x = items[k]->data();
        for (std::size_t i = 0; i < z.size(); ++i)
        {
            const double d = z[i] - sa * x[i];
            d2 += d * d;
        }
        logw[k] = -d2 / (2.0 * var);
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (auto& lw : logw)
    {
        lw = std::exp(lw - mx);
        total += lw;
    }
    Tensor mean(z.shape());
    for (std::size_t k = 0; k < items.size(); ++k)
    {
        const double w = logw[k] / total;
        if (w == 0.0)
            continue;
        const auto x = items[k]->data();
        for (std::size_t i = 0; i < z.size(); ++i)
            mean[i] += w * x[i];
    }
    Tensor eps(z.shape());
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < z.size(); ++i)
        eps[i] = (z[i] - sa * mean[i]) * inv;
    return eps;
}

inline Tensor oracle_epsilon(const Tensor& z, const std::vector<Tensor>& items, std::size_t t,
                             const NoiseSchedule& schedule)
{
    std::vector<const Tensor*> ptrs;
    for (const auto& x : items)
        ptrs.push_back(&x);
    return oracle_epsilon(z, std::span<const Tensor* const>(ptrs), t, schedule);
}

/// Expression factors packed into the first two latent entries; the rest stay zero.
inline ExpressionLatent encode_expression(const ToyFactors& f)
{
    ExpressionLatent z = ExpressionLatent::zeros();
    z.values[0] = f.eye_open;
    z.values[1] = f.mouth_curve;
    return z;
}

struct PoseCell
{
    double theta;
    double tx;
};

struct ExpressionCell
{
    double eye_open;
    double mouth_curve;
};

/**
 * Factor grid: pose cells (theta x tx) times expression cells. Every cell
 * is rendered once at its center factors.
 */
struct LabConfig
{
    std::size_t size = 64;
    std::vector<double> thetas{-20.0 * std::numbers::pi / 180.0, 0.0, 20.0 * std::numbers::pi / 180.0};
    std::vector<double> txs{-0.15, 0.0, 0.15};
    std::vector<ExpressionCell> expressions{{1.0, 0.8}, {0.5, 0.0}, {0.0, -0.8}};
    std::size_t raymap_size = 16;
};

struct LabItem
{
    ToyFactors factors;
    std::size_t pose_cell = 0;
    std::size_t expression_cell = 0;
    Tensor data; ///< render in data space, [1,size,size]
};

struct SamplingReport
{
    std::size_t nearest = 0; ///< dataset index of the nearest neighbour
    ToyFactors nearest_factors;
    double nearest_distance = 0.0; ///< RMS distance in image units
    std::size_t target_pose_cell = 0;
    std::size_t target_expression_cell = 0;
    bool pose_match = false;
    bool expression_match = false;
    bool success = false;
    std::vector<double> distances; ///< RMS distance to every dataset item
};

struct SamplingResult
{
    Tensor image; ///< [1,size,size] in [0,1] (unclamped)
    SamplingReport report;
};

/**
 * Synthetic lab: a rendered factor grid and its exact conditional denoiser.
 *
 * The pose slot of a condition set is decoded from the driving half of its
 * ray-map pair (homogeneous-w1 maps, so translation survives), the expression
 * slot from the packed latent; each is snapped to its grid cell and used to
 * filter the dataset. The identity slot does not filter: the lab has a single
 * identity.
 */
class ToyLab
{
public:
    explicit ToyLab(LabConfig config = {}, NoiseSchedule schedule = NoiseSchedule::scaled_linear())
        : config_(std::move(config)), schedule_(std::move(schedule))
    {
        if (config_.thetas.empty() || config_.txs.empty() || config_.expressions.empty())
            throw ValidationError("toylab", "factor grid must be non-empty on every axis");
        for (std::size_t p = 0; p < pose_cells(); ++p)
        {
            for (std::size_t e = 0; e < config_.expressions.size(); ++e)
            {
                ToyFactors f = cell_factors(p, e);
                items_.push_back({f, p, e, to_data_space(render_face(f, config_.size).image)});
            }
        }
    }

    const LabConfig& config() const { return config_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const std::vector<LabItem>& items() const { return items_; }
    std::size_t pose_cells() const { return config_.thetas.size() * config_.txs.size(); }
    std::size_t expression_cells() const { return config_.expressions.size(); }
    Shape sample_shape() const { return {1, config_.size, config_.size}; }

    ToyFactors cell_factors(std::size_t pose_cell, std::size_t expression_cell) const
    {
        ToyFactors f;
        f.theta = config_.thetas[pose_cell / config_.txs.size()];
        f.tx = config_.txs[pose_cell % config_.txs.size()];
        f.eye_open = config_.expressions[expression_cell].eye_open;
        f.mouth_curve = config_.expressions[expression_cell].mouth_curve;
        return f;
    }

    /// Grid cell of a pose; throws if the pose is outside every cell.
    std::size_t pose_cell_of(double theta, double tx, double ty = 0.0, double scale = 1.0) const
    {
        const std::size_t ti = nearest_index(config_.thetas, theta, "theta");
        const std::size_t xi = nearest_index(config_.txs, tx, "tx");
        if (std::abs(ty) > 1e-6 || std::abs(scale - 1.0) > 1e-6)
            throw ValidationError("toylab", "missing grid cell: the pose grid has ty = 0 and scale = 1");
        return ti * config_.txs.size() + xi;
    }

    std::size_t expression_cell_of(double eye_open, double mouth_curve) const
    {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < config_.expressions.size(); ++e)
        {
            const double d = std::hypot(eye_open - config_.expressions[e].eye_open,
                                        mouth_curve - config_.expressions[e].mouth_curve);
            if (d < best_d)
            {
                best_d = d;
                best = e;
            }
        }
        if (best_d > 1e-6)
            throw ValidationError("toylab", "missing grid cell: expression (" + std::to_string(eye_open) + ", " +
                                                std::to_string(mouth_curve) + ") is not on the grid");
        return best;
    }

    /// Conditions for reenacting `source` with the pose of `pose_drive` and the expression of `exp_drive`.
    ConditionSet conditions(const ToyFactors& source, const ToyFactors& pose_drive, const ToyFactors& exp_drive) const
    {
        ConditionSet c;
        c.identity = render_face(source, config_.size).image;
        const PoseRTS ps = factors_pose(source), pd = factors_pose(pose_drive);
        c.pose = PoseCondition{raymap_pair(ps, pd, config_.raymap_size, config_.raymap_size, RaymapMode::homogeneous_w1),
                               relative_pose(ps, pd)};
        c.expression = encode_expression(exp_drive);
        return c;
    }

    /// Dataset items admitted by a condition set.
    std::vector<const Tensor*> filter(const ConditionSet& c) const
    {
        std::optional<std::size_t> pose_cell, exp_cell;
        if (c.pose)
        {
            const Tensor& maps = c.pose->raymaps;
            if (maps.rank() != 3 || maps.extent(0) != 6)
                throw ShapeError("toylab: pose condition must hold a [6,H,W] ray-map pair");
            const std::size_t plane = maps.extent(1) * maps.extent(2);
            Tensor driving({3, maps.extent(1), maps.extent(2)},
                           std::vector<double>(maps.data().begin() + 3 * plane, maps.data().end()));
            const PoseRTS p = fit_raymap_pose(driving);
            pose_cell = pose_cell_of(std::atan2(p.rotation(1, 0), p.rotation(0, 0)), p.translation.x(),
                                     p.translation.y(), p.scale);
        }
        if (c.expression)
            exp_cell = expression_cell_of(c.expression->values.at(0), c.expression->values.at(1));
        std::vector<const Tensor*> subset;
        for (const auto& item : items_)
        {
            if (pose_cell && item.pose_cell != *pose_cell)
                continue;
            if (exp_cell && item.expression_cell != *exp_cell)
                continue;
            subset.push_back(&item.data);
        }
        return subset;
    }

    /// The exact conditional noise predictor; satisfies the Denoiser concept.
    auto denoiser() const
    {
        return [this](const Tensor& z, const ConditionSet& c, const DenoiseStep& s) {
            const auto subset = filter(c);
            return oracle_epsilon(z, std::span<const Tensor* const>(subset), s.timestep, schedule_);
        };
    }

    SamplingReport nearest_report(const Tensor& data, std::size_t pose_cell, std::size_t exp_cell) const
    {
        SamplingReport r;
        r.target_pose_cell = pose_cell;
        r.target_expression_cell = exp_cell;
        r.nearest_distance = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < items_.size(); ++k)
        {
            // data space spans twice the image range
            const double d = 0.5 * rmse(data, items_[k].data);
            r.distances.push_back(d);
            if (d < r.nearest_distance)
            {
                r.nearest_distance = d;
                r.nearest = k;
            }
        }
        r.nearest_factors = items_[r.nearest].factors;
        r.pose_match = items_[r.nearest].pose_cell == pose_cell;
        r.expression_match = items_[r.nearest].expression_cell == exp_cell;
        r.success = r.pose_match && r.expression_match;
        return r;
    }

    SamplingResult run(const ToyFactors& source, const ToyFactors& pose_drive, const ToyFactors& exp_drive,
                       const CfgSchedule& sched, std::uint64_t seed, const SamplerOptions& options = {}) const
    {
        const std::size_t pc = pose_cell_of(pose_drive.theta, pose_drive.tx, pose_drive.ty, pose_drive.scale);
        const std::size_t ec = expression_cell_of(exp_drive.eye_open, exp_drive.mouth_curve);
        return run_with(conditions(source, pose_drive, exp_drive), pc, ec, sched, seed, options);
    }

    SamplingResult run_with(const ConditionSet& c, std::size_t pose_cell, std::size_t exp_cell,
                            const CfgSchedule& sched, std::uint64_t seed, const SamplerOptions& options = {}) const
    {
        Rng rng(seed);
        const Tensor z = sample(denoiser(), c, sched, schedule_, sample_shape(), rng, options);
        return {from_data_space(z), nearest_report(z, pose_cell, exp_cell)};
    }

private:
    static std::size_t nearest_index(const std::vector<double>& grid, double value, const char* axis)
    {
        std::size_t best = 0;
        for (std::size_t k = 1; k < grid.size(); ++k)
            if (std::abs(grid[k] - value) < std::abs(grid[best] - value))
                best = k;
        if (std::abs(grid[best] - value) > 1e-6)
            throw ValidationError("toylab", std::string("missing grid cell: ") + axis + " = " + std::to_string(value) +
                                                " is not on the grid");
        return best;
    }

    LabConfig config_;
    NoiseSchedule schedule_;
    std::vector<LabItem> items_;
};

/// One disentangled reenactment on a default lab.
inline SamplingResult run_disentangled_sampling(const ToyFactors& source, const ToyFactors& pose_drive,
                                                const ToyFactors& exp_drive, const CfgSchedule& sched,
                                                std::uint64_t seed)
{
    const ToyLab lab;
    return lab.run(source, pose_drive, exp_drive, sched, seed);
}

struct ExperimentSummary
{
    std::size_t runs = 0;
    std::size_t successes = 0;
    std::size_t pose_matches = 0;
    std::size_t expression_matches = 0;
    double success_rate() const { return runs == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(runs); }
};

/**
 * Monte-Carlo disentanglement experiment: every run draws a source cell, a
 * pose-driving cell and an expression-driving cell, samples with the given
 * guidance and checks the nearest dataset neighbour's cell. Run k uses seed
 * derived from `seed` and k only.
 */
inline ExperimentSummary disentangled_experiment(const ToyLab& lab, std::size_t runs, std::uint64_t seed,
                                                 const CfgSchedule& sched = {}, const SamplerOptions& options = {})
{
    ExperimentSummary s;
    Rng picker(seed);
    for (std::size_t k = 0; k < runs; ++k)
    {
        const std::size_t src_p = picker.index(lab.pose_cells()), src_e = picker.index(lab.expression_cells());
        const std::size_t pc = picker.index(lab.pose_cells()), ec = picker.index(lab.expression_cells());
        const std::uint64_t run_seed = picker.next_u64();
        const auto result = lab.run(lab.cell_factors(src_p, src_e), lab.cell_factors(pc, 0), lab.cell_factors(0, ec),
                                    sched, run_seed, options);
        ++s.runs;
        s.successes += result.report.success ? 1 : 0;
        s.pose_matches += result.report.pose_match ? 1 : 0;
        s.expression_matches += result.report.expression_match ? 1 : 0;
    }
    return s;
}

} // namespace dexp::toylab
