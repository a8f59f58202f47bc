#pragma once

#include "dexp/augment.hpp"
#include "dexp/core/rng.hpp"
#include "dexp/core/sampling.hpp"
#include "dexp/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dexp {

/// Mean absolute difference.
inline double l1_loss(const Tensor& pred, const Tensor& gt)
{
    pred.require_same_shape(gt, "l1_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        s += std::abs(pred[i] - gt[i]);
    return s / static_cast<double>(pred.size());
}

/**
 * Maps an image to feature maps at decreasing resolution, each [K,h,w].
 * Must be deterministic.
 */
struct PerceptualFeatureExtractor
{
    std::string name;
    std::uint64_t seed = 0;
    std::function<std::vector<Tensor>(const Tensor&)> extract;

    std::vector<Tensor> operator()(const Tensor& img) const { return extract(img); }
};

/// 2x2 average pooling of a [C,H,W] tensor (odd trailing rows/columns are dropped).
inline Tensor avg_pool2(const Tensor& img)
{
    const std::size_t c = img.extent(0), h = img.extent(1) / 2, w = img.extent(2) / 2;
    if (h == 0 || w == 0)
        throw ShapeError("avg_pool2: image " + to_string(img.shape()) + " too small to pool");
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t i = 0; i < w; ++i)
                out(ch, j, i) = 0.25 * (img(ch, 2 * j, 2 * i) + img(ch, 2 * j, 2 * i + 1) + img(ch, 2 * j + 1, 2 * i) +
                                        img(ch, 2 * j + 1, 2 * i + 1));
    return out;
}

/**
 * Area-weighted resize of a [C,H,W] map to [C,h,w]: each output cell is the
 * mean of the input over the cell's footprint. Integer factors reduce to
 * plain block averaging.
 */
inline Tensor resize_area(const Tensor& img, std::size_t out_h, std::size_t out_w)
{
    const std::size_t c = img.extent(0), in_h = img.extent(1), in_w = img.extent(2);
    if (out_h == in_h && out_w == in_w)
        return img;
    auto overlaps = [](std::size_t n_in, std::size_t n_out) {
        // For each output cell, (input index, overlap length in input units).
        std::vector<std::vector<std::pair<std::size_t, double>>> taps(n_out);
        const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
        for (std::size_t o = 0; o < n_out; ++o)
        {
            const double lo = static_cast<double>(o) * ratio, hi = lo + ratio;
            for (auto i = static_cast<std::size_t>(std::floor(lo)); i < n_in && static_cast<double>(i) < hi; ++i)
            {
                const double len = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
                if (len > 0.0)
                    taps[o].emplace_back(i, len / ratio);
            }
        }
        return taps;
    };
    const auto ty = overlaps(in_h, out_h), tx = overlaps(in_w, out_w);
    Tensor out({c, out_h, out_w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < out_h; ++j)
            for (std::size_t i = 0; i < out_w; ++i)
            {
                double acc = 0.0;
                for (auto [y, wy] : ty[j])
                    for (auto [x, wx] : tx[i])
                        acc += wy * wx * img(ch, y, x);
                out(ch, j, i) = acc;
            }
    return out;
}

namespace detail {

/// 3x3 convolution with zero padding, weights [K, C, 3, 3].
inline Tensor conv3x3(const Tensor& img, const Tensor& weights)
{
    const std::size_t c = img.extent(0), h = img.extent(1), w = img.extent(2), k = weights.extent(0);
    Tensor out({k, h, w});
    for (std::size_t o = 0; o < k; ++o)
        for (std::size_t j = 0; j < h; ++j)
            for (std::size_t i = 0; i < w; ++i)
            {
                double acc = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                        {
                            const long y = static_cast<long>(j) + dy, x = static_cast<long>(i) + dx;
                            if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w))
                                continue;
                            acc += weights(o, ch, dy + 1, dx + 1) * img(ch, y, x);
                        }
                out(o, j, i) = acc;
            }
    return out;
}

} // namespace detail

/**
 * Stand-in for a pretrained perceptual network: a pyramid of fixed random
 * 3x3 projections.
 *
 * Level 0 convolves the image, level l convolves the image average-pooled l
 * times. Weights are N(0, 1/(9 C)) drawn from `seed`, the level and the input
 * channel count, so the extractor accepts any channel count.
 */
inline PerceptualFeatureExtractor random_projection_pyramid(std::uint64_t seed = 1234, std::size_t levels = 3,
                                                            std::size_t features = 8)
{
    PerceptualFeatureExtractor fx;
    fx.name = "random-projection-pyramid";
    fx.seed = seed;
    fx.extract = [seed, levels, features](const Tensor& img) {
        require_image(img, "perceptual features");
        const std::size_t c = img.extent(0);
        std::vector<Tensor> out;
        Tensor level = img;
        for (std::size_t l = 0; l < levels; ++l)
        {
            if (l > 0)
                level = avg_pool2(level);
            Rng rng(seed * 1000003ULL + l * 7919ULL + c);
            Tensor w = randn(rng, {features, c, 3, 3});
            w *= 1.0 / std::sqrt(9.0 * static_cast<double>(c));
            out.push_back(detail::conv3x3(level, w));
        }
        return out;
    };
    return fx;
}

/**
 * sum over layers of mean((M_i * (f_i(pred) - f_i(gt)))^2).
 *
 * The optional [1,H,W] mask is area-averaged down to each layer's resolution
 * and broadcast over the feature channels.
 */
inline double perceptual_distance(const Tensor& pred, const Tensor& gt, const PerceptualFeatureExtractor& fx,
                                  const std::optional<Tensor>& mask = std::nullopt)
{
    pred.require_same_shape(gt, "perceptual_distance");
    require_image(pred, "perceptual_distance");
    if (mask && (mask->rank() != 3 || mask->extent(0) != 1 || mask->extent(1) != pred.extent(1) ||
                 mask->extent(2) != pred.extent(2)))
        throw ShapeError("perceptual_distance: mask " + to_string(mask->shape()) + " does not match image " +
                         to_string(pred.shape()));
    const auto fp = fx(pred), fg = fx(gt);
    if (fp.size() != fg.size() || fp.empty())
        throw ValidationError("perceptual extractor returned inconsistent layer counts");
    double total = 0.0;
    for (std::size_t l = 0; l < fp.size(); ++l)
    {
        fp[l].require_same_shape(fg[l], "perceptual layer");
        const std::size_t k = fp[l].extent(0), h = fp[l].extent(1), w = fp[l].extent(2);
        std::optional<Tensor> m;
        if (mask)
            m = resize_area(*mask, h, w);
        double s = 0.0;
        for (std::size_t ch = 0; ch < k; ++ch)
            for (std::size_t j = 0; j < h; ++j)
                for (std::size_t i = 0; i < w; ++i)
                {
                    double d = fp[l](ch, j, i) - fg[l](ch, j, i);
                    if (m)
                        d *= (*m)(0, j, i);
                    s += d * d;
                }
        total += s / static_cast<double>(fp[l].size());
    }
    return total;
}

/// Non-saturating generator loss softplus(-d), stable for large |d|.
inline double adversarial_softplus(double d_out)
{
    const double x = -d_out;
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

struct LossWeights
{
    double reconstruction = 10.0;
    double lpips = 1.0;
    double clpips = 100.0;
};

struct LossBreakdown
{
    double l1 = 0.0;
    double lpips = 0.0;
    double clpips = 0.0;
    double adversarial = 0.0;
    double total = 0.0;
};

/**
 * Motion-trainer objective:
 * w_r * L1 + w_lpips * L_lpips + w_clpips * L_clpips(mask) + softplus(-d_out).
 * Without a discriminator output the adversarial term is omitted.
 */
inline LossBreakdown total_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                                const PerceptualFeatureExtractor& fx, std::optional<double> d_out,
                                const LossWeights& weights = {})
{
    LossBreakdown b;
    b.l1 = l1_loss(pred, gt);
    b.lpips = perceptual_distance(pred, gt, fx);
    b.clpips = perceptual_distance(pred, gt, fx, mask);
    b.adversarial = d_out ? adversarial_softplus(*d_out) : 0.0;
    b.total = weights.reconstruction * b.l1 + weights.lpips * b.lpips + weights.clpips * b.clpips + b.adversarial;
    return b;
}

inline double mse(const Tensor& a, const Tensor& b)
{
    a.require_same_shape(b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

/// 10 log10(peak^2 / MSE); +infinity for identical inputs.
inline double psnr(const Tensor& pred, const Tensor& gt, double peak = 1.0)
{
    const double m = mse(pred, gt);
    if (m == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

struct SsimOptions
{
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

namespace detail {

/// Valid-mode separable filtering of one [H,W] plane with a symmetric kernel.
inline std::vector<double> filter_valid(std::span<const double> plane, std::size_t h, std::size_t w,
                                        const std::vector<double>& g)
{
    const std::size_t n = g.size(), oh = h - n + 1, ow = w - n + 1;
    std::vector<double> tmp(h * ow);
    for (std::size_t j = 0; j < h; ++j)
        for (std::size_t i = 0; i < ow; ++i)
        {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                acc += g[k] * plane[j * w + i + k];
            tmp[j * ow + i] = acc;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t j = 0; j < oh; ++j)
        for (std::size_t i = 0; i < ow; ++i)
        {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                acc += g[k] * tmp[(j + k) * ow + i];
            out[j * ow + i] = acc;
        }
    return out;
}

} // namespace detail

/**
 * Structural similarity with a Gaussian window, averaged over all valid
 * window positions and over channels.
 */
inline double ssim(const Tensor& pred, const Tensor& gt, const SsimOptions& options = {})
{
    pred.require_same_shape(gt, "ssim");
    require_image(pred, "ssim");
    const std::size_t c = pred.extent(0), h = pred.extent(1), w = pred.extent(2);
    if (h < options.window || w < options.window)
        throw ValidationError("ssim", "image " + std::to_string(w) + "x" + std::to_string(h) +
                                          " is smaller than the " + std::to_string(options.window) + "px window");
    const auto g = gaussian_kernel(options.window, options.sigma);
    const double c1 = (options.k1 * options.peak) * (options.k1 * options.peak);
    const double c2 = (options.k2 * options.peak) * (options.k2 * options.peak);
    const std::size_t plane = h * w;
    double total = 0.0;
    std::size_t count = 0;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t ch = 0; ch < c; ++ch)
    {
        const auto x = pred.data().subspan(ch * plane, plane);
        const auto y = gt.data().subspan(ch * plane, plane);
        for (std::size_t k = 0; k < plane; ++k)
        {
            xx[k] = x[k] * x[k];
            yy[k] = y[k] * y[k];
            xy[k] = x[k] * y[k];
        }
        const auto mx = detail::filter_valid(x, h, w, g);
        const auto my = detail::filter_valid(y, h, w, g);
        const auto sxx = detail::filter_valid(xx, h, w, g);
        const auto syy = detail::filter_valid(yy, h, w, g);
        const auto sxy = detail::filter_valid(xy, h, w, g);
        for (std::size_t k = 0; k < mx.size(); ++k)
        {
            const double vx = sxx[k] - mx[k] * mx[k];
            const double vy = syy[k] - my[k] * my[k];
            const double cov = sxy[k] - mx[k] * my[k];
            const double num = (2.0 * mx[k] * my[k] + c1) * (2.0 * cov + c2);
            const double den = (mx[k] * mx[k] + my[k] * my[k] + c1) * (vx + vy + c2);
            total += num / den;
        }
        count += mx.size();
    }
    return total / static_cast<double>(count);
}

/**
 * 2D similarity x -> scale * R(angle) * x + (tx, ty).
 */
struct Similarity2D
{
    double angle = 0.0;
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;

    std::pair<double, double> apply(double x, double y) const
    {
        const double c = std::cos(angle), s = std::sin(angle);
        return {scale * (c * x - s * y) + tx, scale * (s * x + c * y) + ty};
    }

    std::pair<double, double> apply_inverse(double x, double y) const
    {
        const double c = std::cos(angle), s = std::sin(angle);
        const double dx = x - tx, dy = y - ty;
        return {(c * dx + s * dy) / scale, (-s * dx + c * dy) / scale};
    }
};

/// Point pairs (a_i, b_i) for every landmark name present in both sets, ordered by name.
inline std::vector<std::pair<Landmark, Landmark>> match_landmarks(const LandmarkSet& a, const LandmarkSet& b)
{
    std::vector<std::pair<Landmark, Landmark>> pairs;
    for (const auto& p : a.points)
        if (const Landmark* q = b.find(p.name))
            pairs.emplace_back(p, *q);
    std::sort(pairs.begin(), pairs.end(), [](const auto& l, const auto& r) { return l.first.name < r.first.name; });
    return pairs;
}

/**
 * Least-squares similarity carrying `from` onto `to` (closed-form 2D
 * Procrustes with scale). Needs at least 3 common landmarks.
 */
inline Similarity2D fit_similarity(const LandmarkSet& from, const LandmarkSet& to)
{
    const auto pairs = match_landmarks(from, to);
    if (pairs.size() < 3)
        throw ValidationError("landmarks", "similarity fit needs at least 3 common landmarks, got " +
                                               std::to_string(pairs.size()));
    const double n = static_cast<double>(pairs.size());
    double fx = 0, fy = 0, tx = 0, ty = 0;
    for (const auto& [f, t] : pairs)
    {
        fx += f.x;
        fy += f.y;
        tx += t.x;
        ty += t.y;
    }
    fx /= n;
    fy /= n;
    tx /= n;
    ty /= n;
    double a = 0, b = 0, norm = 0;
    for (const auto& [f, t] : pairs)
    {
        const double px = f.x - fx, py = f.y - fy, qx = t.x - tx, qy = t.y - ty;
        a += px * qx + py * qy;
        b += px * qy - py * qx;
        norm += px * px + py * py;
    }
    if (norm == 0.0)
        throw ValidationError("landmarks", "degenerate landmark set (all points coincide)");
    Similarity2D s;
    s.angle = std::atan2(b, a);
    s.scale = std::hypot(a, b) / norm;
    const double c = std::cos(s.angle), sn = std::sin(s.angle);
    s.tx = tx - s.scale * (c * fx - sn * fy);
    s.ty = ty - s.scale * (sn * fx + c * fy);
    return s;
}

/// Wraps an angle difference to (-pi, pi].
inline double wrap_angle(double a)
{
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

struct ApdWeights
{
    double rotation = 1.0;
    double translation = 1.0;
    double scale = 1.0;
};

struct PoseDistance
{
    double rotation = 0.0;    ///< |angle_p - angle_d| in radians
    double translation = 0.0; ///< |t_p - t_d| in pixels
    double scale = 0.0;       ///< |log(s_p / s_d)|
    double total = 0.0;       ///< weighted sum of the three terms
};

/**
 * Pose distance from landmarks. Each set is explained as a similarity
 * transform of `reference` (a canonical landmark layout); the distance
 * compares the two fitted rotations, translations and scales.
 */
inline PoseDistance apd(const LandmarkSet& pred, const LandmarkSet& drive, const LandmarkSet& reference,
                        const ApdWeights& weights = {})
{
    const auto sp = fit_similarity(reference, pred);
    const auto sd = fit_similarity(reference, drive);
    PoseDistance d;
    d.rotation = std::abs(wrap_angle(sp.angle - sd.angle));
    d.translation = std::hypot(sp.tx - sd.tx, sp.ty - sd.ty);
    d.scale = std::abs(std::log(sp.scale / sd.scale));
    d.total = weights.rotation * d.rotation + weights.translation * d.translation + weights.scale * d.scale;
    return d;
}

/**
 * Expression distance: both sets are mapped into the frame of `reference`
 * by the inverse of their fitted similarity, then the mean Euclidean
 * distance between corresponding points is returned (reference units).
 */
inline double aed(const LandmarkSet& pred, const LandmarkSet& expr, const LandmarkSet& reference)
{
    const auto sp = fit_similarity(reference, pred);
    const auto se = fit_similarity(reference, expr);
    const auto pairs = match_landmarks(pred, expr);
    if (pairs.size() < 3)
        throw ValidationError("landmarks", "aed needs at least 3 common landmarks");
    double total = 0.0;
    for (const auto& [p, e] : pairs)
    {
        const auto [px, py] = sp.apply_inverse(p.x, p.y);
        const auto [ex, ey] = se.apply_inverse(e.x, e.y);
        total += std::hypot(px - ex, py - ey);
    }
    return total / static_cast<double>(pairs.size());
}

} // namespace dexp
