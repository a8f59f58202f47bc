#pragma once

#include "dexp/core/tensor.hpp"

#include <array>
#include <cmath>
#include <string>

namespace dexp {

/**
 * Normalized coordinates.
 *
 * Every module uses the same convention: an axis with n cells spans [-1, 1]
 * and cell centers sit at -1 + (2i + 1)/n (the "align corners = false"
 * convention of common grid samplers). A center is therefore never exactly on
 * the boundary, and the mapping does not depend on resolution.
 */
inline double cell_center(std::size_t i, std::size_t n)
{
    return (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n) - 1.0;
}

/// Continuous cell index of a normalized coordinate; the inverse of cell_center.
inline double continuous_index(double x, std::size_t n)
{
    return ((x + 1.0) * static_cast<double>(n) - 1.0) * 0.5;
}

enum class OutOfBounds
{
    constant, ///< samples outside [-1,1], and lattice neighbours outside the grid, read `fill`
    border,   ///< coordinates are clamped onto the outermost cell centers
};

struct SampleOptions
{
    OutOfBounds mode = OutOfBounds::constant;
    double fill = 0.0;
};

namespace detail {

// Indices this close to a lattice point are snapped onto it, so that any
// lattice-preserving transform reproduces voxel values exactly.
inline constexpr double snap_tolerance = 1e-9;

struct AxisTaps
{
    std::array<long, 2> index{};
    std::array<double, 2> weight{};
    int count = 0;
};

inline AxisTaps index_taps(double idx, std::size_t n, OutOfBounds mode)
{
    if (mode == OutOfBounds::border)
        idx = std::clamp(idx, 0.0, static_cast<double>(n - 1));
    const double nearest = std::round(idx);
    if (std::abs(idx - nearest) < snap_tolerance)
        idx = nearest;
    const double lo = std::floor(idx);
    const double frac = idx - lo;
    AxisTaps taps;
    taps.index[0] = static_cast<long>(lo);
    taps.weight[0] = 1.0 - frac;
    taps.count = 1;
    if (frac > 0.0)
    {
        taps.index[1] = taps.index[0] + 1;
        taps.weight[1] = frac;
        taps.count = 2;
    }
    return taps;
}

inline AxisTaps axis_taps(double x, std::size_t n, OutOfBounds mode)
{
    return index_taps(continuous_index(x, n), n, mode);
}

inline bool outside_unit(double x) { return x < -1.0 || x > 1.0; }

} // namespace detail

/**
 * Trilinear interpolation of a [C,D,H,W] volume at one normalized point.
 *
 * The point is (x, y, z) with x along W, y along H and z along D. Writes C
 * values to `out`.
 */
inline void trilinear_at(const Tensor& volume, double x, double y, double z, std::span<double> out,
                         const SampleOptions& options = {})
{
    const auto& s = volume.shape();
    const std::size_t channels = s[0], depth = s[1], height = s[2], width = s[3];
    if (options.mode == OutOfBounds::constant &&
        (detail::outside_unit(x) || detail::outside_unit(y) || detail::outside_unit(z)))
    {
        std::fill(out.begin(), out.end(), options.fill);
        return;
    }
    const auto tx = detail::axis_taps(x, width, options.mode);
    const auto ty = detail::axis_taps(y, height, options.mode);
    const auto tz = detail::axis_taps(z, depth, options.mode);
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t plane = depth * height * width;
    const auto data = volume.data();
    for (int a = 0; a < tz.count; ++a)
    {
        for (int b = 0; b < ty.count; ++b)
        {
            for (int c = 0; c < tx.count; ++c)
            {
                const double w = tz.weight[a] * ty.weight[b] * tx.weight[c];
                const long zi = tz.index[a], yi = ty.index[b], xi = tx.index[c];
                const bool inside = zi >= 0 && yi >= 0 && xi >= 0 && zi < static_cast<long>(depth) &&
                                    yi < static_cast<long>(height) && xi < static_cast<long>(width);
                if (!inside)
                {
                    for (std::size_t ch = 0; ch < channels; ++ch)
                        out[ch] += w * options.fill;
                    continue;
                }
                const std::size_t base = (static_cast<std::size_t>(zi) * height + static_cast<std::size_t>(yi)) * width +
                                         static_cast<std::size_t>(xi);
                for (std::size_t ch = 0; ch < channels; ++ch)
                    out[ch] += w * data[ch * plane + base];
            }
        }
    }
}

/**
 * Trilinear sampling of a [C,D,H,W] volume at N normalized points.
 *
 * `coords` is [N,3] holding (x, y, z) per row. Returns [N,C].
 */
inline Tensor trilinear_sample(const Tensor& volume, const Tensor& coords, const SampleOptions& options = {})
{
    if (volume.rank() != 4)
        throw ShapeError("trilinear_sample: volume must have 4 axes [C,D,H,W], got rank " +
                         std::to_string(volume.rank()));
    if (coords.rank() != 2)
        throw ShapeError("trilinear_sample: coords must be [N,3], got rank " + std::to_string(coords.rank()));
    if (coords.extent(1) != 3)
        throw ShapeError("trilinear_sample: coords axis 1 must have extent 3, got " +
                         std::to_string(coords.extent(1)));
    const std::size_t n = coords.extent(0);
    const std::size_t channels = volume.extent(0);
    for (std::size_t i = 0; i < coords.size(); ++i)
    {
        if (!std::isfinite(coords[i]))
            throw ValidationError("trilinear_sample: non-finite coordinate at row " + std::to_string(i / 3) +
                                  ", component " + std::to_string(i % 3));
    }
    Tensor out({n, channels});
    for (std::size_t i = 0; i < n; ++i)
    {
        trilinear_at(volume, coords(i, 0), coords(i, 1), coords(i, 2), out.data().subspan(i * channels, channels),
                     options);
    }
    return out;
}

/**
 * Bilinear interpolation of a [C,H,W] image at continuous pixel indices.
 *
 * Pixel (i, j) has its center at column i, row j; the sample is inside the
 * image iff both indices lie in [-0.5, n - 0.5]. Same fill semantics as the
 * volume sampler.
 */
inline void bilinear_at_index(const Tensor& image, double col, double row, std::span<double> out,
                              const SampleOptions& options = {})
{
    const std::size_t channels = image.extent(0), height = image.extent(1), width = image.extent(2);
    const double half = 0.5;
    if (options.mode == OutOfBounds::constant &&
        (col < -half || row < -half || col > static_cast<double>(width) - half ||
         row > static_cast<double>(height) - half))
    {
        std::fill(out.begin(), out.end(), options.fill);
        return;
    }
    const auto tx = detail::index_taps(col, width, options.mode);
    const auto ty = detail::index_taps(row, height, options.mode);
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t plane = height * width;
    for (int b = 0; b < ty.count; ++b)
    {
        for (int c = 0; c < tx.count; ++c)
        {
            const double w = ty.weight[b] * tx.weight[c];
            const long yi = ty.index[b], xi = tx.index[c];
            if (yi < 0 || xi < 0 || yi >= static_cast<long>(height) || xi >= static_cast<long>(width))
            {
                for (std::size_t ch = 0; ch < channels; ++ch)
                    out[ch] += w * options.fill;
                continue;
            }
            const std::size_t base = static_cast<std::size_t>(yi) * width + static_cast<std::size_t>(xi);
            for (std::size_t ch = 0; ch < channels; ++ch)
                out[ch] += w * image[ch * plane + base];
        }
    }
}

/// Normalized 1D Gaussian kernel of odd `size`, centered.
inline std::vector<double> gaussian_kernel(std::size_t size, double sigma)
{
    if (size % 2 == 0)
        throw ValidationError("gaussian window size must be odd, got " + std::to_string(size));
    if (!(sigma > 0.0))
        throw ValidationError("gaussian window sigma must be positive");
    const double center = static_cast<double>(size / 2);
    std::vector<double> g(size);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i)
    {
        const double d = static_cast<double>(i) - center;
        g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += g[i];
    }
    for (auto& v : g)
        v /= total;
    return g;
}

/**
 * Normalized separable 2D Gaussian window of odd `size`.
 *
 * Built as the outer product of gaussian_kernel, so it is exactly symmetric.
 */
inline Tensor gaussian_window(std::size_t size, double sigma)
{
    const auto g = gaussian_kernel(size, sigma);
    Tensor w({size, size});
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j)
            w(i, j) = g[i] * g[j];
    return w;
}

} // namespace dexp
