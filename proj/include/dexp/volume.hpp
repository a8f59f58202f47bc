#pragma once

#include "dexp/core/sampling.hpp"
#include "dexp/core/tensor.hpp"
#include "dexp/pose.hpp"

#include <string>

namespace dexp {

/// h*h tokens of c channels, stored as [h*h, c]. Token (row r, col q) is index r*h + q.
struct TokenGrid
{
    std::size_t side = 0;
    Tensor data;

    std::size_t tokens() const { return data.extent(0); }
    std::size_t channels() const { return data.extent(1); }
};

/// Dense feature volume stored as [C,D,H,W].
struct FeatureVolume
{
    Tensor data;

    std::size_t channels() const { return data.extent(0); }
    std::size_t depth() const { return data.extent(1); }
    std::size_t height() const { return data.extent(2); }
    std::size_t width() const { return data.extent(3); }
};

inline TokenGrid make_token_grid(Tensor data)
{
    if (data.rank() != 2)
        throw ShapeError("token grid must be [h*h, c], got " + to_string(data.shape()));
    const std::size_t n = data.extent(0);
    auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n)
        throw ShapeError("token count " + std::to_string(n) + " is not a perfect square");
    return TokenGrid{side, std::move(data)};
}

inline FeatureVolume make_feature_volume(Tensor data)
{
    if (data.rank() != 4)
        throw ShapeError("feature volume must be [C,D,H,W], got " + to_string(data.shape()));
    return FeatureVolume{std::move(data)};
}

/**
 * Reshapes an h*h token grid with c channels into a volume of depth h/2,
 * height h, width h and 2c/h channels.
 *
 * The channel axis of each token is split as k = d * (2c/h) + ch, depth
 * outermost, and token (r, q) lands at (ch, d, r, q):
 *
 *   volume(ch, d, r, q) = tokens(r*h + q, d * (2c/h) + ch)
 */
inline FeatureVolume tokens_to_volume(const TokenGrid& g)
{
    const std::size_t h = g.side, c = g.channels();
    if (h == 0 || h % 2 != 0)
        throw ValidationError("reshape", "tokens_to_volume: side h=" + std::to_string(h) + " must be a positive even number");
    if (g.tokens() != h * h)
        throw ShapeError("tokens_to_volume: " + std::to_string(g.tokens()) + " tokens for side " + std::to_string(h));
    if ((2 * c) % h != 0)
        throw ValidationError("reshape", "tokens_to_volume: 2c/h is not an integer for h=" + std::to_string(h) +
                                             ", c=" + std::to_string(c));
    const std::size_t depth = h / 2, vc = 2 * c / h;
    Tensor out({vc, depth, h, h});
    const auto src = g.data.data();
    auto dst = out.data();
    for (std::size_t n = 0; n < h * h; ++n)
        for (std::size_t d = 0; d < depth; ++d)
            for (std::size_t ch = 0; ch < vc; ++ch)
                dst[(ch * depth + d) * h * h + n] = src[n * c + d * vc + ch];
    return FeatureVolume{std::move(out)};
}

/// Exact inverse of tokens_to_volume for a grid of side h.
inline TokenGrid volume_to_tokens(const FeatureVolume& v, std::size_t h)
{
    if (h == 0 || h % 2 != 0)
        throw ValidationError("reshape", "volume_to_tokens: side h=" + std::to_string(h) + " must be a positive even number");
    if (v.depth() != h / 2 || v.height() != h || v.width() != h)
    {
        throw ShapeError("volume_to_tokens: volume " + to_string(v.data.shape()) + " is not [C," + std::to_string(h / 2) +
                         "," + std::to_string(h) + "," + std::to_string(h) + "]");
    }
    const std::size_t depth = h / 2, vc = v.channels(), c = depth * vc;
    Tensor out({h * h, c});
    const auto src = v.data.data();
    auto dst = out.data();
    for (std::size_t n = 0; n < h * h; ++n)
        for (std::size_t d = 0; d < depth; ++d)
            for (std::size_t ch = 0; ch < vc; ++ch)
                dst[n * c + d * vc + ch] = src[(ch * depth + d) * h * h + n];
    return TokenGrid{h, std::move(out)};
}

/**
 * Resamples a volume under a relative pose by inverse mapping.
 *
 * Every output voxel center x (normalized (x, y, z), z along depth) reads the
 * input at rel^-1(x) with trilinear interpolation. Samples outside the
 * volume follow `options`.
 */
inline FeatureVolume warp_volume(const FeatureVolume& v, const PoseRTS& rel, const SampleOptions& options = {})
{
    if (v.data.rank() != 4)
        throw ShapeError("warp_volume: volume must be [C,D,H,W]");
    validate_pose(rel);
    const PoseRTS inv = pose_invert(rel);
    const std::size_t channels = v.channels(), depth = v.depth(), height = v.height(), width = v.width();
    Tensor out({channels, depth, height, width});
    std::vector<double> sample(channels);
    const std::size_t plane = depth * height * width;
    for (std::size_t k = 0; k < depth; ++k)
    {
        for (std::size_t j = 0; j < height; ++j)
        {
            for (std::size_t i = 0; i < width; ++i)
            {
                const Eigen::Vector3d x(cell_center(i, width), cell_center(j, height), cell_center(k, depth));
                const Eigen::Vector3d src = inv.apply(x);
                trilinear_at(v.data, src.x(), src.y(), src.z(), sample, options);
                const std::size_t base = (k * height + j) * width + i;
                for (std::size_t ch = 0; ch < channels; ++ch)
                    out[ch * plane + base] = sample[ch];
            }
        }
    }
    return FeatureVolume{std::move(out)};
}

/// Per-token linear map with bias: y = W x + b, W is [c_out, c_in].
struct Projection
{
    Tensor weight;
    Tensor bias;

    static Projection zeros(std::size_t c_out, std::size_t c_in)
    {
        return {Tensor({c_out, c_in}), Tensor({c_out})};
    }

    static Projection identity(std::size_t c)
    {
        Projection p = zeros(c, c);
        for (std::size_t i = 0; i < c; ++i)
            p.weight(i, i) = 1.0;
        return p;
    }

    std::size_t out_channels() const { return weight.extent(0); }
    std::size_t in_channels() const { return weight.extent(1); }
};

/**
 * Adds projected warped features onto the host tokens.
 *
 * The warped volume is flattened with volume_to_tokens (side = its height),
 * each token passes through `projection`, and the result is added to `host`.
 */
inline TokenGrid residual_inject(const TokenGrid& host, const FeatureVolume& warped, const Projection& projection)
{
    const TokenGrid flat = volume_to_tokens(warped, warped.height());
    if (flat.tokens() != host.tokens())
        throw ShapeError("residual_inject: warped volume has " + std::to_string(flat.tokens()) + " tokens, host has " +
                         std::to_string(host.tokens()));
    if (projection.weight.rank() != 2 || projection.in_channels() != flat.channels() ||
        projection.out_channels() != host.channels() || projection.bias.size() != host.channels())
    {
        throw ShapeError("residual_inject: projection " + to_string(projection.weight.shape()) + " does not map " +
                         std::to_string(flat.channels()) + " to " + std::to_string(host.channels()) + " channels");
    }
    TokenGrid out = host;
    const std::size_t c_in = flat.channels(), c_out = host.channels();
    for (std::size_t n = 0; n < host.tokens(); ++n)
    {
        for (std::size_t o = 0; o < c_out; ++o)
        {
            double acc = projection.bias[o];
            for (std::size_t i = 0; i < c_in; ++i)
                acc += projection.weight[o * c_in + i] * flat.data[n * c_in + i];
            out.data[n * c_out + o] += acc;
        }
    }
    return out;
}

} // namespace dexp
