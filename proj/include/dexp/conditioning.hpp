#pragma once

#include "dexp/core/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace dexp {

inline constexpr std::size_t expression_dim = 512;
inline constexpr std::size_t expression_tokens = 32;
inline constexpr std::size_t expression_token_dim = 16;
inline constexpr std::size_t appearance_dim = 2048;

/// 512-d expression code.
struct ExpressionLatent
{
    std::vector<double> values;

    static ExpressionLatent zeros() { return {std::vector<double>(expression_dim, 0.0)}; }
};

inline void validate_latent(const ExpressionLatent& z)
{
    if (z.values.size() != expression_dim)
        throw ValidationError("expression", "expression latent must have " + std::to_string(expression_dim) +
                                                " entries, got " + std::to_string(z.values.size()));
    for (std::size_t i = 0; i < z.values.size(); ++i)
    {
        if (!std::isfinite(z.values[i]))
            throw ValidationError("expression", "non-finite expression latent entry at " + std::to_string(i));
    }
}

/// Row-major split of the latent into 32 tokens of 16 values: token k holds entries [16k, 16k+16).
inline Tensor pack_expression_tokens(const ExpressionLatent& z)
{
    validate_latent(z);
    return Tensor({expression_tokens, expression_token_dim}, z.values);
}

inline ExpressionLatent unpack_expression_tokens(const Tensor& tokens)
{
    if (tokens.shape() != Shape{expression_tokens, expression_token_dim})
        throw ShapeError("expression tokens must be [32,16], got " + to_string(tokens.shape()));
    return {tokens.values()};
}

/**
 * Style code of the decoder: the 2048-d appearance code followed by the
 * 512-d expression code, 2560 entries in total.
 */
inline std::vector<double> concat_style_code(const std::vector<double>& appearance, const ExpressionLatent& z)
{
    if (appearance.size() != appearance_dim)
        throw ValidationError("appearance code must have " + std::to_string(appearance_dim) + " entries");
    validate_latent(z);
    std::vector<double> code = appearance;
    code.insert(code.end(), z.values.begin(), z.values.end());
    return code;
}

/// Per-channel gain and bias.
struct StyleParams
{
    std::vector<double> gamma;
    std::vector<double> beta;

    std::size_t channels() const { return gamma.size(); }
};

inline void validate_style(const StyleParams& style)
{
    if (style.gamma.size() != style.beta.size())
        throw ShapeError("style: gamma has " + std::to_string(style.gamma.size()) + " entries, beta " +
                         std::to_string(style.beta.size()));
    for (std::size_t i = 0; i < style.gamma.size(); ++i)
    {
        if (!std::isfinite(style.gamma[i]) || !std::isfinite(style.beta[i]))
            throw ValidationError("style", "non-finite style parameter at channel " + std::to_string(i));
    }
}

/**
 * Affine map from a style code to AdaIN parameters:
 * gamma = 1 + W_gamma z, beta = W_beta z, with W of shape [C, len(z)].
 * Zero weights give the identity modulation.
 */
struct StyleMapping
{
    Tensor w_gamma;
    Tensor w_beta;

    static StyleMapping zeros(std::size_t channels, std::size_t code_dim)
    {
        return {Tensor({channels, code_dim}), Tensor({channels, code_dim})};
    }

    StyleParams operator()(const std::vector<double>& code) const
    {
        if (w_gamma.rank() != 2 || w_gamma.shape() != w_beta.shape() || w_gamma.extent(1) != code.size())
            throw ShapeError("style mapping " + to_string(w_gamma.shape()) + " does not accept a code of length " +
                             std::to_string(code.size()));
        const std::size_t c = w_gamma.extent(0), d = code.size();
        StyleParams p{std::vector<double>(c, 1.0), std::vector<double>(c, 0.0)};
        for (std::size_t i = 0; i < c; ++i)
        {
            for (std::size_t k = 0; k < d; ++k)
            {
                p.gamma[i] += w_gamma[i * d + k] * code[k];
                p.beta[i] += w_beta[i * d + k] * code[k];
            }
        }
        return p;
    }
};

inline constexpr double adain_default_eps = 1e-5;

namespace detail {

inline void check_adain_args(const Tensor& content, const StyleParams& style, double eps)
{
    if (content.rank() < 2)
        throw ShapeError("adain: content must be [C, spatial...], got " + to_string(content.shape()));
    if (style.channels() != content.extent(0))
        throw ShapeError("adain: style has " + std::to_string(style.channels()) + " channels, content " +
                         std::to_string(content.extent(0)));
    validate_style(style);
    if (!(eps > 0.0))
        throw ValidationError("adain: eps must be positive");
}

struct ChannelStats
{
    double mean;
    double inv_std; // 1 / sqrt(var + eps)
};

inline ChannelStats channel_stats(std::span<const double> x, double eps)
{
    const double n = static_cast<double>(x.size());
    double m = 0.0;
    for (double v : x)
        m += v;
    m /= n;
    double var = 0.0;
    for (double v : x)
        var += (v - m) * (v - m);
    var /= n;
    return {m, 1.0 / std::sqrt(var + eps)};
}

} // namespace detail

/**
 * Adaptive instance normalization.
 *
 * Per channel: out = gamma * (x - mean) / sqrt(var + eps) + beta, where mean
 * and the population variance are taken over all spatial positions.
 */
inline Tensor adain(const Tensor& content, const StyleParams& style, double eps = adain_default_eps)
{
    detail::check_adain_args(content, style, eps);
    const std::size_t c = content.extent(0), n = content.size() / c;
    Tensor out(content.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
    {
        const auto x = content.data().subspan(ch * n, n);
        const auto st = detail::channel_stats(x, eps);
        for (std::size_t k = 0; k < n; ++k)
            out[ch * n + k] = style.gamma[ch] * ((x[k] - st.mean) * st.inv_std) + style.beta[ch];
    }
    return out;
}

struct AdainGradients
{
    Tensor content;
    std::vector<double> gamma;
    std::vector<double> beta;
};

/**
 * Gradients of sum(upstream * adain(content, style)) with respect to the
 * content, gamma and beta.
 */
inline AdainGradients adain_grad(const Tensor& content, const StyleParams& style, const Tensor& upstream,
                                 double eps = adain_default_eps)
{
    detail::check_adain_args(content, style, eps);
    content.require_same_shape(upstream, "adain_grad");
    const std::size_t c = content.extent(0), n = content.size() / c;
    const double nd = static_cast<double>(n);
    AdainGradients g{Tensor(content.shape()), std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    std::vector<double> xhat(n);
    for (std::size_t ch = 0; ch < c; ++ch)
    {
        const auto x = content.data().subspan(ch * n, n);
        const auto up = upstream.data().subspan(ch * n, n);
        const auto st = detail::channel_stats(x, eps);
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            xhat[k] = (x[k] - st.mean) * st.inv_std;
            sum_g += up[k];
            sum_gx += up[k] * xhat[k];
        }
        g.beta[ch] = sum_g;
        g.gamma[ch] = sum_gx;
        const double scale = style.gamma[ch] * st.inv_std / nd;
        for (std::size_t k = 0; k < n; ++k)
            g.content[ch * n + k] = scale * (nd * up[k] - sum_g - xhat[k] * sum_gx);
    }
    return g;
}

/**
 * Projection weights of a cross-attention layer.
 *
 * Shapes: query [A, d], key [A, dk], value [A, dk], out [d, A], where A is the
 * attention width and must be divisible by `heads`.
 */
struct AttentionWeights
{
    Tensor query;
    Tensor key;
    Tensor value;
    Tensor out;
    std::size_t heads = 1;
};

struct AttentionResult
{
    Tensor output;            ///< [Nq, d]
    std::vector<Tensor> maps; ///< per head, [Nq, Nk]; rows sum to 1
};

namespace detail {

/// x [N, in] times W^T, W [out, in] -> [N, out].
inline Tensor linear(const Tensor& x, const Tensor& w)
{
    const std::size_t n = x.extent(0), in = x.extent(1), out_dim = w.extent(0);
    Tensor y({n, out_dim});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o)
        {
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i)
                acc += x[r * in + i] * w[o * in + i];
            y[r * out_dim + o] = acc;
        }
    return y;
}

} // namespace detail

/// Numerically stable softmax of each row of a [N, M] tensor.
inline Tensor softmax_rows(const Tensor& logits)
{
    const std::size_t n = logits.extent(0), m = logits.extent(1);
    Tensor out(logits.shape());
    for (std::size_t r = 0; r < n; ++r)
    {
        double mx = logits[r * m];
        for (std::size_t k = 1; k < m; ++k)
            mx = std::max(mx, logits[r * m + k]);
        double total = 0.0;
        for (std::size_t k = 0; k < m; ++k)
        {
            out[r * m + k] = std::exp(logits[r * m + k] - mx);
            total += out[r * m + k];
        }
        for (std::size_t k = 0; k < m; ++k)
            out[r * m + k] /= total;
    }
    return out;
}

/**
 * softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated and passed
 * through the output projection.
 */
inline AttentionResult cross_attention(const Tensor& queries, const Tensor& tokens, const AttentionWeights& w)
{
    if (queries.rank() != 2 || tokens.rank() != 2)
        throw ShapeError("cross_attention: queries and tokens must be 2D");
    const std::size_t nq = queries.extent(0), d = queries.extent(1), nk = tokens.extent(0), dk = tokens.extent(1);
    const std::size_t width = w.query.rank() == 2 ? w.query.extent(0) : 0;
    if (w.query.shape() != Shape{width, d} || w.key.shape() != Shape{width, dk} || w.value.shape() != Shape{width, dk} ||
        w.out.shape() != Shape{d, width})
    {
        throw ShapeError("cross_attention: projection shapes do not match queries [" + std::to_string(nq) + "," +
                         std::to_string(d) + "] and tokens [" + std::to_string(nk) + "," + std::to_string(dk) + "]");
    }
    if (w.heads == 0 || width % w.heads != 0)
        throw ValidationError("cross_attention: attention width " + std::to_string(width) +
                              " is not divisible by head count " + std::to_string(w.heads));
    const Tensor q = detail::linear(queries, w.query);
    const Tensor k = detail::linear(tokens, w.key);
    const Tensor v = detail::linear(tokens, w.value);
    const std::size_t dh = width / w.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor mixed({nq, width});
    AttentionResult result;
    for (std::size_t h = 0; h < w.heads; ++h)
    {
        Tensor logits({nq, nk});
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t j = 0; j < nk; ++j)
            {
                double acc = 0.0;
                for (std::size_t e = 0; e < dh; ++e)
                    acc += q[i * width + h * dh + e] * k[j * width + h * dh + e];
                logits(i, j) = acc * scale;
            }
        Tensor attn = softmax_rows(logits);
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t e = 0; e < dh; ++e)
            {
                double acc = 0.0;
                for (std::size_t j = 0; j < nk; ++j)
                    acc += attn(i, j) * v[j * width + h * dh + e];
                mixed[i * width + h * dh + e] = acc;
            }
        result.maps.push_back(std::move(attn));
    }
    result.output = detail::linear(mixed, w.out);
    return result;
}

} // namespace dexp
