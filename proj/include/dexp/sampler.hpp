#pragma once

#include "dexp/conditioning.hpp"
#include "dexp/core/rng.hpp"
#include "dexp/core/tensor.hpp"
#include "dexp/pose.hpp"

#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dexp {

/**
 * Discrete forward-process schedule.
 *
 * alpha_bar[t] = prod_{i<=t} (1 - beta_i) for t = 1..T, and alpha_bar[0] = 1
 * stands for the clean signal.
 */
class NoiseSchedule
{
public:
    explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas))
    {
        if (betas_.empty())
            throw ValidationError("noise schedule needs at least one step");
        alpha_bar_.assign(betas_.size() + 1, 1.0);
        for (std::size_t i = 0; i < betas_.size(); ++i)
        {
            if (!(betas_[i] > 0.0 && betas_[i] < 1.0))
                throw ValidationError("beta_" + std::to_string(i + 1) + " outside (0,1)");
            if (i > 0 && betas_[i] < betas_[i - 1])
                throw ValidationError("betas must be non-decreasing");
            alpha_bar_[i + 1] = alpha_bar_[i] * (1.0 - betas_[i]);
        }
    }

    /// Betas linear in sqrt space, the latent-diffusion default (0.00085 .. 0.012 over 1000 steps).
    static NoiseSchedule scaled_linear(std::size_t steps = 1000, double beta_start = 0.00085, double beta_end = 0.012)
    {
        std::vector<double> betas(steps);
        const double a = std::sqrt(beta_start), b = std::sqrt(beta_end);
        for (std::size_t i = 0; i < steps; ++i)
        {
            const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
            const double r = a + (b - a) * f;
            betas[i] = r * r;
        }
        return NoiseSchedule(std::move(betas));
    }

    /// Betas linear in beta, the pixel-space DDPM default (1e-4 .. 0.02).
    static NoiseSchedule linear(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 0.02)
    {
        std::vector<double> betas(steps);
        for (std::size_t i = 0; i < steps; ++i)
        {
            const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
            betas[i] = beta_start + (beta_end - beta_start) * f;
        }
        return NoiseSchedule(std::move(betas));
    }

    std::size_t steps() const noexcept { return betas_.size(); }
    const std::vector<double>& betas() const noexcept { return betas_; }

    double alpha_bar(std::size_t t) const
    {
        if (t > steps())
            throw ValidationError("timestep " + std::to_string(t) + " outside [0," + std::to_string(steps()) + "]");
        return alpha_bar_[t];
    }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bar_;
};

/// Reverse-process step index (counting down) together with its noise-schedule timestep.
struct DenoiseStep
{
    int step = 0;
    std::size_t timestep = 0;
};

struct PoseCondition
{
    Tensor raymaps; ///< source and driving ray maps, [6,H,W]
    PoseRTS relative;
};

/**
 * Conditions handed to a denoiser. Every slot may be empty; the
 * unconditional call uses a set with all slots empty.
 */
struct ConditionSet
{
    std::optional<Tensor> identity; ///< reference payload, opaque to the sampler
    std::optional<PoseCondition> pose;
    std::optional<ExpressionLatent> expression;

    static ConditionSet none() { return {}; }

    bool empty() const { return !identity && !pose && !expression; }

    /// The same set with the expression slot cleared.
    ConditionSet without_expression() const
    {
        ConditionSet c = *this;
        c.expression.reset();
        return c;
    }
};

/// A pure noise predictor: (z_t, conditions, step) -> epsilon estimate of the same shape.
template <typename F>
concept Denoiser = requires(const F& f, const Tensor& z, const ConditionSet& c, const DenoiseStep& s) {
    { f(z, c, s) } -> std::convertible_to<Tensor>;
};

/**
 * Guidance schedule over the reverse steps.
 *
 * Steps are indexed t = total_steps (first) down to 1 (last). The first
 * `hold_steps` exclude the expression condition, the next `ramp_steps` blend
 * it in linearly and the last `full_steps` use every condition.
 */
struct CfgSchedule
{
    int total_steps = 35;
    int hold_steps = 5;
    int ramp_steps = 5;
    int full_steps = 25;
    double guidance_scale = 2.5;
};

inline void validate_schedule(const CfgSchedule& s)
{
    if (s.total_steps < 1 || s.hold_steps < 0 || s.ramp_steps < 0 || s.full_steps < 0)
        throw ValidationError("schedule", "schedule step counts must be non-negative with total >= 1");
    if (s.hold_steps + s.ramp_steps + s.full_steps != s.total_steps)
        throw ValidationError("schedule", "hold + ramp + full = " +
                                              std::to_string(s.hold_steps + s.ramp_steps + s.full_steps) +
                                              " != total " + std::to_string(s.total_steps));
    if (!std::isfinite(s.guidance_scale))
        throw ValidationError("schedule", "guidance scale must be finite");
}

struct BlendWeights
{
    double without_expression = 0.0; ///< weight on the estimate conditioned on c minus expression
    double full = 0.0;               ///< weight on the estimate conditioned on all of c
};

/**
 * Blend weights at step t:
 *   t > total - hold           -> (1, 0)
 *   full < t <= total - hold   -> ((t - full)/ramp, (total - hold - t)/ramp)
 *   t <= full                  -> (0, 1)
 * With the default 35/5/5/25 this is (t-25)/5 and (30-t)/5 on 25 < t <= 30.
 */
inline BlendWeights hybrid_weights(int t, const CfgSchedule& s)
{
    validate_schedule(s);
    if (t < 1 || t > s.total_steps)
        throw ValidationError("schedule", "step " + std::to_string(t) + " outside [1," +
                                              std::to_string(s.total_steps) + "]");
    const int hold_start = s.total_steps - s.hold_steps;
    if (t > hold_start)
        return {1.0, 0.0};
    if (t > s.full_steps)
    {
        const double ramp = static_cast<double>(s.ramp_steps);
        return {static_cast<double>(t - s.full_steps) / ramp, static_cast<double>(hold_start - t) / ramp};
    }
    return {0.0, 1.0};
}

/// omega * cond + (1 - omega) * uncond.
inline Tensor guided_combination(const Tensor& cond, const Tensor& uncond, double omega)
{
    return axpby(omega, cond, 1.0 - omega, uncond);
}

/// Classifier-free guidance: omega * eps(z, c) + (1 - omega) * eps(z, none).
template <Denoiser D>
Tensor cfg_estimate(const Tensor& z, const ConditionSet& c, const DenoiseStep& step, double omega, const D& denoiser)
{
    const Tensor cond = denoiser(z, c, step);
    const Tensor uncond = denoiser(z, ConditionSet::none(), step);
    z.require_same_shape(cond, "denoiser output");
    z.require_same_shape(uncond, "denoiser output");
    return guided_combination(cond, uncond, omega);
}

/**
 * Progressive hybrid guidance: the CFG estimate of c without expression and
 * of the full c, blended by hybrid_weights(step.step).
 *
 * If c has no expression both estimates coincide and the plain CFG estimate
 * is returned unchanged.
 */
template <Denoiser D>
Tensor progressive_cfg_estimate(const Tensor& z, const ConditionSet& c, const DenoiseStep& step,
                                const CfgSchedule& sched, const D& denoiser)
{
    const BlendWeights w = hybrid_weights(step.step, sched);
    const double omega = sched.guidance_scale;
    if (!c.expression || w.without_expression == 0.0)
        return cfg_estimate(z, c, step, omega, denoiser);
    const ConditionSet reduced = c.without_expression();
    if (w.full == 0.0)
        return cfg_estimate(z, reduced, step, omega, denoiser);

    const Tensor uncond = denoiser(z, ConditionSet::none(), step);
    const Tensor excl = guided_combination(denoiser(z, reduced, step), uncond, omega);
    const Tensor full = guided_combination(denoiser(z, c, step), uncond, omega);
    return axpby(w.without_expression, excl, w.full, full);
}

struct NoisedSample
{
    Tensor z;
    Tensor noise;
};

/**
 * z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps with eps ~ N(0, I).
 * t = 0 is the clean signal.
 */
inline NoisedSample forward_noise(const Tensor& z0, std::size_t t, const NoiseSchedule& schedule, Rng& rng)
{
    if (t > schedule.steps())
        throw ValidationError("forward_noise: timestep " + std::to_string(t) + " outside [0," +
                              std::to_string(schedule.steps()) + "]");
    const double ab = schedule.alpha_bar(t);
    Tensor eps = randn(rng, z0.shape());
    return {axpby(std::sqrt(ab), z0, std::sqrt(1.0 - ab), eps), std::move(eps)};
}

/// Noise-schedule timestep of reverse step t in 1..steps; the largest comes first, step 0 maps to 0.
inline std::size_t ddim_timestep(int step, int steps, const NoiseSchedule& schedule)
{
    if (step < 0 || step > steps)
        throw ValidationError("ddim step " + std::to_string(step) + " outside [0," + std::to_string(steps) + "]");
    if (step == 0)
        return 0;
    const auto t_max = static_cast<double>(schedule.steps());
    if (steps == 1)
        return schedule.steps();
    return static_cast<std::size_t>(1 + std::llround(static_cast<double>(step - 1) * (t_max - 1.0) /
                                                     static_cast<double>(steps - 1)));
}

/**
 * One DDIM update from timestep t to t_prev.
 *
 * x0 = (z - sqrt(1 - a_t) eps) / sqrt(a_t),
 * z' = sqrt(a_prev) x0 + sqrt(1 - a_prev - sigma^2) eps + sigma n,
 * sigma = eta sqrt((1 - a_prev)/(1 - a_t)) sqrt(1 - a_t/a_prev).
 * eta = 0 is deterministic and needs no rng.
 */
inline Tensor ddim_step(const Tensor& z, const Tensor& eps, std::size_t t, std::size_t t_prev,
                        const NoiseSchedule& schedule, double eta = 0.0, Rng* rng = nullptr)
{
    if (t_prev > t || t > schedule.steps())
        throw ValidationError("ddim_step: invalid step pair t=" + std::to_string(t) +
                              ", t_prev=" + std::to_string(t_prev));
    if (!(eta >= 0.0 && eta <= 1.0))
        throw ValidationError("ddim_step: eta must lie in [0,1]");
    if (t == 0)
        throw ValidationError("ddim_step: t must be at least 1");
    z.require_same_shape(eps, "ddim_step");
    const double a_t = schedule.alpha_bar(t), a_prev = schedule.alpha_bar(t_prev);
    double sigma = 0.0;
    if (eta > 0.0)
        sigma = eta * std::sqrt((1.0 - a_prev) / (1.0 - a_t)) * std::sqrt(1.0 - a_t / a_prev);
    const double sa_t = std::sqrt(a_t), s1a_t = std::sqrt(1.0 - a_t);
    const double sa_prev = std::sqrt(a_prev), dir = std::sqrt(std::max(0.0, 1.0 - a_prev - sigma * sigma));
    Tensor out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i)
    {
        const double x0 = (z[i] - s1a_t * eps[i]) / sa_t;
        out[i] = sa_prev * x0 + dir * eps[i];
    }
    if (sigma > 0.0)
    {
        if (rng == nullptr)
            throw ValidationError("ddim_step: eta > 0 needs a random stream");
        for (auto& v : out.data())
            v += sigma * rng->normal();
    }
    return out;
}

enum class GuidanceMode
{
    standard,
    progressive,
};

inline GuidanceMode parse_guidance_mode(const std::string& s)
{
    if (s == "cfg" || s == "standard")
        return GuidanceMode::standard;
    if (s == "progressive")
        return GuidanceMode::progressive;
    throw ValidationError("guidance mode must be cfg or progressive, got '" + s + "'");
}

struct SamplerOptions
{
    GuidanceMode mode = GuidanceMode::progressive;
    double eta = 0.0;
};

/**
 * Runs total_steps DDIM steps from z ~ N(0, I) with the chosen guidance.
 *
 * The initial noise and any eta > 0 noise are drawn from `rng` in that order.
 */
template <Denoiser D>
Tensor sample(const D& denoiser, const ConditionSet& c, const CfgSchedule& sched, const NoiseSchedule& noise,
              const Shape& shape, Rng& rng, const SamplerOptions& options = {})
{
    validate_schedule(sched);
    Tensor z = randn(rng, shape);
    for (int step = sched.total_steps; step >= 1; --step)
    {
        const DenoiseStep s{step, ddim_timestep(step, sched.total_steps, noise)};
        const Tensor eps = options.mode == GuidanceMode::standard
                               ? cfg_estimate(z, c, s, sched.guidance_scale, denoiser)
                               : progressive_cfg_estimate(z, c, s, sched, denoiser);
        z = ddim_step(z, eps, s.timestep, ddim_timestep(step - 1, sched.total_steps, noise), noise, options.eta, &rng);
    }
    return z;
}

} // namespace dexp
