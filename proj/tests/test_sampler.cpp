#include "dexp/core/rng.hpp"
#include "dexp/sampler.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace dexp;

namespace {

// Returns a constant that identifies which slots are filled: none 0, without expression 1, full 3.
struct SlotDenoiser
{
    Tensor operator()(const Tensor& z, const ConditionSet& c, const DenoiseStep&) const
    {
        double v = 0;
        if (!c.empty())
            v = c.expression ? 3.0 : 1.0;
        return Tensor(z.shape(), v);
    }
};

ConditionSet full_condition()
{
    ConditionSet c;
    c.identity = Tensor({1, 2, 2}, 0.5);
    c.pose = PoseCondition{Tensor({6, 2, 2}), PoseRTS::identity()};
    c.expression = ExpressionLatent::zeros();
    return c;
}

// Depends on z, the step and every slot so that each branch produces a different value.
Tensor mixing_denoiser(const Tensor& z, const ConditionSet& c, const DenoiseStep& s)
{
    Tensor out(z.shape());
    const double k = (c.identity ? 0.3 : 0.0) + (c.pose ? 0.7 : 0.0) + (c.expression ? 1.1 : 0.0);
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = std::sin(z[i] * (1.0 + k) + 0.01 * s.step) * (0.5 + k);
    return out;
}

} // namespace

TEST(NoiseSchedule, AlphaBarDecreasesFromOne)
{
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    EXPECT_EQ(s.steps(), 1000u);
    EXPECT_EQ(s.alpha_bar(0), 1.0);
    for (std::size_t t = 1; t <= 1000; ++t)
        ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.alpha_bar(1000), 0.0);
    EXPECT_LT(s.alpha_bar(1000), 0.01);
    EXPECT_THROW(s.alpha_bar(1001), ValidationError);
    EXPECT_THROW(NoiseSchedule({0.5, 0.1}), ValidationError);
}

TEST(ForwardNoise, ZeroIsIdentity)
{
    Rng rng(1);
    const Tensor x = randn(rng, {3, 4, 4});
    EXPECT_EQ(forward_noise(x, 0, NoiseSchedule::scaled_linear(), rng).z, x);
}

TEST(ForwardNoise, VarianceMatchesSchedule)
{
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    Rng rng(2);
    const Tensor x({10000}, 1.0);
    for (std::size_t t : {100u, 500u, 900u})
    {
        const Tensor z = forward_noise(x, t, s, rng).z;
        EXPECT_NEAR(mean(z), std::sqrt(s.alpha_bar(t)), 0.05);
        EXPECT_NEAR(variance(z) / (1.0 - s.alpha_bar(t)), 1.0, 0.03);
    }
}

TEST(ForwardNoise, DeterministicAndReportsNoise)
{
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    Rng a(3), b(3);
    const Tensor x({5}, {1, 2, 3, 4, 5});
    const auto na = forward_noise(x, 400, s, a), nb = forward_noise(x, 400, s, b);
    EXPECT_EQ(na.z, nb.z);
    const Tensor rebuilt = axpby(std::sqrt(s.alpha_bar(400)), x, std::sqrt(1 - s.alpha_bar(400)), na.noise);
    EXPECT_EQ(rebuilt, na.z);
    EXPECT_THROW(forward_noise(x, 1001, s, a), ValidationError);
}

TEST(Cfg, OmegaOneIsConditionalOmegaZeroIsUnconditional)
{
    Rng rng(4);
    const Tensor z = randn(rng, {2, 3, 3});
    const ConditionSet c = full_condition();
    const DenoiseStep s{10, 300};
    EXPECT_EQ(cfg_estimate(z, c, s, 1.0, mixing_denoiser), mixing_denoiser(z, c, s));
    EXPECT_EQ(cfg_estimate(z, c, s, 0.0, mixing_denoiser), mixing_denoiser(z, ConditionSet::none(), s));
}

TEST(Cfg, WorkedExampleAndEquivalentForm)
{
    const Tensor cond({3}, {1.0, -2.0, 0.5}), uncond({3}, {0.2, 0.4, 0.5});
    const Tensor g = guided_combination(cond, uncond, 2.5);
    const double expect[3] = {2.5 * 1.0 - 1.5 * 0.2, 2.5 * -2.0 - 1.5 * 0.4, 0.5};
    for (std::size_t i = 0; i < 3; ++i)
    {
        EXPECT_NEAR(g[i], expect[i], 1e-15);
        EXPECT_NEAR(g[i], uncond[i] + 2.5 * (cond[i] - uncond[i]), 1e-15);
    }
}

TEST(HybridWeights, DefaultTable)
{
    const CfgSchedule s;
    for (int t = 31; t <= 35; ++t)
    {
        EXPECT_EQ(hybrid_weights(t, s).without_expression, 1.0);
        EXPECT_EQ(hybrid_weights(t, s).full, 0.0);
    }
    for (int t = 1; t <= 25; ++t)
    {
        EXPECT_EQ(hybrid_weights(t, s).without_expression, 0.0);
        EXPECT_EQ(hybrid_weights(t, s).full, 1.0);
    }
    const BlendWeights w = hybrid_weights(28, s);
    EXPECT_DOUBLE_EQ(w.without_expression, 0.6);
    EXPECT_DOUBLE_EQ(w.full, 0.4);
    EXPECT_EQ(hybrid_weights(30, s).without_expression, 1.0);
    EXPECT_EQ(hybrid_weights(26, s).without_expression, 0.2);
}

TEST(HybridWeights, SumToOneAndMonotone)
{
    const CfgSchedule s;
    double prev_full = -1;
    for (int t = 35; t >= 1; --t)
    {
        const BlendWeights w = hybrid_weights(t, s);
        EXPECT_NEAR(w.without_expression + w.full, 1.0, 1e-15);
        EXPECT_GE(w.full, prev_full);
        if (prev_full >= 0)
            EXPECT_LE(w.full - prev_full, 0.2 + 1e-15);
        prev_full = w.full;
    }
}

TEST(HybridWeights, Validation)
{
    EXPECT_THROW(hybrid_weights(0, CfgSchedule{}), ValidationError);
    EXPECT_THROW(hybrid_weights(36, CfgSchedule{}), ValidationError);
    EXPECT_THROW(validate_schedule({35, 5, 5, 20, 2.5}), ValidationError);
    try
    {
        validate_schedule({35, 5, 5, 20, 2.5});
    }
    catch (const ValidationError& e)
    {
        EXPECT_EQ(e.code(), "schedule");
    }
}

TEST(ProgressiveCfg, BranchValues)
{
    const CfgSchedule s;
    const ConditionSet c = full_condition();
    const Tensor z({4}, 0.0);
    const SlotDenoiser den;
    // excl = 2.5 * 1 and full = 2.5 * 3 against an unconditional 0
    EXPECT_DOUBLE_EQ(progressive_cfg_estimate(z, c, {33, 900}, s, den)[0], 2.5);
    EXPECT_DOUBLE_EQ(progressive_cfg_estimate(z, c, {28, 700}, s, den)[0], 0.6 * 2.5 + 0.4 * 7.5);
    EXPECT_DOUBLE_EQ(progressive_cfg_estimate(z, c, {10, 200}, s, den)[0], 7.5);
}

TEST(ProgressiveCfg, MatchesExplicitBlend)
{
    const CfgSchedule s;
    const ConditionSet c = full_condition();
    Rng rng(5);
    const Tensor z = randn(rng, {2, 4, 4});
    for (int t = 1; t <= 35; ++t)
    {
        const DenoiseStep st{t, static_cast<std::size_t>(t * 20)};
        const BlendWeights w = hybrid_weights(t, s);
        const Tensor ref = axpby(w.without_expression, cfg_estimate(z, c.without_expression(), st, 2.5, mixing_denoiser),
                                 w.full, cfg_estimate(z, c, st, 2.5, mixing_denoiser));
        ASSERT_LE(max_abs_diff(progressive_cfg_estimate(z, c, st, s, mixing_denoiser), ref), 1e-14) << t;
    }
}

TEST(ProgressiveCfg, EmptyExpressionIsBitExactCfg)
{
    const CfgSchedule s;
    const ConditionSet c = full_condition().without_expression();
    Rng rng(6);
    const Tensor z = randn(rng, {3, 5, 5});
    for (int t = 1; t <= 35; ++t)
    {
        const DenoiseStep st{t, static_cast<std::size_t>(t * 25)};
        ASSERT_EQ(progressive_cfg_estimate(z, c, st, s, mixing_denoiser), cfg_estimate(z, c, st, 2.5, mixing_denoiser));
    }
}

TEST(Ddim, TimestepMapping)
{
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    EXPECT_EQ(ddim_timestep(35, 35, s), 1000u);
    EXPECT_EQ(ddim_timestep(1, 35, s), 1u);
    EXPECT_EQ(ddim_timestep(0, 35, s), 0u);
    for (int t = 1; t < 35; ++t)
        EXPECT_LT(ddim_timestep(t, 35, s), ddim_timestep(t + 1, 35, s));
    EXPECT_THROW(ddim_timestep(36, 35, s), ValidationError);
}

TEST(Ddim, ExactNoiseStaysOnTrajectory)
{
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    Rng rng(7);
    const Tensor x0 = randn(rng, {2, 6, 6}), e = randn(rng, {2, 6, 6});
    for (auto [t, tp] : {std::pair<std::size_t, std::size_t>{1000, 971}, {500, 200}, {30, 0}, {1, 0}})
    {
        const Tensor zt = axpby(std::sqrt(s.alpha_bar(t)), x0, std::sqrt(1 - s.alpha_bar(t)), e);
        const Tensor ref = axpby(std::sqrt(s.alpha_bar(tp)), x0, std::sqrt(1 - s.alpha_bar(tp)), e);
        EXPECT_LE(max_abs_diff(ddim_step(zt, e, t, tp, s), ref), 1e-10) << t;
    }
}

TEST(Ddim, SameTimestepIsIdentity)
{
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    Rng rng(8);
    const Tensor z = randn(rng, {10}), e = randn(rng, {10});
    EXPECT_LE(max_abs_diff(ddim_step(z, e, 400, 400, s), z), 1e-12);
    EXPECT_THROW(ddim_step(z, e, 400, 401, s), ValidationError);
    EXPECT_THROW(ddim_step(z, e, 0, 0, s), ValidationError);
    EXPECT_THROW(ddim_step(z, e, 400, 300, s, 0.5), ValidationError);
}

TEST(Sample, ZeroDenoiserScalesInitialNoise)
{
    const NoiseSchedule ns = NoiseSchedule::scaled_linear();
    const auto zero = [](const Tensor& z, const ConditionSet&, const DenoiseStep&) { return Tensor(z.shape()); };
    Rng a(9), b(9);
    const Tensor out = sample(zero, full_condition(), CfgSchedule{}, ns, {2, 4, 4}, a);
    const Tensor z0 = randn(b, {2, 4, 4});
    EXPECT_LE(max_abs_diff(out, z0 * (1.0 / std::sqrt(ns.alpha_bar(1000)))), 1e-9);
}

TEST(Sample, DeterministicPerSeed)
{
    const NoiseSchedule ns = NoiseSchedule::scaled_linear();
    Rng a(10), b(10), c(11);
    const Tensor x = sample(mixing_denoiser, full_condition(), CfgSchedule{}, ns, {1, 8, 8}, a);
    EXPECT_EQ(x, sample(mixing_denoiser, full_condition(), CfgSchedule{}, ns, {1, 8, 8}, b));
    EXPECT_NE(x, sample(mixing_denoiser, full_condition(), CfgSchedule{}, ns, {1, 8, 8}, c));
}

TEST(Sample, SinglePointDataRecoversThePoint)
{
    const NoiseSchedule ns = NoiseSchedule::scaled_linear();
    Rng rng(12);
    const Tensor x = rand_uniform(rng, {1, 8, 8}, -1, 1);
    const auto den = [&](const Tensor& z, const ConditionSet&, const DenoiseStep& s) {
        return oracle::single_point_eps(z, x, ns.alpha_bar(s.timestep));
    };
    for (auto mode : {GuidanceMode::standard, GuidanceMode::progressive})
    {
        const Tensor out = sample(den, full_condition(), CfgSchedule{}, ns, x.shape(), rng, {mode, 0.0});
        EXPECT_LE(rmse(out, x), 1e-3);
    }
    const Tensor stochastic = sample(den, full_condition(), CfgSchedule{}, ns, x.shape(), rng, {GuidanceMode::progressive, 1.0});
    EXPECT_LE(rmse(stochastic, x), 1e-3);
}

TEST(GuidanceMode, Parse)
{
    EXPECT_EQ(parse_guidance_mode("cfg"), GuidanceMode::standard);
    EXPECT_EQ(parse_guidance_mode("progressive"), GuidanceMode::progressive);
    EXPECT_THROW(parse_guidance_mode("other"), ValidationError);
}
