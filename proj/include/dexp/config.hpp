#pragma once

#include "dexp/core/sampling.hpp"
#include "dexp/io/json_io.hpp"
#include "dexp/quality.hpp"
#include "dexp/raymap.hpp"
#include "dexp/sampler.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>

namespace dexp {

inline constexpr const char* version_string = "1.0.0";

/// Tool-wide settings. Every field has a default; a config file may override any subset.
struct Config
{
    CfgSchedule schedule{};
    RaymapMode raymap_mode = RaymapMode::literal_w0;
    SampleOptions warp_fill{};
    LossWeights loss_weights{};
    ApdWeights apd_weights{};
    std::size_t crop_size = 224;
    double crop_margin = 0.1;
    double mask_pad = 2.0;
    double mask_cover = 0.5;
    double rotate_max_degrees = 30.0;
    double eta = 0.0;
    std::uint64_t seed = 0;
};

inline void validate_config(const Config& c)
{
    validate_schedule(c.schedule);
    if (c.crop_size == 0)
        throw ValidationError("config", "crop_size must be positive");
    if (!(c.crop_margin >= 0.0))
        throw ValidationError("config", "crop_margin must be non-negative");
    if (!(c.rotate_max_degrees >= 0.0))
        throw ValidationError("config", "rotate_max_degrees must be non-negative");
    if (!(c.eta >= 0.0))
        throw ValidationError("config", "eta must be non-negative");
    if (!std::isfinite(c.mask_pad) || !std::isfinite(c.mask_cover) || !std::isfinite(c.warp_fill.fill))
        throw ValidationError("config", "mask and fill values must be finite");
}

inline std::string to_string(OutOfBounds m) { return m == OutOfBounds::constant ? "constant" : "border"; }

inline OutOfBounds parse_out_of_bounds(const std::string& s)
{
    if (s == "constant")
        return OutOfBounds::constant;
    if (s == "border")
        return OutOfBounds::border;
    throw ValidationError("config", "fill mode must be constant or border, got '" + s + "'");
}

inline io::json config_to_json(const Config& c)
{
    return {{"guidance_scale", c.schedule.guidance_scale},
            {"schedule",
             {{"total_steps", c.schedule.total_steps},
              {"hold_steps", c.schedule.hold_steps},
              {"ramp_steps", c.schedule.ramp_steps},
              {"full_steps", c.schedule.full_steps}}},
            {"raymap_mode", to_string(c.raymap_mode)},
            {"warp_fill", {{"mode", to_string(c.warp_fill.mode)}, {"value", c.warp_fill.fill}}},
            {"loss_weights",
             {{"reconstruction", c.loss_weights.reconstruction},
              {"lpips", c.loss_weights.lpips},
              {"clpips", c.loss_weights.clpips}}},
            {"apd_weights",
             {{"rotation", c.apd_weights.rotation},
              {"translation", c.apd_weights.translation},
              {"scale", c.apd_weights.scale}}},
            {"crop_size", c.crop_size},
            {"crop_margin", c.crop_margin},
            {"mask_pad", c.mask_pad},
            {"mask_cover", c.mask_cover},
            {"rotate_max_degrees", c.rotate_max_degrees},
            {"eta", c.eta},
            {"seed", c.seed}};
}

namespace detail {

template <typename T>
void read_opt(const io::json& j, const char* key, T& out)
{
    if (!j.contains(key))
        return;
    try
    {
        out = j.at(key).get<T>();
    }
    catch (const io::json::exception&)
    {
        throw ValidationError("config", std::string("key '") + key + "' has the wrong type");
    }
}

} // namespace detail

/// Overlays the keys present in `j` on the defaults and validates the result. Unknown keys are errors.
inline Config config_from_json(const io::json& j)
{
    if (!j.is_object())
        throw ValidationError("config", "config must be an object");
    static const char* known[] = {"guidance_scale", "schedule",    "raymap_mode", "warp_fill",
                                  "loss_weights",   "apd_weights", "crop_size",   "crop_margin",
                                  "mask_pad",       "mask_cover",  "rotate_max_degrees", "eta",
                                  "seed"};
    for (const auto& [key, _] : j.items())
    {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw ValidationError("config", "unknown key '" + key + "'");
    }
    Config c;
    detail::read_opt(j, "guidance_scale", c.schedule.guidance_scale);
    if (j.contains("schedule"))
    {
        const auto& s = j.at("schedule");
        detail::read_opt(s, "total_steps", c.schedule.total_steps);
        detail::read_opt(s, "hold_steps", c.schedule.hold_steps);
        detail::read_opt(s, "ramp_steps", c.schedule.ramp_steps);
        detail::read_opt(s, "full_steps", c.schedule.full_steps);
    }
    if (j.contains("raymap_mode"))
        c.raymap_mode = parse_raymap_mode(j.at("raymap_mode").get<std::string>());
    if (j.contains("warp_fill"))
    {
        const auto& f = j.at("warp_fill");
        if (f.contains("mode"))
            c.warp_fill.mode = parse_out_of_bounds(f.at("mode").get<std::string>());
        detail::read_opt(f, "value", c.warp_fill.fill);
    }
    if (j.contains("loss_weights"))
    {
        const auto& w = j.at("loss_weights");
        detail::read_opt(w, "reconstruction", c.loss_weights.reconstruction);
        detail::read_opt(w, "lpips", c.loss_weights.lpips);
        detail::read_opt(w, "clpips", c.loss_weights.clpips);
    }
    if (j.contains("apd_weights"))
    {
        const auto& w = j.at("apd_weights");
        detail::read_opt(w, "rotation", c.apd_weights.rotation);
        detail::read_opt(w, "translation", c.apd_weights.translation);
        detail::read_opt(w, "scale", c.apd_weights.scale);
    }
    detail::read_opt(j, "crop_size", c.crop_size);
    detail::read_opt(j, "crop_margin", c.crop_margin);
    detail::read_opt(j, "mask_pad", c.mask_pad);
    detail::read_opt(j, "mask_cover", c.mask_cover);
    detail::read_opt(j, "rotate_max_degrees", c.rotate_max_degrees);
    detail::read_opt(j, "eta", c.eta);
    detail::read_opt(j, "seed", c.seed);
    validate_config(c);
    return c;
}

inline Config load_config(const std::string& path) { return config_from_json(io::read_json(path)); }

/// 64-bit FNV-1a hash of the canonical JSON dump, as 16 hex digits.
inline std::string config_hash(const Config& c)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_to_json(c).dump())
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace dexp
