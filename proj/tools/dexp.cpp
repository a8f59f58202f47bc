// Command-line front end: one subcommand per library operation.

#include "dexp/dexp.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace dexp;
using io::json;

namespace {

constexpr int exit_usage = 64;
constexpr int exit_validation = 2;

const std::set<std::string> subcommands{"raymap", "compose-pose", "warp",    "reshape", "adain",
                                        "schedule", "sample",     "augment", "metrics", "toylab"};

std::string one_line(std::string s)
{
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r')
            ch = ' ';
    return s;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s)
{
    const auto x = s.find('x');
    try
    {
        if (x == std::string::npos)
        {
            const auto n = std::stoul(s);
            return {n, n};
        }
        return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
    }
    catch (const std::exception&)
    {
        throw ValidationError("args", "size must be WxH or N, got '" + s + "'");
    }
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << text;
}

/// Shortest round-trip decimal, always with a fractional part.
std::string shortest(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".en") == std::string::npos)
        s += ".0";
    return s;
}

std::string schedule_table(const CfgSchedule& s)
{
    std::ostringstream os;
    os << "t\tw_excl\tw_full\n";
    for (int t = s.total_steps; t >= 1; --t)
    {
        const auto w = hybrid_weights(t, s);
        os << t << '\t' << shortest(w.without_expression) << '\t' << shortest(w.full) << '\n';
    }
    return os.str();
}

json factors_json(const toylab::ToyFactors& f)
{
    return {{"theta", f.theta},       {"tx", f.tx},
            {"ty", f.ty},             {"scale", f.scale},
            {"eye_open", f.eye_open}, {"mouth_curve", f.mouth_curve}};
}

json report_json(const toylab::ToyLab& lab, const toylab::SamplingReport& r)
{
    return {{"nearest", r.nearest},
            {"nearest_pose_cell", lab.items()[r.nearest].pose_cell},
            {"nearest_expression_cell", lab.items()[r.nearest].expression_cell},
            {"nearest_factors", factors_json(r.nearest_factors)},
            {"nearest_distance", r.nearest_distance},
            {"target_pose_cell", r.target_pose_cell},
            {"target_expression_cell", r.target_expression_cell},
            {"pose_match", r.pose_match},
            {"expression_match", r.expression_match},
            {"success", r.success},
            {"distances", r.distances}};
}

void require_cell(std::size_t cell, std::size_t count, const char* what)
{
    if (cell >= count)
        throw ValidationError("args", std::string(what) + " must be below " + std::to_string(count));
}

} // namespace

int main(int argc, char** argv)
{
    // Unknown or missing subcommands are usage errors; everything else is parsed by CLI11.
    // --version fires before CLI11 stores --config, so its path is taken here.
    std::string version_config;
    {
        std::optional<std::string> first;
        bool version = false;
        for (int i = 1; i < argc; ++i)
        {
            const std::string a = argv[i];
            if (a == "--version")
                version = true;
            else if (a == "--config")
            {
                if (i + 1 < argc)
                    version_config = argv[i + 1];
                ++i;
            }
            else if (a.rfind("--config=", 0) == 0)
                version_config = a.substr(9);
            else if (a == "-h" || a == "--help")
                continue;
            else
            {
                first = a;
                break;
            }
        }
        if (!version && first && !subcommands.contains(*first))
        {
            std::cerr << "error: usage: unknown subcommand '" << *first << "'\n"
                      << "usage: dexp [--config FILE] [--version] <raymap|compose-pose|warp|reshape|adain|schedule|"
                         "sample|augment|metrics|toylab> [options]\n";
            return exit_usage;
        }
    }

    CLI::App app{"dexp: pose and expression conditioning toolkit"};
    app.set_version_flag("--version", [] { return std::string(); });
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.require_subcommand(0, 1);

    std::optional<std::uint64_t> seed_flag;
    auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed_flag, "random seed (falls back to DEX_SEED)"); };

    // raymap
    auto* raymap_cmd = app.add_subcommand("raymap", "ray map of a pose");
    std::string rm_pose, rm_size = "64x64", rm_mode, rm_out, rm_png;
    raymap_cmd->add_option("--pose", rm_pose)->required();
    raymap_cmd->add_option("--size", rm_size, "WxH");
    raymap_cmd->add_option("--mode", rm_mode, "w0 or w1");
    raymap_cmd->add_option("--out", rm_out)->required();
    raymap_cmd->add_option("--png", rm_png);

    // compose-pose
    auto* compose_cmd = app.add_subcommand("compose-pose", "compose two poses");
    std::string cp_a, cp_b, cp_out, cp_op = "compose";
    compose_cmd->add_option("--a", cp_a, "first pose (source for relative)")->required();
    compose_cmd->add_option("--b", cp_b, "second pose (driving for relative)")->required();
    compose_cmd->add_option("--op", cp_op, "compose (a∘b) or relative (b∘a⁻¹)");
    compose_cmd->add_option("--out", cp_out)->required();

    // warp
    auto* warp_cmd = app.add_subcommand("warp", "warp a feature volume by a relative pose");
    std::string wp_volume, wp_rel, wp_out, wp_fill;
    std::optional<double> wp_fill_value;
    warp_cmd->add_option("--volume", wp_volume)->required();
    warp_cmd->add_option("--relpose", wp_rel)->required();
    warp_cmd->add_option("--fill", wp_fill, "constant or border");
    warp_cmd->add_option("--fill-value", wp_fill_value);
    warp_cmd->add_option("--out", wp_out)->required();

    // reshape
    auto* reshape_cmd = app.add_subcommand("reshape", "token grid to volume or back");
    std::string rs_tokens, rs_volume, rs_out;
    std::size_t rs_side = 0;
    auto* rs_tok_opt = reshape_cmd->add_option("--tokens", rs_tokens, "[h*h,c] tokens to volume");
    auto* rs_vol_opt = reshape_cmd->add_option("--volume", rs_volume, "[C,D,H,W] volume to tokens");
    rs_tok_opt->excludes(rs_vol_opt);
    reshape_cmd->add_option("--side", rs_side)->required();
    reshape_cmd->add_option("--out", rs_out)->required();

    // adain
    auto* adain_cmd = app.add_subcommand("adain", "adaptive instance normalization");
    std::string ad_content, ad_style, ad_out;
    double ad_eps = adain_default_eps;
    adain_cmd->add_option("--content", ad_content)->required();
    adain_cmd->add_option("--style", ad_style)->required();
    adain_cmd->add_option("--eps", ad_eps);
    adain_cmd->add_option("--out", ad_out)->required();

    // schedule
    auto* schedule_cmd = app.add_subcommand("schedule", "guidance blend table");
    std::optional<int> sc_steps, sc_hold, sc_ramp;
    std::string sc_out;
    schedule_cmd->add_option("--steps", sc_steps);
    schedule_cmd->add_option("--hold", sc_hold);
    schedule_cmd->add_option("--ramp", sc_ramp);
    schedule_cmd->add_option("--out", sc_out);

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "sample the toy lab");
    std::string sm_mode = "progressive", sm_out;
    std::optional<double> sm_omega, sm_eta;
    std::size_t sm_source = 4, sm_pose = 4, sm_expr = 1, sm_source_expr = 1;
    sample_cmd->add_option("--mode", sm_mode, "cfg or progressive");
    sample_cmd->add_option("--omega", sm_omega);
    sample_cmd->add_option("--eta", sm_eta);
    sample_cmd->add_option("--source-cell", sm_source, "pose cell of the source");
    sample_cmd->add_option("--source-expression", sm_source_expr, "expression cell of the source");
    sample_cmd->add_option("--pose-cell", sm_pose);
    sample_cmd->add_option("--expression-cell", sm_expr);
    sample_cmd->add_option("--out", sm_out, "output prefix; writes PREFIX.png, PREFIX.dxt, PREFIX.json")->required();
    add_seed(sample_cmd);

    // augment
    auto* augment_cmd = app.add_subcommand("augment", "pose or expression augmentation");
    std::string au_mode, au_image, au_landmarks, au_out, au_landmarks_out;
    std::optional<double> au_pad, au_max_degrees;
    augment_cmd->add_option("--mode", au_mode, "pose or exp")->required();
    augment_cmd->add_option("--image", au_image)->required();
    augment_cmd->add_option("--landmarks", au_landmarks)->required();
    augment_cmd->add_option("--pad", au_pad);
    augment_cmd->add_option("--max-degrees", au_max_degrees);
    augment_cmd->add_option("--out", au_out)->required();
    augment_cmd->add_option("--landmarks-out", au_landmarks_out);
    add_seed(augment_cmd);

    // metrics
    auto* metrics_cmd = app.add_subcommand("metrics", "image and landmark metrics");
    std::string mt_pred, mt_gt, mt_lp, mt_ld, mt_le, mt_ref, mt_out;
    metrics_cmd->add_option("--pred", mt_pred)->required();
    metrics_cmd->add_option("--gt", mt_gt)->required();
    metrics_cmd->add_option("--landmarks-pred", mt_lp);
    metrics_cmd->add_option("--landmarks-drive", mt_ld);
    metrics_cmd->add_option("--landmarks-exp", mt_le);
    metrics_cmd->add_option("--reference", mt_ref, "reference landmark layout (default: toy face)");
    metrics_cmd->add_option("--out", mt_out);

    // toylab demo
    auto* toylab_cmd = app.add_subcommand("toylab", "synthetic face lab");
    auto* demo_cmd = toylab_cmd->add_subcommand("demo", "render the grid and run the disentanglement experiment");
    toylab_cmd->require_subcommand(1);
    std::string tl_out;
    std::size_t tl_runs = 200, tl_keep = 9;
    demo_cmd->add_option("--out", tl_out)->required();
    demo_cmd->add_option("--runs", tl_runs);
    demo_cmd->add_option("--keep", tl_keep, "number of sampled images to write");
    add_seed(demo_cmd);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForVersion&)
    {
        try
        {
            const Config cfg = version_config.empty() ? Config{} : load_config(version_config);
            std::cout << "dexp " << version_string << " config " << config_hash(cfg) << '\n';
            return 0;
        }
        catch (const Error& e)
        {
            std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << '\n';
            return exit_validation;
        }
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        std::cerr << "error: args: " << one_line(e.what()) << '\n';
        return exit_validation;
    }
    if (app.get_subcommands().empty())
    {
        std::cerr << app.help();
        return exit_usage;
    }

    try
    {
        const Config cfg = config_path.empty() ? Config{} : load_config(config_path);
        auto seed = [&]() -> std::uint64_t {
            if (seed_flag)
                return *seed_flag;
            if (const char* env = std::getenv("DEX_SEED"))
            {
                try
                {
                    std::size_t used = 0;
                    const auto v = std::stoull(env, &used);
                    if (used == std::string(env).size())
                        return v;
                }
                catch (const std::exception&)
                {
                }
                throw ValidationError("args", std::string("DEX_SEED is not an unsigned integer: '") + env + "'");
            }
            return cfg.seed;
        };

        if (raymap_cmd->parsed())
        {
            const PoseRTS p = io::load_pose(rm_pose);
            const auto [w, h] = parse_size(rm_size);
            const RaymapMode mode = rm_mode.empty() ? cfg.raymap_mode : parse_raymap_mode(rm_mode);
            const RayMap map = compute_raymap(p, w, h, mode);
            save_dxt(rm_out, map.data);
            if (!rm_png.empty())
            {
                double extent = 0.0;
                write_png(rm_png, raymap_to_rgb(map.data, &extent));
                std::cerr << "rgb = 0.5 + 0.5 * value / " << extent << " (channels x,y,z -> r,g,b)\n";
            }
        }
        else if (compose_cmd->parsed())
        {
            const PoseRTS a = io::load_pose(cp_a), b = io::load_pose(cp_b);
            PoseRTS out;
            if (cp_op == "compose")
                out = pose_compose(a, b);
            else if (cp_op == "relative")
                out = relative_pose(a, b);
            else
                throw ValidationError("args", "--op must be compose or relative, got '" + cp_op + "'");
            io::save_pose(cp_out, out);
        }
        else if (warp_cmd->parsed())
        {
            SampleOptions opts = cfg.warp_fill;
            if (!wp_fill.empty())
                opts.mode = parse_out_of_bounds(wp_fill);
            if (wp_fill_value)
                opts.fill = *wp_fill_value;
            const FeatureVolume v = make_feature_volume(load_dxt(wp_volume));
            save_dxt(wp_out, warp_volume(v, io::load_pose(wp_rel), opts).data);
        }
        else if (reshape_cmd->parsed())
        {
            if (!rs_tokens.empty())
            {
                TokenGrid g = make_token_grid(load_dxt(rs_tokens));
                if (g.side != rs_side)
                    throw ValidationError("reshape", "token grid has side " + std::to_string(g.side) + ", --side is " +
                                                         std::to_string(rs_side));
                save_dxt(rs_out, tokens_to_volume(g).data);
            }
            else if (!rs_volume.empty())
                save_dxt(rs_out, volume_to_tokens(make_feature_volume(load_dxt(rs_volume)), rs_side).data);
            else
                throw ValidationError("args", "reshape needs --tokens or --volume");
        }
        else if (adain_cmd->parsed())
        {
            save_dxt(ad_out, adain(load_dxt(ad_content), io::load_style(ad_style), ad_eps));
        }
        else if (schedule_cmd->parsed())
        {
            CfgSchedule s = cfg.schedule;
            if (sc_steps)
                s.total_steps = *sc_steps;
            if (sc_hold)
                s.hold_steps = *sc_hold;
            if (sc_ramp)
                s.ramp_steps = *sc_ramp;
            if (sc_steps || sc_hold || sc_ramp)
                s.full_steps = s.total_steps - s.hold_steps - s.ramp_steps;
            validate_schedule(s);
            const std::string table = schedule_table(s);
            std::cout << table;
            if (!sc_out.empty())
                write_text(sc_out, table);
        }
        else if (sample_cmd->parsed())
        {
            CfgSchedule sched = cfg.schedule;
            if (sm_omega)
                sched.guidance_scale = *sm_omega;
            SamplerOptions opts{parse_guidance_mode(sm_mode), sm_eta ? *sm_eta : cfg.eta};
            if (!(opts.eta >= 0.0))
                throw ValidationError("args", "--eta must be non-negative");
            const toylab::ToyLab lab;
            require_cell(sm_source, lab.pose_cells(), "--source-cell");
            require_cell(sm_pose, lab.pose_cells(), "--pose-cell");
            require_cell(sm_source_expr, lab.expression_cells(), "--source-expression");
            require_cell(sm_expr, lab.expression_cells(), "--expression-cell");
            const auto result = lab.run(lab.cell_factors(sm_source, sm_source_expr), lab.cell_factors(sm_pose, 0),
                                        lab.cell_factors(0, sm_expr), sched, seed(), opts);
            write_png(sm_out + ".png", result.image);
            save_dxt(sm_out + ".dxt", result.image);
            json report = report_json(lab, result.report);
            report["mode"] = sm_mode;
            report["seed"] = seed();
            io::write_json(sm_out + ".json", report);
            std::cout << "nearest " << result.report.nearest << " success " << (result.report.success ? 1 : 0)
                      << '\n';
        }
        else if (augment_cmd->parsed())
        {
            const Tensor img = read_png(au_image);
            LandmarkSet lm = io::load_landmarks(au_landmarks);
            clamp_landmarks(lm, static_cast<double>(img.extent(2)), static_cast<double>(img.extent(1)));
            if (au_mode == "pose")
            {
                const double pad = au_pad ? *au_pad : cfg.mask_pad;
                const double max_deg = au_max_degrees ? *au_max_degrees : cfg.rotate_max_degrees;
                Rng rng(seed());
                const Tensor masked = mask_pose_regions(img, lm, pad, cfg.mask_cover);
                const auto rotated = random_rotate(masked, rng, max_deg);
                write_png(au_out, rotated.image);
                if (!au_landmarks_out.empty())
                    io::save_landmarks(au_landmarks_out,
                                       rotate_landmarks(lm, rotated.degrees, img.extent(2), img.extent(1)));
                std::cout << "angle " << io::json(rotated.degrees).dump() << '\n';
            }
            else if (au_mode == "exp")
            {
                CropOptions opts;
                opts.size = cfg.crop_size;
                opts.margin = cfg.crop_margin;
                write_png(au_out, crop_expression(img, lm, opts));
                if (!au_landmarks_out.empty())
                {
                    const CropTransform tf = crop_window(lm.bbox, opts);
                    LandmarkSet out = lm;
                    for (auto& p : out.points)
                        p = tf.apply(p);
                    const auto n = static_cast<double>(opts.size);
                    out.bbox = {(lm.bbox.x - tf.origin_x) * tf.scale, (lm.bbox.y - tf.origin_y) * tf.scale,
                                lm.bbox.w * tf.scale, lm.bbox.h * tf.scale};
                    clamp_landmarks(out, n, n);
                    io::save_landmarks(au_landmarks_out, out);
                }
            }
            else
                throw ValidationError("args", "--mode must be pose or exp, got '" + au_mode + "'");
        }
        else if (metrics_cmd->parsed())
        {
            const Tensor pred = read_png(mt_pred), gt = read_png(mt_gt);
            json report;
            const double p = psnr(pred, gt);
            report["psnr"] = std::isinf(p) ? json("inf") : json(p);
            report["ssim"] = ssim(pred, gt);
            report["l1"] = l1_loss(pred, gt);
            const LandmarkSet ref = mt_ref.empty() ? toylab::reference_landmarks() : io::load_landmarks(mt_ref);
            if (!mt_lp.empty())
            {
                const LandmarkSet lp = io::load_landmarks(mt_lp);
                if (!mt_ld.empty())
                {
                    const auto d = apd(lp, io::load_landmarks(mt_ld), ref, cfg.apd_weights);
                    report["apd"] = {{"rotation", d.rotation},
                                     {"translation", d.translation},
                                     {"scale", d.scale},
                                     {"total", d.total}};
                }
                if (!mt_le.empty())
                    report["aed"] = aed(lp, io::load_landmarks(mt_le), ref);
            }
            else if (!mt_ld.empty() || !mt_le.empty())
                throw ValidationError("args", "--landmarks-drive and --landmarks-exp need --landmarks-pred");
            std::cout << report.dump(2) << '\n';
            if (!mt_out.empty())
                io::write_json(mt_out, report);
        }
        else if (demo_cmd->parsed())
        {
            if (tl_runs == 0)
                throw ValidationError("args", "--runs must be positive");
            const auto t0 = std::chrono::steady_clock::now();
            fs::create_directories(tl_out);
            const toylab::ToyLab lab;
            const fs::path dir(tl_out);
            for (const auto& item : lab.items())
            {
                char name[64];
                std::snprintf(name, sizeof(name), "grid_p%zu_e%zu.png", item.pose_cell, item.expression_cell);
                write_png((dir / name).string(), toylab::from_data_space(item.data));
            }
            write_text((dir / "schedule.txt").string(), schedule_table(cfg.schedule));

            // Same run draws as disentangled_experiment, keeping the first images.
            Rng picker(seed());
            SamplerOptions opts{GuidanceMode::progressive, cfg.eta};
            toylab::ExperimentSummary summary;
            json runs = json::array();
            for (std::size_t k = 0; k < tl_runs; ++k)
            {
                const std::size_t src_p = picker.index(lab.pose_cells()), src_e = picker.index(lab.expression_cells());
                const std::size_t pc = picker.index(lab.pose_cells()), ec = picker.index(lab.expression_cells());
                const std::uint64_t run_seed = picker.next_u64();
                const auto r = lab.run(lab.cell_factors(src_p, src_e), lab.cell_factors(pc, 0),
                                       lab.cell_factors(0, ec), cfg.schedule, run_seed, opts);
                ++summary.runs;
                summary.successes += r.report.success ? 1 : 0;
                summary.pose_matches += r.report.pose_match ? 1 : 0;
                summary.expression_matches += r.report.expression_match ? 1 : 0;
                if (k < tl_keep)
                {
                    char name[64];
                    std::snprintf(name, sizeof(name), "sample_%03zu.png", k);
                    write_png((dir / name).string(), r.image);
                }
                runs.push_back({{"run", k},
                                {"seed", run_seed},
                                {"source", {src_p, src_e}},
                                {"pose_cell", pc},
                                {"expression_cell", ec},
                                {"nearest", r.report.nearest},
                                {"success", r.report.success}});
            }
            const double rate = summary.success_rate();
            json report = {{"seed", seed()},
                           {"runs", summary.runs},
                           {"successes", summary.successes},
                           {"pose_matches", summary.pose_matches},
                           {"expression_matches", summary.expression_matches},
                           {"success_rate", rate},
                           {"threshold", 0.95},
                           {"pass", rate >= 0.95},
                           {"guidance_scale", cfg.schedule.guidance_scale},
                           {"size", lab.config().size},
                           {"pose_cells", lab.pose_cells()},
                           {"expression_cells", lab.expression_cells()},
                           {"per_run", runs}};
            io::write_json((dir / "report.json").string(), report);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "success " << summary.successes << "/" << summary.runs << " rate " << rate
                      << (rate >= 0.95 ? " PASS" : " FAIL") << '\n';
            std::cerr << "elapsed " << secs << " s\n";
        }
        return 0;
    }
    catch (const Error& e)
    {
        std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << '\n';
        return exit_validation;
    }
    catch (const json::exception& e)
    {
        std::cerr << "error: parse: " << one_line(e.what()) << '\n';
        return exit_validation;
    }
    catch (const fs::filesystem_error& e)
    {
        std::cerr << "error: io: " << one_line(e.what()) << '\n';
        return exit_validation;
    }
}
