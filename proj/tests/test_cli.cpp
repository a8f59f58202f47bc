#include "dexp/dexp.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dexp;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir()
{
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / ("dexp_test_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

struct CliResult
{
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CliResult run(const std::string& args, const std::string& env = "")
{
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = env + " \"" DEXP_CLI_PATH "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

} // namespace

TEST(Cli, UnknownSubcommandIsUsageError)
{
    const CliResult r = run("frobnicate");
    EXPECT_EQ(r.code, 64);
    EXPECT_NE(r.err.find("usage"), std::string::npos);
    EXPECT_EQ(run("").code, 64);
}

TEST(Cli, ValidationErrorsExitTwoWithOneLine)
{
    const CliResult missing = run("schedule --steps 35 --hold 40");
    EXPECT_EQ(missing.code, 2);
    EXPECT_EQ(missing.err.rfind("error: schedule: ", 0), 0u) << missing.err;
    EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);
    EXPECT_EQ(run("raymap --out x.dxt").code, 2);
    EXPECT_EQ(run("raymap --pose \"" + path("absent.json") + "\" --out \"" + path("x.dxt") + "\"").code, 2);
}

TEST(Cli, DefaultScheduleTable)
{
    const CliResult r = run("schedule");
    ASSERT_EQ(r.code, 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "t\tw_excl\tw_full");
    std::vector<std::string> rows;
    while (std::getline(in, line))
        rows.push_back(line);
    ASSERT_EQ(rows.size(), 35u);
    EXPECT_EQ(rows[0], "35\t1.0\t0.0");
    EXPECT_EQ(rows[4], "31\t1.0\t0.0");
    EXPECT_EQ(rows[5], "30\t1.0\t0.0");
    EXPECT_EQ(rows[7], "28\t0.6\t0.4");
    EXPECT_EQ(rows[9], "26\t0.2\t0.8");
    EXPECT_EQ(rows[10], "25\t0.0\t1.0");
    EXPECT_EQ(rows[34], "1\t0.0\t1.0");
}

TEST(Cli, MetricsOnIdenticalImages)
{
    const auto img = path("face.png");
    write_png(img, toylab::render_face({}, 64).image);
    const CliResult r = run("metrics --pred \"" + img + "\" --gt \"" + img + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = io::json::parse(r.out);
    EXPECT_EQ(j.at("psnr"), "inf");
    EXPECT_EQ(j.at("ssim").get<double>(), 1.0);
    EXPECT_EQ(j.at("l1").get<double>(), 0.0);
}

TEST(Cli, MetricsWithLandmarksMatchLibrary)
{
    const auto img = path("face.png");
    write_png(img, toylab::render_face({}, 64).image);
    const LandmarkSet a = toylab::face_landmarks({0.1, 0, 0, 1, 1, 0.8}, 64);
    const LandmarkSet b = toylab::face_landmarks({-0.2, 0.1, 0, 0.8, 0.5, 0.0}, 64);
    io::save_landmarks(path("a.json"), a);
    io::save_landmarks(path("b.json"), b);
    const CliResult r = run("metrics --pred \"" + img + "\" --gt \"" + img + "\" --landmarks-pred \"" + path("a.json") +
                      "\" --landmarks-drive \"" + path("b.json") + "\" --landmarks-exp \"" + path("b.json") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = io::json::parse(r.out);
    const LandmarkSet ra = io::load_landmarks(path("a.json")), rb = io::load_landmarks(path("b.json"));
    const auto ref = toylab::reference_landmarks();
    EXPECT_EQ(j.at("apd").at("total").get<double>(), apd(ra, rb, ref).total);
    EXPECT_EQ(j.at("aed").get<double>(), aed(ra, rb, ref));
}

TEST(Cli, RaymapEqualsLibrary)
{
    const PoseRTS p = make_pose(euler_to_rotation(0.2, -0.1, 0.4), 0.1, -0.2, 1.3);
    io::save_pose(path("p.json"), p);
    for (const std::string mode : {"w0", "w1"})
    {
        const CliResult r = run("raymap --pose \"" + path("p.json") + "\" --size 12x8 --mode " + mode + " --out \"" +
                          path("map.dxt") + "\" --png \"" + path("map.png") + "\"");
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_NE(r.err.find("rgb = 0.5 + 0.5"), std::string::npos);
        EXPECT_EQ(load_dxt(path("map.dxt")), compute_raymap(io::load_pose(path("p.json")), 12, 8, parse_raymap_mode(mode)).data);
        EXPECT_TRUE(fs::exists(path("map.png")));
    }
}

TEST(Cli, ComposePoseEqualsLibrary)
{
    const PoseRTS a = make_pose(euler_to_rotation(0.2, 0.3, -0.4), 0.1, 0.2, 0.9);
    const PoseRTS b = make_pose(euler_to_rotation(-0.5, 0.1, 0.7), -0.3, 0.05, 1.4);
    io::save_pose(path("a_pose.json"), a);
    io::save_pose(path("b_pose.json"), b);
    const PoseRTS la = io::load_pose(path("a_pose.json")), lb = io::load_pose(path("b_pose.json"));
    for (const std::string op : {"compose", "relative"})
    {
        const CliResult r = run("compose-pose --a \"" + path("a_pose.json") + "\" --b \"" + path("b_pose.json") + "\" --op " +
                          op + " --out \"" + path("c_pose.json") + "\"");
        ASSERT_EQ(r.code, 0) << r.err;
        const PoseRTS expect = op == "compose" ? pose_compose(la, lb) : relative_pose(la, lb);
        EXPECT_EQ(io::read_json(path("c_pose.json")), io::pose_to_json(expect));
    }
    EXPECT_EQ(run("compose-pose --a \"" + path("a_pose.json") + "\" --b \"" + path("b_pose.json") +
                  "\" --op divide --out \"" + path("c_pose.json") + "\"")
                  .code,
              2);
}

TEST(Cli, WarpReshapeAdainEqualLibrary)
{
    Rng rng(1);
    const Tensor vol = randn(rng, {2, 4, 8, 8});
    save_dxt(path("vol.dxt"), vol);
    const PoseRTS rel = make_pose(rotation_z(0.3), 0.1, 0.0, 1.1);
    io::save_pose(path("rel.json"), rel);
    CliResult r = run("warp --volume \"" + path("vol.dxt") + "\" --relpose \"" + path("rel.json") +
                "\" --fill border --out \"" + path("warped.dxt") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_dxt(path("warped.dxt")),
              warp_volume(make_feature_volume(vol), io::load_pose(path("rel.json")), {OutOfBounds::border, 0.0}).data);

    r = run("reshape --volume \"" + path("vol.dxt") + "\" --side 8 --out \"" + path("tokens.dxt") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const Tensor tokens = load_dxt(path("tokens.dxt"));
    EXPECT_EQ(tokens, volume_to_tokens(make_feature_volume(vol), 8).data);
    r = run("reshape --tokens \"" + path("tokens.dxt") + "\" --side 8 --out \"" + path("back.dxt") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_dxt(path("back.dxt")), vol);

    const Tensor content = randn(rng, {3, 5, 5});
    save_dxt(path("content.dxt"), content);
    const StyleParams style{{1.5, -0.5, 2.0}, {0.1, 0.0, -1.0}};
    io::write_json(path("style.json"), io::style_to_json(style));
    r = run("adain --content \"" + path("content.dxt") + "\" --style \"" + path("style.json") + "\" --out \"" +
            path("adain.dxt") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_dxt(path("adain.dxt")), adain(content, io::load_style(path("style.json"))));
}

TEST(Cli, SampleIsDeterministicAndMatchesLibrary)
{
    const std::string args = "sample --pose-cell 2 --expression-cell 1 --source-cell 6 --seed 17 --out \"";
    ASSERT_EQ(run(args + path("s1") + "\"").code, 0);
    ASSERT_EQ(run(args + path("s2") + "\"").code, 0);
    EXPECT_EQ(slurp(path("s1.png")), slurp(path("s2.png")));
    EXPECT_EQ(slurp(path("s1.dxt")), slurp(path("s2.dxt")));
    EXPECT_EQ(slurp(path("s1.json")), slurp(path("s2.json")));

    const toylab::ToyLab lab;
    const auto result = lab.run(lab.cell_factors(6, 1), lab.cell_factors(2, 0), lab.cell_factors(0, 1), CfgSchedule{}, 17);
    EXPECT_EQ(load_dxt(path("s1.dxt")), result.image);
    EXPECT_TRUE(io::read_json(path("s1.json")).at("success").get<bool>());
}

TEST(Cli, SeedFallsBackToEnvironment)
{
    const std::string args = "sample --pose-cell 1 --expression-cell 2 --out \"";
    ASSERT_EQ(run(args + path("e1") + "\"", "DEX_SEED=5").code, 0);
    ASSERT_EQ(run(args + path("e2") + "\" --seed 5").code, 0);
    EXPECT_EQ(slurp(path("e1.dxt")), slurp(path("e2.dxt")));
    EXPECT_EQ(run(args + path("e3") + "\"", "DEX_SEED=abc").code, 2);
}

TEST(Cli, AugmentIsDeterministic)
{
    const toylab::ToyRender face = toylab::render_face({0.1, 0.05, 0, 0.8, 1, 0.5}, 96);
    write_png(path("aug_in.png"), face.image);
    io::save_landmarks(path("aug_lm.json"), face.landmarks);
    const std::string base = "augment --image \"" + path("aug_in.png") + "\" --landmarks \"" + path("aug_lm.json") + "\"";
    ASSERT_EQ(run(base + " --mode pose --seed 3 --out \"" + path("p1.png") + "\"").code, 0);
    ASSERT_EQ(run(base + " --mode pose --seed 3 --out \"" + path("p2.png") + "\"").code, 0);
    EXPECT_EQ(slurp(path("p1.png")), slurp(path("p2.png")));

    const CliResult r = run(base + " --mode exp --out \"" + path("x.png") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    const Tensor crop = read_png(path("x.png"));
    EXPECT_EQ(crop.shape(), (Shape{1, 224, 224}));
    const Tensor expect =
        crop_expression(read_png(path("aug_in.png")), io::load_landmarks(path("aug_lm.json")), {224, 0.1, {}});
    Tensor quantized(expect.shape());
    const auto q = quantize_image(expect);
    for (std::size_t k = 0; k < q.size(); ++k)
        quantized[k] = q[k] / 255.0;
    EXPECT_EQ(crop, quantized);
    EXPECT_EQ(run(base + " --mode sideways --out \"" + path("x.png") + "\"").code, 2);
}

TEST(Cli, VersionPrintsConfigHash)
{
    const CliResult r = run("--version");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out, std::string("dexp 1.0.0 config ") + config_hash(Config{}) + "\n");
    io::write_json(path("cfg.json"), {{"guidance_scale", 3.0}});
    Config c;
    c.schedule.guidance_scale = 3.0;
    EXPECT_EQ(run("--config \"" + path("cfg.json") + "\" --version").out,
              std::string("dexp 1.0.0 config ") + config_hash(c) + "\n");
}

TEST(Cli, ConfigChangesTheSchedule)
{
    io::write_json(path("cfg2.json"), {{"schedule", {{"hold_steps", 3}, {"ramp_steps", 4}, {"full_steps", 28}}}});
    const CliResult r = run("--config \"" + path("cfg2.json") + "\" schedule");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\n32\t1.0\t0.0\n"), std::string::npos);
    EXPECT_NE(r.out.find("\n30\t0.5\t0.5\n"), std::string::npos);
    io::write_json(path("cfg3.json"), {{"bogus", 1}});
    EXPECT_EQ(run("--config \"" + path("cfg3.json") + "\" schedule").code, 2);
}

TEST(Cli, ToylabDemoWritesArtifacts)
{
    const CliResult r = run("toylab demo --runs 10 --keep 2 --seed 4 --out \"" + path("demo") + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("demo/grid_p0_e0.png")));
    EXPECT_TRUE(fs::exists(path("demo/grid_p8_e2.png")));
    EXPECT_TRUE(fs::exists(path("demo/sample_001.png")));
    EXPECT_FALSE(fs::exists(path("demo/sample_002.png")));
    const auto j = io::read_json(path("demo/report.json"));
    EXPECT_EQ(j.at("runs").get<int>(), 10);
    EXPECT_EQ(j.at("per_run").size(), 10u);
}
