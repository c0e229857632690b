#include "subdiff/io.hpp"
#include "subdiff/manifest.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;

struct Result {
    int code = -1;
    std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Result run(const std::string& args) {
    const std::string cmd = std::string(SUBDIFF_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "subdiff_test_cli" / name;
    fs::remove_all(d);
    return d;
}

TEST(Cli, PresetsListed) {
    const Result r = run("presets");
    EXPECT_EQ(r.code, 0);
    for (const char* n : {"forward2d-t1", "forward2d-t1-desk", "forward3d", "inverse2d-desk", "inverse3d"})
        EXPECT_NE(r.output.find(n), std::string::npos) << n;
}

TEST(Cli, UnknownKeyAndPresetFail) {
    Result r = run("forward --preset forward1d-desk --set training.bogus=1 --quiet");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("error:"), std::string::npos);
    EXPECT_NE(r.output.find("training.bogus"), std::string::npos);

    r = run("forward --preset nope --quiet");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("unknown preset"), std::string::npos);

    r = run("forward --quiet");
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, PrintConfigAppliesOverridesInOrder) {
    const Result r = run("forward --preset forward2d-t1-desk --set training.iterations=7 --set training.iterations=9 --seed 4 "
                         "--print-config");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("iterations = 9"), std::string::npos);
    EXPECT_NE(r.output.find("seed = 4"), std::string::npos);
    EXPECT_NE(r.output.find("width = 128"), std::string::npos);
}

TEST(Cli, UntrainedForwardRunWritesOutputs) {
    const fs::path dir = fresh_dir("untrained");
    const Result r = run("forward --preset forward2d-t1-desk --set training.iterations=0 --set fdm.nodes=41 "
                         "--set fdm.time_levels=41 --set eval.grid=41 --quiet --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const nlohmann::json m = subdiff::load_manifest_json(dir / "manifest.json");
    EXPECT_EQ(m["command"], "forward");
    EXPECT_EQ(m["preset"], "forward2d-t1-desk");
    EXPECT_GT(m["metrics"]["rel_l2"].get<double>(), 0.5);
    for (const auto& f : m["files"]) EXPECT_TRUE(fs::exists(dir / f.get<std::string>())) << f;
    for (const char* f : {"solution.ckpt", "reference.sdgrid", "loss_history.csv", "loss.png"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;

    const subdiff::GridData g = subdiff::load_grid(dir / "reference.sdgrid");
    ASSERT_EQ(g.axes.size(), 3u);
    EXPECT_EQ(g.axes[2].name, "t");
    EXPECT_EQ(g.axes[0].count, 41u);

    // The manifest alone reproduces the run.
    const fs::path again = fresh_dir("untrained_again");
    const Result r2 = run("forward --config " + (dir / "manifest.json").string() + " --quiet --out " + again.string());
    ASSERT_EQ(r2.code, 0) << r2.output;
    const nlohmann::json m2 = subdiff::load_manifest_json(again / "manifest.json");
    EXPECT_EQ(m2["config"], m["config"]);
    EXPECT_EQ(m2["metrics"]["rel_l2"], m["metrics"]["rel_l2"]);

    const Result n = run("nilt --checkpoint " + (dir / "solution.ckpt").string() + " --times 0.5 --grid 11 --out " +
                         (dir / "nilt").string());
    ASSERT_EQ(n.code, 0) << n.output;
    const subdiff::CsvTable t = subdiff::read_csv(dir / "nilt" / "nilt_t0.5.csv");
    EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y", "u"}));
    EXPECT_EQ(t.rows.size(), 121u);
}

TEST(Cli, IniConfigFile) {
    const fs::path dir = fresh_dir("ini");
    fs::create_directories(dir);
    std::ofstream(dir / "run.ini") << "[problem]\npreset = forward1d-desk\n\n[training]\niterations = 11\n";
    const Result r = run("forward --config " + (dir / "run.ini").string() + " --print-config");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("iterations = 11"), std::string::npos);
    EXPECT_NE(r.output.find("name = forward1d"), std::string::npos);
}

TEST(Cli, NiltPairsAndCoefficientExport) {
    Result r = run("nilt --pair exp-decay -M 12 --times 0.5,1,2");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("t,exact,nilt,abs_error"), std::string::npos);

    const fs::path dir = fresh_dir("coef");
    fs::create_directories(dir);
    r = run("nilt --coefficients " + (dir / "mu.csv").string() + " -M 4");
    ASSERT_EQ(r.code, 0) << r.output;
    const subdiff::CsvTable t = subdiff::read_csv(dir / "mu.csv");
    ASSERT_EQ(t.rows.size(), 4u);
    EXPECT_EQ(t.rows[0][1], -2.0);
    EXPECT_EQ(t.rows[3][1], 24.0);

    EXPECT_EQ(run("nilt --pair nope").code, 2);
    EXPECT_EQ(run("nilt --pair step -M 5").code, 2);
}

TEST(Cli, FdmRun) {
    const fs::path dir = fresh_dir("fdm");
    const Result r = run("fdm --preset forward1d-desk --set fdm.nodes=101 --set fdm.time_levels=51 --quiet --out " +
                         dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const nlohmann::json m = subdiff::load_manifest_json(dir / "manifest.json");
    EXPECT_EQ(m["command"], "fdm");
    EXPECT_LT(m["metrics"]["rel_l2_exact_t1"].get<double>(), 1e-2);
}

TEST(Cli, VerifyExitCodes) {
    Result r = run("verify");
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("checks passed"), std::string::npos);
    r = run("verify --corrupt-stehfest 14:1:1e-6");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("sum_mu_over_i_M14"), std::string::npos);
}

}  // namespace
