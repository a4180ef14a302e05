#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(PNSIM_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, ""};
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::string config(const std::string& name) { return std::string(PNSIM_CONFIG_DIR) + "/" + name; }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("pnsim_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, InvertPrintsReport) {
    const auto r = run("invert 0.192 0.452 2.98 --out " + path("inv"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = nlohmann::json::parse(slurp(path("inv") + "/report.json"));
    EXPECT_NEAR(j["p"][0].get<double>(), 0.838, 0.01);
    EXPECT_NEAR(j["lambda"].get<double>(), 0.734, 0.01);
    EXPECT_TRUE(fs::exists(path("inv") + "/manifest.json"));
    EXPECT_NE(r.output.find("\"purity\""), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("invert 0.3 0.1 0").code, 3);
    EXPECT_EQ(run("invert 1.5 0.1 1").code, 2);
    EXPECT_EQ(run("invert 0.1 0.2").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("--version").code, 0);
    EXPECT_EQ(run("rabi --preset qd3 --out " + path("x")).code, 2);
    EXPECT_EQ(run("synth --config /nonexistent.cfg --out " + path("x")).code, 2);
}

TEST_F(Cli, EmptyAreaListIsUsageError) {
    const auto r = run("rabi --preset qd1 --areas '' --out " + path("r"));
    EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, RabiIsDeterministic) {
    ASSERT_EQ(run("rabi --preset qd1 --areas 0,0.5,1,1.5,2 --out " + path("a")).code, 0);
    ASSERT_EQ(run("rabi --preset qd1 --areas 0,0.5,1,1.5,2 --out " + path("b")).code, 0);
    const auto a = slurp(path("a") + "/rabi.csv");
    EXPECT_EQ(a, slurp(path("b") + "/rabi.csv"));
    EXPECT_EQ(a.substr(0, a.find('\n')), "area_pi,n_out,c0,p0,p1,p2");
}

TEST_F(Cli, FringeExtrema) {
    ASSERT_EQ(run("fringe --config " + config("fringe_two_photon.cfg") + " --out " + path("f")).code, 0);
    std::ifstream is(path("f") + "/fringe.csv");
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "phi,n_c,n_d,C0,Cbar");
    std::vector<double> cbar;
    while (std::getline(is, line)) cbar.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    ASSERT_EQ(cbar.size(), 200u);
    // 200 samples over 2 pi: index 0 is phi = 0, index 50 is pi / 2
    for (double c : cbar) {
        EXPECT_GE(c, cbar[0] - 1e-12);
        EXPECT_LE(c, cbar[50] + 1e-12);
    }
}

TEST_F(Cli, SynthAnalyzeAndReplay) {
    ASSERT_EQ(run("synth --config " + config("synth_small.cfg") + " --out " + path("s")).code, 0);
    for (const char* f : {"singles.csv", "histogram.csv", "coincidences_by_bin.csv", "experiment.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(path("s") + "/" + f)) << f;

    ASSERT_EQ(run("replay " + path("s") + "/manifest.json --out " + path("s2")).code, 0);
    for (const char* f : {"singles.csv", "histogram.csv", "coincidences_by_bin.csv", "experiment.json"})
        EXPECT_EQ(slurp(path("s") + "/" + f), slurp(path("s2") + "/" + f)) << f;

    const auto r = run("analyze --in " + path("s") + " --bootstrap 8 --block 20 --out " + path("a"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = nlohmann::json::parse(slurp(path("a") + "/report.json"));
    for (const char* key : {"p", "lambda", "purity", "g2", "cat_fidelity", "residual", "errors"})
        EXPECT_TRUE(j.contains(key)) << key;

    ASSERT_EQ(run("replay " + path("a") + "/manifest.json --out " + path("a2")).code, 0);
    EXPECT_EQ(slurp(path("a") + "/report.json"), slurp(path("a2") + "/report.json"));
    EXPECT_EQ(slurp(path("a") + "/phase_curve.csv"), slurp(path("a2") + "/phase_curve.csv"));
}

TEST_F(Cli, SeedFlagOverridesConfig) {
    ASSERT_EQ(run("synth --config " + config("synth_small.cfg") + " --seed 9 --out " + path("a")).code, 0);
    ASSERT_EQ(run("synth --config " + config("synth_small.cfg") + " --out " + path("b")).code, 0);
    EXPECT_NE(slurp(path("a") + "/singles.csv"), slurp(path("b") + "/singles.csv"));
    const auto m = nlohmann::json::parse(slurp(path("a") + "/manifest.json"));
    EXPECT_EQ(m["seed"].get<int>(), 9);
}

TEST_F(Cli, MalformedCsvReportsLine) {
    fs::create_directories(path("bad"));
    std::ofstream(path("bad") + "/singles.csv") << "bin_index,t_ms,counts_c,counts_d\n0,0,10,12\n1,810,x,9\n";
    std::ofstream(path("bad") + "/coincidences_by_bin.csv") << "bin_index,delta_pulses,coincidences\n0,1,0\n";
    const auto r = run("analyze --in " + path("bad") + " --out " + path("o"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("line 3"), std::string::npos) << r.output;
}
