#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path &workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("refmort_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string &args) {
    const std::string cmd = std::string("\"") + REFMORT_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const fs::path &simulated() {
    static const fs::path dir = [] {
        auto d = workdir() / "sim";
        EXPECT_EQ(run("simulate --scenario nordic-small --seed 11 --out " + d.string()), 0);
        return d;
    }();
    return dir;
}

std::string data_args() {
    return "--input " + (simulated() / "registry.csv").string() + " --lag " +
           (simulated() / "lag.csv").string();
}

} // namespace

TEST(Cli, SimulateWritesFilesAndManifest) {
    for (const char *f : {"raw.csv", "registry.csv", "lag.csv", "schedule.csv", "true_rho.csv",
                          "truth.json", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(simulated() / f)) << f;
    }
    const auto m = nlohmann::json::parse(slurp(simulated() / "manifest.json"));
    EXPECT_EQ(m["seed"], 11);
    bool listed = false;
    for (const auto &o : m["outputs"]) {
        listed = listed || (o["path"] == "registry.csv" && o["sha256"].get<std::string>().size() == 64);
    }
    EXPECT_TRUE(listed);
}

TEST(Cli, MissingLagForFullLikelihoodIsConfigError) {
    const auto out = workdir() / "nolag";
    EXPECT_EQ(run("estimate --input " + (simulated() / "registry.csv").string() +
                  " --method 3 --out " + out.string()),
              4);
}

TEST(Cli, BadInputExitsWithTwo) {
    const auto bad = workdir() / "bad.csv";
    std::ofstream(bad) << "year,cohort\n1990,1930\n";
    EXPECT_EQ(run("estimate --input " + bad.string() + " --method 2 --out " +
                  (workdir() / "bad").string()),
              2);
}

TEST(Cli, UnknownOptionAndMethodAreConfigErrors) {
    EXPECT_EQ(run("estimate --frobnicate"), 4);
    EXPECT_EQ(run("estimate " + data_args() + " --method 7 --out " + (workdir() / "m7").string()),
              4);
}

TEST(Cli, EstimateAllComparison) {
    const auto out = workdir() / "est";
    ASSERT_EQ(run("estimate " + data_args() + " --method all --out " + out.string()), 0);
    double r[4];
    for (int k = 0; k < 4; ++k) {
        const auto j = nlohmann::json::parse(slurp(out / ("estimate_M" + std::to_string(k) + ".json")));
        r[k] = j["screening_rate_ratio"].get<double>();
        EXPECT_GT(r[k], 0.0);
    }
    // the undiluted methods sit further from the null than M0
    for (int k = 1; k < 4; ++k) {
        EXPECT_LT(r[k], r[0]);
    }
    EXPECT_TRUE(fs::exists(out / "comparison.txt"));
}

TEST(Cli, RawInputWithSchedule) {
    const auto out = workdir() / "raw";
    ASSERT_EQ(run("estimate --input " + (simulated() / "raw.csv").string() + " --lag " +
                  (simulated() / "lag.csv").string() + " --schedule " +
                  (simulated() / "schedule.csv").string() + " --method 2 --out " + out.string()),
              0);
    const auto a = nlohmann::json::parse(slurp(out / "estimate_M2.json"));
    ASSERT_EQ(run("estimate " + data_args() + " --method 2 --out " + (workdir() / "split").string()),
              0);
    const auto b = nlohmann::json::parse(slurp(workdir() / "split" / "estimate_M2.json"));
    EXPECT_NEAR(a["screening_rate_ratio"].get<double>(), b["screening_rate_ratio"].get<double>(),
                1e-9);
}

TEST(Cli, BootstrapIsReproducible) {
    const auto a = workdir() / "bs_a";
    const auto b = workdir() / "bs_b";
    const std::string common = "bootstrap " + data_args() + " --method 2 -B 20 --seed 5 ";
    ASSERT_EQ(run(common + "--jobs 1 --out " + a.string()), 0);
    ASSERT_EQ(run(common + "--jobs 3 --out " + b.string()), 0);
    EXPECT_EQ(slurp(a / "replicates_M2.csv"), slurp(b / "replicates_M2.csv"));
    EXPECT_EQ(slurp(a / "estimate_M2.json"), slurp(b / "estimate_M2.json"));
    const auto j = nlohmann::json::parse(slurp(a / "estimate_M2.json"));
    EXPECT_LE(j["ci_low"].get<double>(), j["ci_high"].get<double>());
}

TEST(Cli, ReportWritesTrends) {
    const auto out = workdir() / "rep";
    ASSERT_EQ(run("report " + data_args() + " --method 2 --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "trends.csv"));
    EXPECT_TRUE(fs::exists(out / "trends.svg"));
    EXPECT_TRUE(fs::exists(out / "model.txt"));
}
