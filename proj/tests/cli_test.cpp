#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli() {
    const char* p = std::getenv("FEDCYTE_CLI");
    return p ? p : "fedcyte";
}

/// Runs the CLI through the shell and returns its exit code.
int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + cli() + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("fedcyte_cli_" + std::string(info->name()) + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, GeneratePresetAndRegenerateFromManifest) {
    ASSERT_EQ(run("generate --preset paper-table1 --out " + path("a")), 0);
    for (const char* f : {"client1.csv", "client2.csv", "client3-holdout.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    const auto c2 = slurp(dir_ / "a" / "client2.csv");
    EXPECT_EQ(count_lines(c2), 8985u + 2u);
    EXPECT_TRUE(c2.starts_with("#classes:Band neutrophil,Basophil,"));
    EXPECT_NE(c2.find("\nlabel,f1,f2,"), std::string::npos);

    ASSERT_EQ(run("generate --config " + path("a/manifest.json") + " --out " + path("b")), 0);
    for (const char* f : {"client1.csv", "client2.csv", "client3-holdout.csv", "manifest.json"})
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;

    ASSERT_EQ(run("generate --preset paper-table1 --seed 3 --out " + path("c")), 0);
    EXPECT_NE(slurp(dir_ / "a" / "client1.csv"), slurp(dir_ / "c" / "client1.csv"));
}

TEST_F(Cli, RunIsDeterministicAcrossThreadCounts) {
    ASSERT_EQ(run("run --preset paradigm-compare --seed 7 --out " + path("t1"), "FEDCYTE_THREADS=1"), 0);
    ASSERT_EQ(run("run --preset paradigm-compare --seed 7 --out " + path("t4"), "FEDCYTE_THREADS=4"), 0);
    EXPECT_EQ(slurp(dir_ / "t1" / "results.jsonl"), slurp(dir_ / "t4" / "results.jsonl"));
    EXPECT_EQ(slurp(dir_ / "t1" / "report.md"), slurp(dir_ / "t4" / "report.md"));
}

TEST_F(Cli, ReportRerenderIsByteStable) {
    ASSERT_EQ(run("run --preset paradigm-compare --out " + path("r")), 0);
    const auto report = slurp(dir_ / "r" / "report.md");
    for (const char* row : {"| softmax | Local - client1 |", "| softmax | Local - client2 |",
                            "| softmax | Federated (FedMedian) |", "| softmax | Centralized |"})
        EXPECT_NE(report.find(row), std::string::npos) << row;

    const auto results = slurp(dir_ / "r" / "results.jsonl");
    ASSERT_EQ(run("report " + path("r/results.jsonl") + " --out " + path("again")), 0);
    EXPECT_EQ(slurp(dir_ / "again" / "report.md"), report);
    EXPECT_EQ(slurp(dir_ / "r" / "results.jsonl"), results);
}

TEST_F(Cli, StrategySweepHasEightRows) {
    ASSERT_EQ(run("run --preset strategy-sweep --out " + path("s")), 0);
    const auto report = slurp(dir_ / "s" / "report.md");
    const auto start = report.find("## Aggregation strategies");
    const auto end = report.find("## Training paradigms");
    ASSERT_NE(start, std::string::npos);
    const auto section = report.substr(start, end - start);
    std::size_t rows = 0;
    for (const char* s : {"FedAvg", "FedMedian", "FedProx", "FedOpt"})
        for (const char* m : {"softmax", "mlp1h"})
            if (section.find(std::string("| ") + s + " | " + m + " |") != std::string::npos) ++rows;
    EXPECT_EQ(rows, 8u);
}

TEST_F(Cli, CsvInputsAndEdgeCases) {
    ASSERT_EQ(run("generate --preset paper-table1-tenth --out " + path("d")), 0);
    const auto before = slurp(dir_ / "d" / "client1.csv");
    spit(dir_ / "one.json", R"({
        "data": {"clients": [{"csv": "d/client1.csv"}, {"csv": "d/client2.csv"}],
                 "holdout": {"csv": "d/client3-holdout.csv"}},
        "experiments": [{"name": "only", "rounds": 2, "strategy": {"kind": "FedAvg"}}]
    })");
    ASSERT_EQ(run("run --config " + path("one.json") + " --out " + path("o")), 0);
    EXPECT_EQ(slurp(dir_ / "d" / "client1.csv"), before);
    const auto lines = slurp(dir_ / "o" / "results.jsonl");
    ASSERT_EQ(count_lines(lines), 1u);
    const auto rec = json::parse(lines);
    EXPECT_EQ(rec["runs"].size(), 1u);
    EXPECT_EQ(rec["runs"][0]["per_round"].size(), 2u);
    const auto report = slurp(dir_ / "o" / "report.md");
    EXPECT_NE(report.find("| FedAvg | softmax |"), std::string::npos);

    spit(dir_ / "empty.json", R"({"data": {"clients": [{"profile": "client1"}]}, "experiments": []})");
    ASSERT_EQ(run("run --config " + path("empty.json") + " --out " + path("e")), 0);
    EXPECT_EQ(slurp(dir_ / "e" / "results.jsonl"), "");
    EXPECT_EQ(run("report " + path("e/results.jsonl")), 0);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("run --out " + path("x")), 2);
    EXPECT_EQ(run("run --preset nope --out " + path("x")), 2);
    EXPECT_EQ(run("run --config " + path("missing.json") + " --out " + path("x")), 2);
    spit(dir_ / "bad.json", "{ not json");
    EXPECT_EQ(run("run --config " + path("bad.json") + " --out " + path("x")), 2);
    spit(dir_ / "unknown.json", R"({"data": {"clients": [{"profile": "client1"}]}, "experiments": [{"epochs": 3}]})");
    EXPECT_EQ(run("run --config " + path("unknown.json") + " --out " + path("x")), 2);
    EXPECT_EQ(run("run --preset strategy-sweep --out " + path("x"), "FEDCYTE_THREADS=zero"), 2);

    spit(dir_ / "badcsv.csv", "#classes:a,b\nlabel,f1\nc,1.0\n");
    spit(dir_ / "csv.json", R"({"data": {"clients": [{"csv": "badcsv.csv"}]}, "experiments": [{}]})");
    EXPECT_EQ(run("run --config " + path("csv.json") + " --out " + path("x")), 3);
    spit(dir_ / "gone.json", R"({"data": {"clients": [{"csv": "nowhere.csv"}]}, "experiments": [{}]})");
    EXPECT_EQ(run("run --config " + path("gone.json") + " --out " + path("x")), 3);
    EXPECT_EQ(run("report " + path("nowhere.jsonl")), 3);
    spit(dir_ / "garbage.jsonl", "{\"experiment\": 0}\n");
    EXPECT_EQ(run("report " + path("garbage.jsonl")), 3);
}
