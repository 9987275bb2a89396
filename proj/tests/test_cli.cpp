// Copyright 2026 The kvtier Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(KVTIER_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("kvtier_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpListsSubcommands) {
    const auto r = run("--help");
    EXPECT_EQ(r.code, 0);
    for (const char* sub : {"size", "gen-trace", "replay", "project", "dedup-report", "report", "print-config"})
        EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST_F(Cli, SubcommandHelpShowsDefaults) {
    const auto r = run("size --help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("128000"), std::string::npos) << r.out;
}

TEST_F(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("size --format yaml").code, 1);
}

TEST_F(Cli, BadConfigExitsTwoNamingKey) {
    std::ofstream(path("bad.json")) << R"({"replay": {"bogus": 1}})";
    const auto r = run("size --config " + path("bad.json"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("replay.bogus"), std::string::npos) << r.out;
}

TEST_F(Cli, BadTraceExitsTwoWithLine) {
    std::ofstream(path("t.jsonl")) << "{\"format\":\"kvtier-trace\",\"version\":1}\n{oops\n";
    const auto r = run("replay --trace " + path("t.jsonl"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("2"), std::string::npos) << r.out;
}

TEST_F(Cli, SizeTable) {
    const auto r = run("size --format csv");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("DeepSeek-V3"), std::string::npos);
    EXPECT_NE(r.out.find("Llama-3-70B"), std::string::npos);
}

TEST_F(Cli, GenTraceThenReplayIsDeterministic) {
    ASSERT_EQ(run("gen-trace --family agentic --sessions 30 --seed 4 --out " + path("t.jsonl")).code, 0);
    ASSERT_EQ(run("gen-trace --family agentic --sessions 30 --seed 4 --out " + path("u.jsonl")).code, 0);
    EXPECT_EQ(slurp(path("t.jsonl")), slurp(path("u.jsonl")));
    ASSERT_EQ(run("replay --trace " + path("t.jsonl") + " --policy all --metrics-out " + path("a.json") +
                  " --prometheus-out " + path("a.prom")).code, 0);
    ASSERT_EQ(run("replay --trace " + path("t.jsonl") + " --policy all --metrics-out " + path("b.json")).code, 0);
    EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
    EXPECT_NE(slurp(path("a.prom")).find("kvtier_"), std::string::npos);
    const auto rep = run("report --format csv " + path("a.json"));
    EXPECT_EQ(rep.code, 0);
    // Runs are labelled by trace file stem.
    EXPECT_NE(rep.out.find("\nt,"), std::string::npos) << rep.out;
}

TEST_F(Cli, ReportRejectsSchemaMismatch) {
    ASSERT_EQ(run("replay --family lmsys_like --sessions 20 --policy lru --metrics-out " + path("a.json")).code, 0);
    auto text = slurp(path("a.json"));
    const auto pos = text.find("\"schema_version\": 1");
    ASSERT_NE(pos, std::string::npos) << text.substr(0, 200);
    text.replace(pos, 19, "\"schema_version\": 9");
    std::ofstream(path("b.json")) << text;
    const auto r = run("report " + path("a.json") + " " + path("b.json"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("a.json"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("b.json"), std::string::npos) << r.out;
}

TEST_F(Cli, ProjectAndDedupReport) {
    const auto p = run("project --format csv");
    EXPECT_EQ(p.code, 0);
    EXPECT_NE(p.out.find("tiers,Full system,38000000000000,1,"), std::string::npos) << p.out;
    EXPECT_NE(run("project").out.find("38+ TB"), std::string::npos);
    const auto d = run("dedup-report --family lmsys_like --sessions 50 --format csv");
    EXPECT_EQ(d.code, 0);
    EXPECT_NE(d.out.find("Llama-3-70B"), std::string::npos) << d.out;
}

TEST_F(Cli, PrintConfigRoundTrips) {
    const auto r = run("print-config --config defaults");
    ASSERT_EQ(r.code, 0) << r.out;
    std::ofstream(path("c.json")) << r.out;
    const auto again = run("print-config --config " + path("c.json"));
    EXPECT_EQ(again.code, 0);
    EXPECT_EQ(again.out, r.out);
}

TEST_F(Cli, EnvironmentOverrideErrorsExitTwo) {
    const auto r = run("size");
    ASSERT_EQ(r.code, 0);
    const std::string cmd = "KVTIER_RUN_SEED=abc " + std::string(KVTIER_CLI) + " size >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 2);
}
