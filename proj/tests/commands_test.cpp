#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

#include "shortfall/commands.hpp"

using namespace shortfall;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run run_cli(const std::string& args) {
    const std::string cmd = std::string(SHORTFALL_CLI_PATH) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) {
        return r;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string example(const std::string& name) { return std::string(SHORTFALL_EXAMPLES_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "shortfall_commands_test";
    fs::create_directories(dir);
    return dir / name;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Sig12, RoundsToTwelveDigits) {
    EXPECT_EQ(cli::fmt12(std::sqrt(2.0) / 2), "0.707106781187");
    EXPECT_EQ(cli::sig12(0.1 + 0.2), 0.3);
    EXPECT_EQ(cli::sig12(0.0), 0.0);
}

TEST(SolveKnownCommand, InProcess) {
    const auto sc = parse_scenario(slurp(example("known_sqrt_linear.scn")));
    std::ostringstream out;
    cli::CommandOptions opt;
    opt.oracle = true;
    ASSERT_EQ(cli::solve_known(sc, opt, out), cli::kExitOk);
    const auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j["true_objective"].get<double>(), 0.707106781187);
    EXPECT_EQ(j["allocation"], nlohmann::json::array({2, 2}));
    EXPECT_EQ(j["oracle"]["objective"].get<double>(), 0.707106781187);
    EXPECT_EQ(j["build"], SHORTFALL_BUILD_ID);
}

TEST(SolveKnownCommand, Binary) {
    const auto r = run_cli("solve-known " + example("known_sqrt_linear.scn"));
    ASSERT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("\"true_objective\": 0.707106781187"), std::string::npos) << r.out;
}

TEST(SolveKnownCommand, Csv) {
    const auto r = run_cli("solve-known --format csv " + example("known_sqrt_linear.scn"));
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(r.out.rfind("# build: ", 0), 0u);
    EXPECT_NE(r.out.find("user,mean_rate,rate,shortfall,dissatisfaction\n0,4,2,2,1.41421356237\n1,2,2,0,0\n"),
              std::string::npos)
        << r.out;
}

TEST(SolveKnownCommand, WrongKindIsInputError) {
    EXPECT_EQ(run_cli("solve-known " + example("unknown_uniform_pair.scn")).status, 2);
}

TEST(SolveUnknownCommand, Binary) {
    const auto r = run_cli("solve-unknown --oracle " + example("unknown_uniform_pair.scn"));
    ASSERT_EQ(r.status, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["n_star"], 1);
    EXPECT_EQ(j["normalized_objective"].get<double>(), 0.5);
    EXPECT_EQ(j["oracle"]["objective"].get<double>(), 0.5);
}

TEST(SimulateCommand, ZeroHorizonIsUsageError) {
    EXPECT_EQ(run_cli("simulate --horizon 0 " + example("known_sqrt_linear.scn")).status, 2);
}

TEST(SimulateCommand, DeterministicShortfall) {
    const auto r = run_cli("simulate --horizon 1000 " + example("known_sqrt_linear.scn"));
    ASSERT_EQ(r.status, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["mean_shortfall"], nlohmann::json::array({2, 0}));
    EXPECT_EQ(j["horizon"], 1000);
}

TEST(SimulateCommand, TraceAndOutFile) {
    const auto trace = scratch("trace.csv");
    const auto out = scratch("sim.json");
    fs::remove(out);
    const auto r = run_cli("simulate --horizon 50 --seed 4 --trace " + trace.string() + " --out " + out.string() + " " +
                       example("known_bursty.scn"));
    ASSERT_EQ(r.status, 0);
    EXPECT_TRUE(r.out.empty());
    const auto j = nlohmann::json::parse(slurp(out));
    EXPECT_EQ(j["seed"], 4);
    std::istringstream lines(slurp(trace));
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        ++n;
    }
    EXPECT_EQ(n, 51u);
    EXPECT_FALSE(fs::exists(out.string() + ".tmp"));
}

TEST(SimulateCommand, SeedChangesBurstyRun) {
    const auto a = run_cli("simulate --horizon 2000 --seed 1 " + example("known_bursty.scn"));
    const auto b = run_cli("simulate --horizon 2000 --seed 1 " + example("known_bursty.scn"));
    const auto c = run_cli("simulate --horizon 2000 --seed 2 " + example("known_bursty.scn"));
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out, c.out);
}

TEST(VerifyCommand, SymmetricPairPassesWithOracleRow) {
    const auto out = scratch("verify.json");
    const auto r = run_cli("verify --horizon 20000 --out " + out.string() + " " + example("unknown_uniform_pair.scn"));
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("symalloc vs grid oracle"), std::string::npos);
    EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
    const auto j = nlohmann::json::parse(slurp(out));
    EXPECT_TRUE(j["passed"].get<bool>());
    bool found = false;
    for (const auto& row : j["checks"]) {
        found = found || row["name"] == "symalloc vs grid oracle";
    }
    EXPECT_TRUE(found);
}

TEST(VerifyCommand, EveryExamplePasses) {
    for (const auto& entry : fs::directory_iterator(SHORTFALL_EXAMPLES_DIR)) {
        const auto r = run_cli("verify --horizon 20000 " + entry.path().string());
        EXPECT_EQ(r.status, 0) << entry.path() << '\n' << r.out;
    }
}

TEST(VerifyCommand, SameSeedSameBytes) {
    const auto a = scratch("a.json");
    const auto b = scratch("b.json");
    ASSERT_EQ(run_cli("verify --seed 9 --horizon 20000 --out " + a.string() + " " + example("known_bursty.scn")).status, 0);
    ASSERT_EQ(run_cli("verify --seed 9 --horizon 20000 --out " + b.string() + " " + example("known_bursty.scn")).status, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_FALSE(slurp(a).empty());
}

TEST(VerifyCommand, FailingRowFailsOutcome) {
    // A single failing row fails the whole outcome.
    cli::VerifyOutcome v;
    v.rows.push_back({"x", false, 1, 0, ""});
    EXPECT_FALSE(v.passed());
    std::ostringstream table;
    cli::print_table(v, table);
    EXPECT_NE(table.str().find("FAIL"), std::string::npos);
}

TEST(Cli, InputErrors) {
    const auto bad = scratch("bad.scn");
    write(bad, "schema = 1\nkind = known\nbudget = -1\n[user]\ncost = linear 1\nrate = 1\n");
    EXPECT_EQ(run_cli("solve-known " + bad.string()).status, 2);
    EXPECT_EQ(run_cli("solve-known /nonexistent/file.scn").status, 2);
    EXPECT_EQ(run_cli("solve-known --format xml " + example("known_sqrt_linear.scn")).status, 2);
    EXPECT_EQ(run_cli("").status, 2);
}

TEST(Cli, ScenarioErrorsNameTheLine) {
    const auto bad = scratch("bad2.scn");
    write(bad, "schema = 1\nkind = known\nbudget = -1\n[user]\ncost = linear 1\nrate = 1\n");
    const std::string cmd = std::string(SHORTFALL_CLI_PATH) + " solve-known " + bad.string() + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    ASSERT_NE(pipe, nullptr);
    std::array<char, 4096> buf{};
    std::string text;
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        text.append(buf.data(), n);
    }
    pclose(pipe);
    EXPECT_NE(text.find("line 3: budget must be positive"), std::string::npos) << text;
}
