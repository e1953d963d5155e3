#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "stiefel_sync/stiefel_sync.hpp"

using namespace stsync;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Each test gets a fresh output root; the variable is process-wide.
class OutputRoot : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root_ = fs::temp_directory_path() / "stsync_tests" / (std::string(info->test_suite_name()) + "_" + info->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
        setenv(kOutputRootEnv, root_.c_str(), 1);
    }
    void TearDown() override { unsetenv(kOutputRootEnv); }

    fs::path root_;
};

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string message_of(const json& doc) {
    try {
        validate_scenario(parse_config(doc));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(STSYNC_BINARY) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, DefaultsAndOverrides) {
    const ScenarioConfig c = parse_config({{"scenario", "first_order_locking"}, {"kappa", 3}, {"seed", 9}});
    EXPECT_EQ(c.scenario, Scenario::FirstOrderLocking);
    EXPECT_EQ(c.kappa, 3.0);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.output_dir, "runs/first_order_locking");
    EXPECT_FALSE(c.dt.has_value());
    const ScenarioConfig round = parse_config(config_to_json(c));
    EXPECT_EQ(config_to_json(round), config_to_json(c));
}

TEST(ParseConfig, Errors) {
    EXPECT_THROW(parse_config(json::array()), ConfigError);
    EXPECT_THROW(parse_config({{"n", 3}}), ConfigError);
    EXPECT_THROW(parse_config({{"scenario", "nope"}}), ConfigError);
    EXPECT_THROW(parse_config({{"scenario", "invariance_checks"}, {"kapa", 3}}), ConfigError);
    EXPECT_THROW(parse_config({{"scenario", "invariance_checks"}, {"n", 2.5}}), ConfigError);
    EXPECT_THROW(parse_config({{"scenario", "invariance_checks"}, {"kappa", "big"}}), ConfigError);
    EXPECT_THROW(parse_config({{"scenario", "invariance_checks"}, {"seed", -1}}), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(ParseConfig, Topology) {
    const ScenarioConfig c = parse_config(
        {{"scenario", "invariance_checks"}, {"N", 2}, {"topology", {{"weights", {{1, 0.5}, {0.5, 1}}}}}});
    ASSERT_TRUE(c.weights.has_value());
    EXPECT_EQ((*c.weights)(0, 1), 0.5);
    EXPECT_FALSE(parse_config({{"scenario", "invariance_checks"}, {"topology", "all_to_all"}}).weights.has_value());
    EXPECT_NE(message_of({{"scenario", "invariance_checks"}, {"N", 3}, {"topology", {{"weights", {{1, 0.5}, {0.5, 1}}}}}}),
              "");
}

TEST(ValidateScenario, NamedConstraintViolations) {
    EXPECT_EQ(message_of({{"scenario", "invariance_checks"}, {"p", 3}, {"n", 2}}), "constraint p <= n (p=3, n=2) violated");
    EXPECT_NE(message_of({{"scenario", "invariance_checks"}, {"kappa", 0}}).find("kappa"), std::string::npos);
    EXPECT_NE(message_of({{"scenario", "first_order_homogeneous"}, {"xi_scale", 0.1}}), "");
    EXPECT_NE(message_of({{"scenario", "first_order_homogeneous"}, {"initial_diameter", 1.5}}), "");
    EXPECT_NE(message_of({{"scenario", "first_order_locking"}, {"kappa", 1.0}}), "");
    EXPECT_NE(message_of({{"scenario", "first_order_locking"}, {"p", 1}}), "");
    EXPECT_NE(message_of({{"scenario", "second_order_homogeneous"}, {"m", 0}}), "");
    EXPECT_NE(message_of({{"scenario", "practical_consensus_sweep"}, {"kappa_grid", {10}}}), "");
    EXPECT_NE(message_of({{"scenario", "practical_consensus_sweep"}, {"kappa_grid", {100, 10}}}), "");
    EXPECT_NE(message_of({{"scenario", "invariance_checks"}, {"init", "random"}}), "");
    EXPECT_NE(message_of({{"scenario", "invariance_checks"}, {"dt", 20}, {"horizon", 10}}), "");
    for (const char* s : {"first_order_homogeneous", "first_order_locking", "second_order_homogeneous",
                          "practical_consensus_sweep", "invariance_checks"}) {
        EXPECT_EQ(message_of({{"scenario", s}}), "") << s;
    }
}

TEST(DtPolicy, CapsForStiffnessAndInertia) {
    ScenarioConfig c = default_config(Scenario::PracticalConsensusSweep);
    EXPECT_EQ(c.dt_for(1.0, false, 1.0), 1e-3);
    EXPECT_EQ(c.dt_for(100.0, false, 1.0), 1e-4);
    EXPECT_EQ(c.dt_for(1.0, true, 1e-4), 5e-5);
    c.dt = 0.02;
    EXPECT_EQ(c.dt_for(100.0, true, 1e-4), 0.02);
}

TEST(ExpandSweep, CartesianProduct) {
    const auto members = expand_sweep({{"scenario", "first_order_homogeneous"},
                                       {"N", {4, 6}},
                                       {"seed", {1, 2, 3}},
                                       {"kappa_grid", {1, 2}}});
    ASSERT_EQ(members.size(), 6u);
    std::set<std::pair<int, int>> seen;
    for (const auto& m : members) {
        EXPECT_EQ(m["kappa_grid"], json({1, 2}));
        seen.insert({m["N"].get<int>(), m["seed"].get<int>()});
    }
    EXPECT_EQ(seen.size(), 6u);
    EXPECT_EQ(expand_sweep({{"scenario", "invariance_checks"}}).size(), 1u);
    EXPECT_THROW(expand_sweep({{"scenario", "invariance_checks"}, {"output_dir", {"a", "b"}}}), ConfigError);
    EXPECT_THROW(expand_sweep({{"scenario", "invariance_checks"}, {"N", json::array()}}), ConfigError);
}

TEST(ResolveOutputDir, EnvironmentOverride) {
    unsetenv(kOutputRootEnv);
    EXPECT_EQ(resolve_output_dir("runs/a"), fs::path("runs/a"));
    setenv(kOutputRootEnv, "/tmp/root", 1);
    EXPECT_EQ(resolve_output_dir("runs/a"), fs::path("/tmp/root/runs/a"));
    EXPECT_EQ(resolve_output_dir("/abs/dir"), fs::path("/tmp/root/abs/dir"));
    unsetenv(kOutputRootEnv);
}

TEST(InitialData, ClusteredDiameterBounds) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const double r = 0.05 + 0.6 * rng.uniform();
        const auto s = clustered_states(5, 2, 8, r, rng);
        EXPECT_LE(diameter(s).value, 2.0 * r);
        for (const auto& x : s) EXPECT_LE(frame_drift(x), 1e-12);
    }
    for (double target : {0.1, 0.7, 1.0, 1.3}) {
        const auto s = clustered_states_with_diameter(4, 2, 6, target, rng);
        EXPECT_NEAR(diameter(s).value, target, 1e-10);
    }
    const auto xis = heterogeneous_frequencies(3, 5, 0.4, rng);
    double top = 0.0;
    for (const auto& x : xis) top = std::max(top, x.norm());
    EXPECT_NEAR(top, 0.4, 1e-15);
    const auto frames = uniform_states(4, 2, 3, rng);
    const auto vel = tangent_velocities(frames, 1.0, rng);
    ASSERT_EQ(vel.size(), frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) EXPECT_LE(tangency_residual(frames[i], vel[i]), 1e-12);
}

TEST_F(OutputRoot, PassingRunWritesArtifacts) {
    const RunResult r = run_scenario(parse_config({{"scenario", "invariance_checks"}}));
    ASSERT_EQ(r.exit_code, kExitPass) << r.message;
    EXPECT_EQ(r.directory, root_ / "runs/invariance_checks");
    const json v = read_json(r.directory / "verdict.json");
    EXPECT_EQ(v["schema"], kVerdictSchema);
    EXPECT_EQ(v["status"], "pass");
    EXPECT_EQ(v["exit_code"], 0);
    EXPECT_EQ(v, r.verdict);
    ASSERT_FALSE(v["artifacts"].empty());
    for (const auto& f : v["artifacts"]) {
        std::ifstream in(r.directory / f.get<std::string>());
        std::string schema, header;
        std::getline(in, schema);
        std::getline(in, header);
        EXPECT_EQ(schema, kCsvSchemaLine);
        EXPECT_EQ(header, kCsvHeader);
    }
    for (const auto& a : v["assertions"]) {
        EXPECT_TRUE(a.contains("anchor"));
        EXPECT_TRUE(a["pass"].get<bool>()) << a.dump();
    }
}

TEST_F(OutputRoot, VerdictIsBitReproducible) {
    const json doc{{"scenario", "first_order_locking"}, {"horizon", 20}};
    const RunResult a = run_scenario(parse_config(doc));
    ASSERT_EQ(a.exit_code, kExitPass) << a.message;
    std::ifstream ina(a.directory / "verdict.json");
    const std::string first((std::istreambuf_iterator<char>(ina)), {});
    const RunResult b = run_scenario(parse_config(doc));
    std::ifstream inb(b.directory / "verdict.json");
    const std::string second((std::istreambuf_iterator<char>(inb)), {});
    EXPECT_EQ(first, second);
}

TEST_F(OutputRoot, ExitCodes) {
    // A short horizon leaves the homogeneous ensemble far from consensus.
    const RunResult fail = run_scenario(parse_config({{"scenario", "first_order_homogeneous"}, {"horizon", 1}}));
    EXPECT_EQ(fail.exit_code, kExitAssertion);
    EXPECT_EQ(read_json(fail.directory / "verdict.json")["status"], "fail");

    const RunResult invalid = run_scenario(parse_config({{"scenario", "invariance_checks"}, {"p", 5}}));
    EXPECT_EQ(invalid.exit_code, kExitConfig);
    EXPECT_FALSE(fs::exists(root_ / "runs/invariance_checks"));

    const RunResult aborted = run_scenario(parse_config(
        {{"scenario", "second_order_homogeneous"}, {"m", 1e-4}, {"gamma", 1}, {"dt", 1e-3}, {"horizon", 1}}));
    EXPECT_EQ(aborted.exit_code, kExitAborted);
    const json v = read_json(aborted.directory / "verdict.json");
    EXPECT_EQ(v["status"], "aborted");
    EXPECT_TRUE(v["error"]["kind"] == "drift_abort" || v["error"]["kind"] == "blowup");
}

TEST_F(OutputRoot, SweepAggregatesMembers) {
    const SweepResult s = run_sweep({{"scenario", "first_order_homogeneous"},
                                     {"N", {4, 6}},
                                     {"horizon", {1, 20}},
                                     {"output_dir", "runs/sw"}});
    EXPECT_EQ(s.exit_code, kExitAssertion);
    const json summary = read_json(root_ / "runs/sw/sweep_verdict.json");
    ASSERT_EQ(summary["members"].size(), 4u);
    int passes = 0;
    for (const auto& m : summary["members"]) {
        EXPECT_TRUE(fs::exists(fs::path(m["directory"].get<std::string>()) / "verdict.json"));
        passes += m["exit_code"] == 0;
    }
    EXPECT_EQ(passes, 2);
    const SweepResult bad = run_sweep({{"scenario", "invariance_checks"}, {"p", {2, 9}}});
    EXPECT_EQ(bad.exit_code, kExitConfig);
    EXPECT_NE(bad.message.find("member_001"), std::string::npos);
}

TEST_F(OutputRoot, BinaryExitCodes) {
    const fs::path cfg = root_ / "cfg";
    fs::create_directories(cfg);
    const auto write = [&](const std::string& name, const json& j) {
        std::ofstream(cfg / name) << j.dump();
        return (cfg / name).string();
    };
    const std::string good = write("good.json", {{"scenario", "invariance_checks"}});
    EXPECT_EQ(run_cli("validate " + good), 0);
    EXPECT_EQ(run_cli("run " + good), 0);
    EXPECT_TRUE(fs::exists(root_ / "runs/invariance_checks/verdict.json"));
    EXPECT_EQ(run_cli("run " + write("short.json", {{"scenario", "first_order_homogeneous"}, {"horizon", 1}})), 1);
    const std::string bad = write("bad.json", {{"scenario", "invariance_checks"}, {"kapa", 1}});
    EXPECT_EQ(run_cli("validate " + bad), 2);
    EXPECT_EQ(run_cli("run " + bad), 2);
    EXPECT_EQ(run_cli("run " + (cfg / "missing.json").string()), 2);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("run " + write("abort.json", {{"scenario", "second_order_homogeneous"},
                                                    {"m", 1e-4},
                                                    {"gamma", 1},
                                                    {"dt", 1e-3},
                                                    {"horizon", 1}})),
              3);
    EXPECT_EQ(run_cli("sweep " + write("sweep.json", {{"scenario", "first_order_homogeneous"},
                                                      {"seed", {1, 2}},
                                                      {"horizon", 20},
                                                      {"output_dir", "runs/cli_sweep"}})),
              0);
    EXPECT_TRUE(fs::exists(root_ / "runs/cli_sweep/sweep_verdict.json"));
}
