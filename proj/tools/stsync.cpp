// Command-line front end: run, validate or sweep scenario configs.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stiefel_sync/scenarios.hpp"

namespace {

void print_assertions(const stsync::ScenarioOutcome& outcome) {
    for (const auto& a : outcome.assertions) {
        std::cout << (a.pass ? "PASS " : "FAIL ") << a.name << "  measured=" << a.measured << ' ' << a.relation
                  << ' ' << a.threshold << '\n';
    }
}

int cmd_validate(const std::string& path) {
    try {
        const stsync::ScenarioConfig c = stsync::load_config(path);
        stsync::validate_scenario(c);
        std::cout << "valid: " << stsync::scenario_name(c.scenario) << '\n';
        return stsync::kExitPass;
    } catch (const stsync::ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return stsync::kExitConfig;
    }
}

int cmd_run(const std::string& path) {
    stsync::ScenarioConfig c;
    try {
        c = stsync::load_config(path);
    } catch (const stsync::ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return stsync::kExitConfig;
    }
    const stsync::RunResult r = stsync::run_scenario(c);
    if (r.exit_code == stsync::kExitConfig) {
        std::cerr << "invalid config: " << r.message << '\n';
        return r.exit_code;
    }
    if (r.exit_code == stsync::kExitAborted) {
        std::cerr << "run aborted: " << r.message << '\n';
    } else {
        print_assertions(r.outcome);
    }
    std::cout << "verdict: " << (r.directory / "verdict.json").string() << '\n';
    return r.exit_code;
}

int cmd_sweep(const std::string& path) {
    nlohmann::json doc;
    {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "invalid config: cannot open '" << path << "'\n";
            return stsync::kExitConfig;
        }
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            std::cerr << "invalid config: " << e.what() << '\n';
            return stsync::kExitConfig;
        }
    }
    const stsync::SweepResult r = stsync::run_sweep(doc);
    if (r.exit_code == stsync::kExitConfig) {
        std::cerr << "invalid config: " << r.message << '\n';
        return r.exit_code;
    }
    for (const auto& m : r.summary["members"]) {
        std::cout << "member " << m["directory"].get<std::string>() << " exit " << m["exit_code"].get<int>() << '\n';
    }
    std::cout << "summary: " << (r.directory / "sweep_verdict.json").string() << '\n';
    return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Consensus experiments on Stiefel manifolds"};
    app.require_subcommand(1);
    app.footer(std::string("Exit codes: 0 pass, 1 assertion failed, 2 config invalid, 3 run aborted.\n"
                           "Set ") + stsync::kOutputRootEnv + " to re-root every output directory.");

    std::string path;
    auto* run = app.add_subcommand("run", "Run one scenario and write its CSV series and verdict");
    run->add_option("config", path, "Scenario config (JSON)")->required();
    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("config", path, "Scenario config (JSON)")->required();
    auto* sweep = app.add_subcommand("sweep", "Expand list-valued fields and run every member");
    sweep->add_option("config", path, "Sweep config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : stsync::kExitConfig;
    }
    try {
        if (*run) return cmd_run(path);
        if (*validate) return cmd_validate(path);
        return cmd_sweep(path);
    } catch (const std::exception& e) {
        std::cerr << "run aborted: " << e.what() << '\n';
        return stsync::kExitAborted;
    }
}
