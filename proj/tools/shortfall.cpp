// Command-line front end: shortfall {solve-known|solve-unknown|simulate|verify} SCENARIO [flags]

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "shortfall/commands.hpp"

namespace {

using namespace shortfall;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw precondition_error("cannot read scenario file " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shortfall-aware resource allocation: solvers, oracles and buffer simulation"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::uint64_t seed = 0;
    std::uint64_t horizon = 0;
    std::string out_path;
    std::string format;
    std::string trace_path;
    bool oracle = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("scenario", scenario_path, "Scenario file")->required();
        sub->add_option("--seed", seed, "RNG seed (overrides the scenario)");
        sub->add_option("--out", out_path, "Write the result to this file instead of stdout");
        sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    };
    auto* solve_known = app.add_subcommand("solve-known", "Greedy linearised allocation for known mean rates");
    add_common(solve_known);
    solve_known->add_flag("--oracle", oracle, "Also run exact corner enumeration (at most 15 users)");
    auto* solve_unknown = app.add_subcommand("solve-unknown", "Optimal allocation for symmetric unknown rates");
    add_common(solve_unknown);
    solve_unknown->add_flag("--oracle", oracle, "Also run the grid oracle (at most 3 users)");
    auto* simulate = app.add_subcommand("simulate", "Simulate the proportional policy on buffer dynamics");
    add_common(simulate);
    simulate->add_option("--horizon", horizon, "Number of slots (overrides the scenario)");
    simulate->add_option("--trace", trace_path, "Dump per-slot CSV (t, c, then S, F, Q, kappa per user)");
    auto* verify = app.add_subcommand("verify", "Run the invariant checks and print a pass/fail table");
    add_common(verify);
    verify->add_option("--horizon", horizon, "Number of simulated slots (overrides the scenario)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitInputError;
    }

    try {
        const Scenario sc = parse_scenario(read_file(scenario_path));
        cli::CommandOptions opt;
        opt.workers = cli::worker_count();
        opt.oracle = oracle;
        for (auto* sub : {solve_known, solve_unknown, simulate, verify}) {
            if (sub->parsed()) {
                if (sub->count("--seed")) {
                    opt.seed = seed;
                }
                if (sub->get_option_no_throw("--horizon") && sub->count("--horizon")) {
                    opt.horizon = horizon;
                }
                if (sub->get_option_no_throw("--trace") && sub->count("--trace")) {
                    opt.trace_path = trace_path;
                }
            }
        }
        const std::string fmt = !format.empty() ? format : sc.output.format.value_or("json");
        opt.format = fmt == "csv" ? cli::Format::csv : cli::Format::json;
        const std::string target = !out_path.empty() ? out_path : sc.output.path.value_or("");

        std::ostringstream buffer;
        int status = cli::kExitOk;
        if (verify->parsed()) {
            const auto outcome = cli::run_checks(sc, opt);
            cli::print_table(outcome, std::cout);
            if (!target.empty()) {
                cli::write_atomically(target, cli::verify_report(sc, opt, outcome));
            }
            return outcome.passed() ? cli::kExitOk : cli::kExitVerificationFailed;
        }
        if (solve_known->parsed()) {
            status = cli::solve_known(sc, opt, buffer);
        } else if (solve_unknown->parsed()) {
            status = cli::solve_unknown(sc, opt, buffer);
        } else {
            status = cli::simulate(sc, opt, buffer);
        }
        if (target.empty()) {
            std::cout << buffer.str();
        } else {
            cli::write_atomically(target, buffer.str());
        }
        return status;
    } catch (const scenario_error& e) {
        std::cerr << scenario_path << ":\n" << e.what() << '\n';
        return cli::kExitInputError;
    } catch (const feasibility_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitInputError;
    } catch (const std::logic_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitVerificationFailed;
    }
}
