#include "bsdelab/cli.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using bsdelab::cli::ScenarioConfig;

// "--key value" and "--key=value" pairs left over after CLI11 has taken the fixed options.
void apply_overrides(ScenarioConfig& cfg, const std::vector<std::string>& extras) {
    const std::string src = "<command line>";
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0 || tok.size() == 2) {
            throw bsdelab::ConfigError(src, 0, tok, "expected --key value");
        }
        const std::string body = tok.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            cfg.set(body.substr(0, eq), body.substr(eq + 1), src);
            continue;
        }
        if (i + 1 >= extras.size()) throw bsdelab::ConfigError(src, 0, body, "missing value");
        cfg.set(body, extras[++i], src);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Experiments with BSDEs whose intensity explodes at the horizon"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a built-in scenario");
    std::string scenario;
    std::string config_file;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    run->add_option("scenario", scenario, "Scenario name (see `list`)")->required();
    run->add_option("--config", config_file, "INI file with [section] key = value lines");
    run->add_option("--out", out_dir, "Output directory (default out/<scenario>)");
    run->add_option("--seed", seed, "Monte Carlo seed");
    run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    run->allow_extras();
    run->positionals_at_end(false);

    auto* list = app.add_subcommand("list", "List the built-in scenarios");
    std::string format = "table";
    list->add_option("--format", format, "table or csv")->check(CLI::IsMember({"table", "csv"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : bsdelab::cli::kFailure;
    }

    if (*list) {
        bsdelab::cli::list_scenarios(std::cout, format == "csv");
        return bsdelab::cli::kSuccess;
    }

    try {
        if (threads > 0) bsdelab::set_worker_count(threads);
        auto cfg = ScenarioConfig::defaults(scenario);
        if (!config_file.empty()) cfg.merge_file(config_file);
        apply_overrides(cfg, run->remaining());
        if (seed) cfg.set("mc.seed", std::to_string(*seed), "<command line>");
        if (out_dir.empty()) out_dir = "out/" + scenario;
        const auto outcome = bsdelab::cli::run_scenario(cfg, out_dir);
        std::cout << scenario << ": " << outcome.status << '\n';
        for (const auto& f : outcome.files) std::cout << "  wrote " << f.string() << '\n';
        return outcome.exit_code;
    } catch (const bsdelab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bsdelab::cli::kFailure;
    } catch (const bsdelab::NoSolution& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bsdelab::cli::kNoSolution;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bsdelab::cli::kFailure;
    }
}
