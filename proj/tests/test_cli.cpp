#include "bsdelab/cli.hpp"
#include "bsdelab/errors.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace bsdelab;
using namespace bsdelab::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "bsdelab_cli_tests" / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(BSDELAB_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string report_value(const std::string& report, const std::string& key) {
    const auto at = report.find("\n" + key + " = ");
    if (at == std::string::npos) return {};
    const auto start = at + key.size() + 4;
    return report.substr(start, report.find('\n', start) - start);
}

}  // namespace

TEST(Config, SectionsAliasesAndComments) {
    auto cfg = ScenarioConfig::defaults("nonlinear_exp");
    cfg.merge_text("# comment\n[driver]\nalpha = 2 ; trailing\n\n[grid]\nN = 100\n", "demo.ini");
    EXPECT_EQ(cfg.get_double("driver.alpha"), 2.0);
    EXPECT_EQ(cfg.get_integer("grid.N"), 100);
    EXPECT_TRUE(cfg.explicitly_set("grid.N"));
    EXPECT_FALSE(cfg.explicitly_set("mc.M"));
    cfg.set("c", "3", "<command line>");
    EXPECT_EQ(cfg.get_double("phi.c"), 3.0);
    EXPECT_EQ(cfg.entry("phi.c").source, "<command line>");
    cfg.set("schedule", "2, 4 8", "<command line>");
    EXPECT_EQ(cfg.get_list("scheme.schedule"), (std::vector<double>{2, 4, 8}));
    std::ostringstream echo;
    cfg.echo(echo);
    EXPECT_NE(echo.str().find("driver.alpha = 2\n"), std::string::npos);
}

TEST(Config, ErrorsNameLineAndField) {
    auto cfg = ScenarioConfig::defaults("affine_plus");
    try {
        cfg.merge_text("[grid]\nN = 10\nbogus = 1\n", "f.ini");
        FAIL() << "no error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.field(), "grid.bogus");
    }
    try {
        cfg.merge_text("[grid]\nN 10\n", "f.ini");
        FAIL() << "no error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(cfg.merge_text("[grid\n", "f.ini"), ConfigError);
    EXPECT_THROW(cfg.merge_text("scenario = ek_red\n", "f.ini"), ConfigError);
    cfg.merge_text("[terminal]\nvalue = abc\n", "g.ini");
    try {
        (void)cfg.get_double("terminal.value");
        FAIL() << "no error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "terminal.value");
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("g.ini:2"), std::string::npos);
    }
    EXPECT_THROW(ScenarioConfig::defaults("nope"), ConfigError);
}

TEST(Config, DomainErrorsBecomeFieldErrorsBeforeRunning) {
    auto cfg = ScenarioConfig::defaults("nonlinear_exp");
    cfg.set("alpha", "-1", "<command line>");
    const auto dir = scratch("invalid");
    try {
        run_scenario(cfg, dir);
        FAIL() << "no error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "driver.alpha");
    }
    EXPECT_FALSE(fs::exists(dir / "report.txt"));
}

TEST(List, BuiltinsTableAndCsv) {
    EXPECT_EQ(builtin_scenarios().size(), 5u);
    std::ostringstream table, csv;
    list_scenarios(table, false);
    list_scenarios(csv, true);
    std::size_t rows = 0;
    for (char c : csv.str()) rows += c == '\n';
    EXPECT_EQ(rows, 6u);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "name,claim,defaults");
    for (const auto& s : builtin_scenarios()) EXPECT_NE(table.str().find(s.name), std::string::npos);
}

TEST(Run, OdeTrichotomyReportsLimitAndMembers) {
    auto cfg = ScenarioConfig::defaults("ode_trichotomy");
    cfg.set("c", "2", "<command line>");
    const auto dir = scratch("ode");
    const auto out = run_scenario(cfg, dir);
    EXPECT_EQ(out.exit_code, kSuccess);
    const auto report = slurp(dir / "report.txt");
    EXPECT_NE(report.find("classification = ConvergesTo(1.99999"), std::string::npos);
    EXPECT_NE(report.find("phi.c = 2\n"), std::string::npos);
    const auto sol = slurp(dir / "solution.csv");
    EXPECT_EQ(sol.substr(0, sol.find('\n')), "t,Y_0,Y_1");
}

TEST(Run, NonlinearExpReportsChecks) {
    auto cfg = ScenarioConfig::defaults("nonlinear_exp");
    const auto dir = scratch("nl");
    const auto out = run_scenario(cfg, dir);
    EXPECT_EQ(out.exit_code, kSuccess);
    const auto report = slurp(dir / "report.txt");
    EXPECT_EQ(report_value(report, "monotone_violation"), "0");
    EXPECT_EQ(report_value(report, "bounds_ok"), "true");
    EXPECT_EQ(report_value(report, "bmo_ok"), "true");
    EXPECT_EQ(report_value(report, "status"), "Converged");
    EXPECT_TRUE(fs::exists(dir / "scheme.csv"));
}

TEST(Run, NonExistenceIsExpectedUnlessASolutionWasRequested) {
    auto cfg = ScenarioConfig::defaults("affine_plus");
    cfg.set("terminal", "1", "<command line>");
    const auto dir = scratch("plus");
    auto out = run_scenario(cfg, dir);
    EXPECT_EQ(out.exit_code, kSuccess);
    EXPECT_TRUE(fs::exists(dir / "certificate.csv"));
    EXPECT_NE(slurp(dir / "report.txt").find("monotone_divergent = true"), std::string::npos);
    cfg.set("expect", "solution", "<command line>");
    out = run_scenario(cfg, dir);
    EXPECT_EQ(out.exit_code, kNoSolution);
}

TEST(Run, ExhaustedScheduleExitsWithNotConverged) {
    auto cfg = ScenarioConfig::defaults("nonlinear_exp");
    cfg.set("schedule", "2,4", "<command line>");
    cfg.set("scheme.probe", "none", "<command line>");
    EXPECT_EQ(run_scenario(cfg, scratch("nc")).exit_code, kNotConverged);
}

TEST(Binary, ExitCodes) {
    const auto dir = scratch("bin");
    EXPECT_EQ(run_binary("list"), 0);
    EXPECT_EQ(run_binary("list --format csv"), 0);
    EXPECT_EQ(run_binary("list --format xml"), 1);
    EXPECT_EQ(run_binary("run ode_trichotomy --c 2 --out " + dir.string()), 0);
    EXPECT_EQ(run_binary("run affine_plus --terminal 1 --out " + dir.string()), 0);
    EXPECT_EQ(run_binary("run affine_plus --terminal=-1 --expect solution --out " + dir.string()), 3);
    EXPECT_EQ(run_binary("run nonlinear_exp --schedule 2,4 --out " + dir.string()), 2);
    EXPECT_EQ(run_binary("run nonlinear_exp --bogus 1 --out " + dir.string()), 1);
    EXPECT_EQ(run_binary("run nonlinear_exp --alpha --out " + dir.string()), 1);
    EXPECT_EQ(run_binary("run no_such_scenario"), 1);
    EXPECT_EQ(run_binary("run ek_red --config /nonexistent.ini --out " + dir.string()), 1);
    EXPECT_EQ(run_binary(""), 1);
}

TEST(Binary, ByteIdenticalCsvAcrossWorkerCounts) {
    const std::string common = " --mode mc --M 20000 --seed 3 --schedule 8,16";
    std::string ref_solution, ref_scheme, ref_affine;
    for (int w : {1, 4, 8}) {
        const auto dir = scratch("repro" + std::to_string(w));
        const int code = run_binary("run nonlinear_exp" + common + " --threads " + std::to_string(w) + " --out " +
                                    (dir / "nl").string());
        ASSERT_TRUE(code == kSuccess || code == kNotConverged) << code;
        ASSERT_EQ(run_binary("run affine_plus --phi sine_markov --M 20000 --seed 3 --threads " + std::to_string(w) +
                             " --out " + (dir / "ap").string()), 0);
        const auto sol = slurp(dir / "nl" / "solution.csv");
        const auto sch = slurp(dir / "nl" / "scheme.csv");
        const auto aff = slurp(dir / "ap" / "solution.csv");
        ASSERT_FALSE(sol.empty());
        if (w == 1) {
            ref_solution = sol;
            ref_scheme = sch;
            ref_affine = aff;
        } else {
            EXPECT_EQ(sol, ref_solution) << w;
            EXPECT_EQ(sch, ref_scheme) << w;
            EXPECT_EQ(aff, ref_affine) << w;
        }
    }
}
