#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace bsdelab::cli {

/// Exit codes of `run`.
enum ExitCode : int {
    kSuccess = 0,
    kFailure = 1,        // malformed config, usage errors, numerical failures
    kNotConverged = 2,
    kNoSolution = 3      // NoSolution raised where a solution was expected
};

struct Entry {
    std::string value;
    std::string source;  // file name, "<command line>" or "<default>"
    std::size_t line = 0;
};

/// Flat "section.key = value" configuration with provenance per entry.
///
/// Files use INI syntax: "[section]" headers, "key = value" lines, '#' or ';' comments.
class ScenarioConfig {
public:
    /// Defaults of a built-in scenario; throws ConfigError for an unknown name.
    static ScenarioConfig defaults(const std::string& scenario);

    const std::string& scenario() const noexcept { return scenario_; }

    /// Parses a config file body. A "scenario" key, if present, must match this scenario.
    void merge_text(const std::string& text, const std::string& source);
    void merge_file(const std::filesystem::path& file);
    /// Sets one key; `key` may be an alias such as "c" or "alpha".
    void set(const std::string& key, const std::string& value, const std::string& source,
             std::size_t line = 0);
    bool explicitly_set(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_integer(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    /// Sorted "key = value" lines.
    void echo(std::ostream& out) const;

    /// Canonical key for an alias or qualified name; throws ConfigError when unknown.
    static std::string canonical_key(const std::string& key, const std::string& source, std::size_t line);

    /// Value and provenance of a canonical key.
    const Entry& entry(const std::string& key) const;

private:
    std::string scenario_;
    std::map<std::string, Entry> entries_;
};

struct ScenarioInfo {
    std::string name;
    std::string claim;
    std::string defaults;
};

const std::vector<ScenarioInfo>& builtin_scenarios();

/// Prints the built-ins as an aligned table or as CSV.
void list_scenarios(std::ostream& out, bool csv);

struct RunOutcome {
    int exit_code = kSuccess;
    std::string status;  // one-line summary
    std::vector<std::filesystem::path> files;
};

/// Validates the configuration, runs the scenario and writes its files into `out_dir`.
/// Configuration and domain errors propagate as exceptions.
RunOutcome run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir);

}  // namespace bsdelab::cli
