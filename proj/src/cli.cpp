#include "bsdelab/cli.hpp"

#include "bsdelab/affine.hpp"
#include "bsdelab/diagnostics.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/lipschitz_solver.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/singular_scheme.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

namespace bsdelab::cli {

namespace {

const std::string kDefaultSource = "<default>";

// Every accepted key with its default; scenario tables override some of them.
const std::map<std::string, std::string>& base_defaults() {
    static const std::map<std::string, std::string> d = {
        {"intensity.kind", "power_gap"},
        {"intensity.p", "1"},
        {"intensity.gamma", "1"},
        {"intensity.c", "1"},
        {"intensity.T", "1"},
        {"phi.kind", "constant"},
        {"phi.value", "1"},
        {"phi.c", "2"},
        {"phi.amplitude", "0.5"},
        {"driver.kind", "identity"},
        {"driver.alpha", "1"},
        {"terminal.value", "0"},
        {"expect", "auto"},
        {"grid.scheme", "lambda"},
        {"grid.N", "200"},
        {"grid.lambda_max", "12"},
        {"grid.ratio", "0.5"},
        {"grid.eps_min", "1e-4"},
        {"mc.mode", "ode"},
        {"mc.M", "100000"},
        {"mc.seed", "1"},
        {"mc.degree", "3"},
        {"scheme.schedule", "2,4,8,16,32,64,128,256"},
        {"scheme.probe", "3,9,27,81,243"},
        {"scheme.t0", "0.25"},
        {"scheme.tol", "1e-5"},
        {"nonexistence.schedule", "4,16,64,256"},
        {"family.y0", "0,1,3"},
        {"family.tol", "1e-8"},
        {"ekred.r", "0.05"},
        {"ekred.sigma", "0.2"},
    };
    return d;
}

const std::map<std::string, std::string>& aliases() {
    static const std::map<std::string, std::string> a = {
        {"c", "phi.c"},           {"phi", "phi.kind"},         {"alpha", "driver.alpha"},
        {"driver", "driver.kind"}, {"terminal", "terminal.value"}, {"r", "ekred.r"},
        {"sigma", "ekred.sigma"}, {"gamma", "intensity.gamma"}, {"p", "intensity.p"},
        {"T", "intensity.T"},     {"intensity", "intensity.kind"}, {"N", "grid.N"},
        {"lambda_max", "grid.lambda_max"}, {"M", "mc.M"},     {"mode", "mc.mode"},
        {"degree", "mc.degree"},  {"seed", "mc.seed"},         {"schedule", "scheme.schedule"},
        {"t0", "scheme.t0"},      {"tol", "scheme.tol"},       {"y0", "family.y0"},
    };
    return a;
}

struct Builtin {
    ScenarioInfo info;
    std::map<std::string, std::string> overrides;
};

const std::vector<Builtin>& builtins() {
    static const std::vector<Builtin> b = {
        {{"affine_plus", "+lambda*Y equation: representation formula if A = 0, no solution otherwise",
          "PowerGap(1), T=1, phi=1, A=0"},
         {}},
        {{"affine_minus_family", "-lambda*Y equation: Y0*exp(-Lambda) solves it for every Y0",
          "PowerGap(1), T=1, phi=0, Y0 in {0,1,3}"},
         {{"phi.value", "0"}}},
        {{"ode_trichotomy", "deterministic -lambda*Y equation: family with limit C, or no solution",
          "PowerGap(1), T=1, phi=c*lambda, c=2, Y0 in {0,1}"},
         {{"phi.kind", "c_lambda"}, {"family.y0", "0,1"}}},
        {{"ek_red", "reduced equation with exploding intensity has infinitely many solutions",
          "ExpGap(1), T=1, r=0.05, sigma=0.2, Y0 in {0,1}"},
         {{"intensity.kind", "exp_gap"}, {"phi.value", "0"}, {"family.y0", "0,1"}}},
        {{"nonlinear_exp", "+lambda*f(Y) with f(x)=(1-exp(-alpha*x))/alpha: solution iff A = 0",
          "PowerGap(1), T=1, phi=1, alpha=1, schedule 2..256, t0=0.25"},
         {{"driver.kind", "exp_utility"}, {"phi.kind", "auto"}, {"grid.N", "auto"}, {"scheme.tol", "auto"}, {"grid.lambda_max", "auto"},
          {"scheme.schedule", "auto"}, {"scheme.probe", "auto"}}},
    };
    return b;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

// ---------------------------------------------------------------------------------------------
// ScenarioConfig

ScenarioConfig ScenarioConfig::defaults(const std::string& scenario) {
    const auto& all = builtins();
    const auto it = std::find_if(all.begin(), all.end(),
                                 [&](const Builtin& b) { return b.info.name == scenario; });
    if (it == all.end()) {
        throw ConfigError("<command line>", 0, "scenario", fmt::format("unknown scenario '{}'", scenario));
    }
    ScenarioConfig cfg;
    cfg.scenario_ = scenario;
    for (const auto& [k, v] : base_defaults()) cfg.entries_[k] = {v, kDefaultSource, 0};
    for (const auto& [k, v] : it->overrides) cfg.entries_[k] = {v, kDefaultSource, 0};
    return cfg;
}

std::string ScenarioConfig::canonical_key(const std::string& key, const std::string& source,
                                          std::size_t line) {
    const auto a = aliases().find(key);
    const std::string k = a == aliases().end() ? key : a->second;
    if (!base_defaults().count(k)) throw ConfigError(source, line, key, "unknown key");
    return k;
}

void ScenarioConfig::set(const std::string& key, const std::string& value, const std::string& source,
                         std::size_t line) {
    const std::string k = canonical_key(key, source, line);
    const std::string v = trim(value);
    if (v.empty()) throw ConfigError(source, line, key, "empty value");
    entries_[k] = {v, source, line};
}

bool ScenarioConfig::explicitly_set(const std::string& key) const {
    return entry(key).source != kDefaultSource;
}

void ScenarioConfig::merge_text(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        const auto hash = s.find_first_of("#;");
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(source, line, "", "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError(source, line, "", "empty section name");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(source, line, "", "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(source, line, "", "missing key before '='");
        const std::string full = section.empty() ? key : section + "." + key;
        if (full == "scenario") {
            if (value != scenario_) {
                throw ConfigError(source, line, "scenario",
                                  fmt::format("file is for '{}', running '{}'", value, scenario_));
            }
            continue;
        }
        set(full, value, source, line);
    }
}

void ScenarioConfig::merge_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string(), 0, "", "cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    merge_text(buf.str(), file.string());
}

const Entry& ScenarioConfig::entry(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("<internal>", 0, key, "key has no value");
    return it->second;
}

std::string ScenarioConfig::get_string(const std::string& key) const { return entry(key).value; }

double ScenarioConfig::get_double(const std::string& key) const {
    const auto& e = entry(key);
    const auto v = parse_double(e.value);
    if (!v || !std::isfinite(*v)) {
        throw ConfigError(e.source, e.line, key, fmt::format("'{}' is not a finite number", e.value));
    }
    return *v;
}

long long ScenarioConfig::get_integer(const std::string& key) const {
    const auto& e = entry(key);
    long long v = 0;
    const auto r = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (r.ec != std::errc() || r.ptr != e.value.data() + e.value.size()) {
        throw ConfigError(e.source, e.line, key, fmt::format("'{}' is not an integer", e.value));
    }
    return v;
}

std::vector<double> ScenarioConfig::get_list(const std::string& key) const {
    const auto& e = entry(key);
    std::string s = e.value;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        const auto v = parse_double(tok);
        if (!v || !std::isfinite(*v)) {
            throw ConfigError(e.source, e.line, key, fmt::format("'{}' is not a number", tok));
        }
        out.push_back(*v);
    }
    if (out.empty()) throw ConfigError(e.source, e.line, key, "empty list");
    return out;
}

void ScenarioConfig::echo(std::ostream& out) const {
    for (const auto& [k, e] : entries_) out << k << " = " << e.value << '\n';
}

const std::vector<ScenarioInfo>& builtin_scenarios() {
    static const std::vector<ScenarioInfo> infos = [] {
        std::vector<ScenarioInfo> v;
        for (const auto& b : builtins()) v.push_back(b.info);
        return v;
    }();
    return infos;
}

void list_scenarios(std::ostream& out, bool csv) {
    if (csv) {
        out << "name,claim,defaults\n";
        for (const auto& s : builtin_scenarios()) {
            out << s.name << ",\"" << s.claim << "\",\"" << s.defaults << "\"\n";
        }
        return;
    }
    std::size_t w = 4;
    for (const auto& s : builtin_scenarios()) w = std::max(w, s.name.size());
    out << fmt::format("{:<{}}  {}\n", "name", w, "claim / defaults");
    for (const auto& s : builtin_scenarios()) {
        out << fmt::format("{:<{}}  {}\n{:<{}}  [{}]\n", s.name, w, s.claim, "", w, s.defaults);
    }
}

// ---------------------------------------------------------------------------------------------
// Scenario construction

namespace {

ConfigError field_error(const ScenarioConfig& cfg, const std::string& key, const std::string& what) {
    const auto& e = cfg.entry(key);
    return ConfigError(e.source, e.line, key, what);
}

/// Runs `build`; domain errors are reported against `key`.
template <class F>
auto guarded(const ScenarioConfig& cfg, const std::string& key, F&& build) {
    try {
        return build();
    } catch (const ConfigError&) {
        throw;
    } catch (const DomainError& e) {
        throw field_error(cfg, key, e.what());
    } catch (const InfeasibleGrid& e) {
        throw field_error(cfg, key, e.what());
    }
}

struct Setup {
    IntensityModel model = IntensityModel::power_gap(1.0, 1.0);
    CoefficientProcess phi = CoefficientProcess::constant(0.0);
    DriverSpec driver = DriverSpec::identity();
    double terminal = 0.0;
    TimeGrid grid;
    SolveMode mode = SolveMode::OdeExact;
    std::size_t paths = 0;
    std::uint64_t seed = 1;
    int degree = 3;
};

IntensityModel build_intensity(const ScenarioConfig& cfg) {
    const std::string kind = cfg.get_string("intensity.kind");
    const double T = cfg.get_double("intensity.T");
    return guarded(cfg, "intensity.kind", [&] {
        if (kind == "power_gap") return IntensityModel::power_gap(cfg.get_double("intensity.p"), T);
        if (kind == "exp_gap") return IntensityModel::exp_gap(cfg.get_double("intensity.gamma"), T);
        if (kind == "bounded") return IntensityModel::bounded(cfg.get_double("intensity.c"), T);
        throw field_error(cfg, "intensity.kind",
                          fmt::format("'{}' is not one of power_gap, exp_gap, bounded", kind));
    });
}

CoefficientProcess build_phi(const ScenarioConfig& cfg, const IntensityModel& model) {
    const std::string kind = cfg.get_string("phi.kind");
    const double T = model.horizon();
    return guarded(cfg, "phi.kind", [&]() -> CoefficientProcess {
        if (kind == "constant") return CoefficientProcess::constant(cfg.get_double("phi.value"));
        if (kind == "exp_minus_lambda") return CoefficientProcess::exp_minus_lambda(model);
        if (kind == "c_lambda") {
            const double c = cfg.get_double("phi.c");
            return CoefficientProcess::deterministic_in_gap(
                [model, c](double gap) { return c * model.intensity_at_gap(gap); }, T);
        }
        if (kind == "c_lambda_cumulative") {
            const double c = cfg.get_double("phi.c");
            return CoefficientProcess::deterministic_in_gap(
                [model, c](double gap) {
                    return c * model.intensity_at_gap(gap) * model.cumulative_at_gap(gap);
                },
                T);
        }
        if (kind == "sine_time") {
            const double v = cfg.get_double("phi.value");
            const double a = cfg.get_double("phi.amplitude");
            return CoefficientProcess::deterministic(
                [v, a, T](double t) { return v + a * std::sin(2.0 * std::numbers::pi * t / T); }, T,
                std::abs(v) + std::abs(a));
        }
        if (kind == "sine_markov") {
            const double v = cfg.get_double("phi.value");
            return CoefficientProcess::markovian(
                [v](double, std::span<const double> w) { return v * 0.5 * (1.0 + std::sin(w[0])); },
                std::abs(v));
        }
        throw field_error(cfg, "phi.kind",
                          fmt::format("'{}' is not one of constant, exp_minus_lambda, c_lambda, "
                                      "c_lambda_cumulative, sine_time, sine_markov",
                                      kind));
    });
}

DriverSpec build_driver(const ScenarioConfig& cfg) {
    const std::string kind = cfg.get_string("driver.kind");
    return guarded(cfg, "driver.alpha", [&] {
        if (kind == "identity") return DriverSpec::identity();
        if (kind == "exp_utility") return DriverSpec::exp_utility(cfg.get_double("driver.alpha"));
        throw field_error(cfg, "driver.kind",
                          fmt::format("'{}' is not one of identity, exp_utility", kind));
    });
}

SolveMode build_mode(const ScenarioConfig& cfg) {
    const std::string m = cfg.get_string("mc.mode");
    if (m == "ode") return SolveMode::OdeExact;
    if (m == "mc") return SolveMode::RegressionMC;
    throw field_error(cfg, "mc.mode", fmt::format("'{}' is not one of ode, mc", m));
}

TimeGrid build_grid(const ScenarioConfig& cfg, const IntensityModel& model, double n, double lambda_max) {
    const std::string scheme = cfg.get_string("grid.scheme");
    if (!(n >= 2) || n != std::floor(n)) throw field_error(cfg, "grid.N", "N must be an integer >= 2");
    return guarded(cfg, "grid.scheme", [&] {
        const auto count = static_cast<std::size_t>(n);
        if (scheme == "uniform") return make_grid(model, count, GridScheme::uniform());
        if (scheme == "lambda") return make_grid(model, count, GridScheme::lambda_equidistributed(lambda_max));
        if (scheme == "geometric") {
            return make_grid(model, count, GridScheme::geometric_tail(cfg.get_double("grid.ratio"),
                                                                      cfg.get_double("grid.eps_min")));
        }
        throw field_error(cfg, "grid.scheme",
                          fmt::format("'{}' is not one of uniform, lambda, geometric", scheme));
    });
}

std::size_t positive_count(const ScenarioConfig& cfg, const std::string& key) {
    const long long v = cfg.get_integer(key);
    if (v < 1) throw field_error(cfg, key, "must be a positive integer");
    return static_cast<std::size_t>(v);
}

Setup build_setup(ScenarioConfig& cfg) {
    Setup s;
    s.model = build_intensity(cfg);
    s.mode = build_mode(cfg);
    const bool mc = s.mode == SolveMode::RegressionMC;
    // A Markovian phi is the only way the MC mode sees a nontrivial Z.
    if (cfg.get_string("phi.kind") == "auto") cfg.set("phi.kind", mc ? "sine_markov" : "constant", "<default>");
    if (cfg.get_string("scheme.tol") == "auto") cfg.set("scheme.tol", mc ? "1e-4" : "1e-5", "<default>");
    s.phi = build_phi(cfg, s.model);
    s.driver = build_driver(cfg);
    s.terminal = cfg.get_double("terminal.value");
    if (cfg.get_string("grid.N") == "auto") cfg.set("grid.N", mc ? "41" : "400", "<default>");
    if (cfg.get_string("grid.lambda_max") == "auto") cfg.set("grid.lambda_max", mc ? "5" : "12", "<default>");
    if (cfg.get_string("scheme.schedule") == "auto") {
        cfg.set("scheme.schedule", mc ? "16,32,64" : "2,4,8,16,32,64,128,256", "<default>");
    }
    if (cfg.get_string("scheme.probe") == "auto") cfg.set("scheme.probe", mc ? "none" : "3,9,27,81,243", "<default>");
    s.grid = build_grid(cfg, s.model, cfg.get_double("grid.N"), cfg.get_double("grid.lambda_max"));
    s.paths = positive_count(cfg, "mc.M");
    s.seed = static_cast<std::uint64_t>(cfg.get_integer("mc.seed"));
    const long long degree = cfg.get_integer("mc.degree");
    if (degree < 0 || degree > 8) throw field_error(cfg, "mc.degree", "degree must be in [0, 8]");
    s.degree = static_cast<int>(degree);
    const std::string expect = cfg.get_string("expect");
    if (expect != "auto" && expect != "solution" && expect != "nonexistence") {
        throw field_error(cfg, "expect", "must be one of auto, solution, nonexistence");
    }
    return s;
}

bool expects_solution(const ScenarioConfig& cfg, double terminal) {
    const std::string e = cfg.get_string("expect");
    if (e == "auto") return terminal == 0.0;
    return e == "solution";
}

std::vector<double> increasing_list(const ScenarioConfig& cfg, const std::string& key) {
    const auto v = cfg.get_list(key);
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!(v[k] > 0.0) || (k > 0 && !(v[k] > v[k - 1]))) {
            throw field_error(cfg, key, "must be a strictly increasing list of positive levels");
        }
    }
    return v;
}

class Writer {
public:
    explicit Writer(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }
    template <class F>
    void file(const std::string& name, F&& body) {
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(fmt::format("cannot write {}", path.string()));
        body(out);
        files.push_back(path);
    }
    std::vector<std::filesystem::path> files;

private:
    std::filesystem::path dir_;
};

void report_header(std::ostream& out, const ScenarioConfig& cfg) {
    out << "scenario = " << cfg.scenario() << '\n' << "[config]\n";
    cfg.echo(out);
    out << "[result]\n";
}

void write_members_csv(const std::vector<AffineSolution>& members, std::ostream& out) {
    out << "t";
    for (std::size_t k = 0; k < members.size(); ++k) out << ",Y_" << k;
    out << '\n';
    const auto& grid = members.front().grid;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << num(grid.times[i]);
        for (const auto& m : members) out << ',' << num(m.y_at(i));
        out << '\n';
    }
}

BsdeProblem affine_problem(const Setup& s, EquationForm form) {
    BsdeProblem p;
    p.intensity = s.model;
    p.phi = s.phi;
    p.driver = s.driver;
    p.form = form;
    p.terminal = s.terminal == 0.0 ? TerminalValue::zero() : TerminalValue::constant(s.terminal);
    return p;
}

RunOutcome nonexistence_run(const ScenarioConfig& cfg, const Setup& s, const BsdeProblem& problem,
                            const std::string& reason, Writer& w) {
    SolverConfig sc;
    const auto cert = certify_nonexistence(problem, s.grid, increasing_list(cfg, "nonexistence.schedule"),
                                           sc, cfg.scenario());
    const bool expected = !expects_solution(cfg, s.terminal);
    RunOutcome out;
    out.exit_code = expected ? kSuccess : kNoSolution;
    out.status = cert.nonexistence->monotone_divergent ? "NoSolution certified" : "NoSolution (growth test inconclusive)";
    w.file("certificate.csv", [&](std::ostream& o) { write_certificate_csv(cert, o); });
    w.file("report.txt", [&](std::ostream& o) {
        report_header(o, cfg);
        o << "status = " << out.status << '\n';
        o << "reason = " << reason << '\n';
        o << "expected = " << (expected ? "true" : "false") << '\n';
        write_certificate(cert, o);
    });
    if (!cert.nonexistence->monotone_divergent) out.exit_code = kFailure;
    return out;
}

RunOutcome nonuniqueness_run(const ScenarioConfig& cfg, const Setup& s, const NonUniquenessScenario& sc,
                             Writer& w, const std::string& prefix = {}) {
    const auto cert = certify_nonuniqueness(sc, s.grid, cfg.get_double("family.tol"), cfg.scenario());
    RunOutcome out;
    out.status = fmt::format("NonUniqueness certified ({} members)", cert.nonuniqueness->members.size());
    w.file("solution.csv", [&](std::ostream& o) { write_members_csv(cert.nonuniqueness->members, o); });
    w.file("certificate.csv", [&](std::ostream& o) { write_certificate_csv(cert, o); });
    w.file("report.txt", [&](std::ostream& o) {
        report_header(o, cfg);
        o << prefix;
        o << "status = " << out.status << '\n';
        for (std::size_t k = 0; k < cert.nonuniqueness->members.size(); ++k) {
            o << fmt::format("class_d_norm {} = {}\n", k, num(class_d_norm(cert.nonuniqueness->members[k])));
        }
        write_certificate(cert, o);
    });
    return out;
}

RunOutcome run_affine_plus(ScenarioConfig& cfg, const std::filesystem::path& dir) {
    const Setup s = build_setup(cfg);
    const BsdeProblem problem = affine_problem(s, EquationForm::PlusLambdaY);
    Writer w(dir);
    std::optional<PathBundle> bundle;
    if (!s.phi.deterministic()) bundle.emplace(simulate_paths(s.grid, 1, s.paths, s.seed));
    AffineSolution sol;
    try {
        sol = solve_affine_plus(problem, s.grid, bundle ? &*bundle : nullptr,
                                RegressionBasis::polynomial(s.degree));
    } catch (const NoSolution& e) {
        if (!s.phi.deterministic()) throw;
        auto out = nonexistence_run(cfg, s, problem, e.reason(), w);
        out.files = w.files;
        return out;
    }
    RunOutcome out;
    out.status = "Solved";
    w.file("solution.csv", [&](std::ostream& o) { write_affine_csv(sol, o); });
    w.file("report.txt", [&](std::ostream& o) {
        report_header(o, cfg);
        o << "status = " << out.status << '\n';
        o << "provenance = " << to_string(sol.provenance) << '\n';
        o << "Y0 = " << num(sol.y_stats(0).mean) << '\n';
        double slack = INFINITY;
        for (double b : sol.bound_check) slack = std::min(slack, b);
        o << "bound_min_slack = " << num(slack) << '\n';
        o << "bound_ok = " << (slack >= -1e-12 ? "true" : "false") << '\n';
        if (s.phi.kind() == CoefficientKind::Constant && s.model.kind() == IntensityKind::PowerGap) {
            const double v = s.phi(0.0);
            double err = 0.0;
            for (std::size_t i = 0; i < s.grid.size(); ++i) {
                const double closed = -v * s.grid.gaps[i] / (1.0 + s.model.parameter());
                err = std::max(err, std::abs(sol.y_at(i) - closed));
            }
            o << "closed_form_error = " << num(err) << '\n';
        }
        if (sol.deterministic()) {
            const auto r = residual_check(sol, problem);
            o << "max_residual = " << num(r.max_residual) << '\n';
            o << "integrability = " << num(r.integrability_estimate) << '\n';
        }
        o << "class_d_norm = " << num(class_d_norm(sol)) << '\n';
    });
    out.files = w.files;
    return out;
}

RunOutcome run_affine_minus_family(ScenarioConfig& cfg, const std::filesystem::path& dir) {
    const Setup s = build_setup(cfg);
    Writer w(dir);
    RunOutcome out;
    if (s.terminal != 0.0) {
        out = nonexistence_run(cfg, s, affine_problem(s, EquationForm::MinusLambdaY),
                               "nonzero terminal value", w);
    } else {
        if (!(s.phi.kind() == CoefficientKind::Constant && s.phi.bound() == 0.0)) {
            throw field_error(cfg, "phi.kind", "the family scenario is homogeneous: phi must be 0");
        }
        out = nonuniqueness_run(cfg, s,
                                NonUniquenessScenario::fundamental_minus(s.model, cfg.get_list("family.y0")), w);
    }
    out.files = w.files;
    return out;
}

RunOutcome run_ode_trichotomy(ScenarioConfig& cfg, const std::filesystem::path& dir) {
    const Setup s = build_setup(cfg);
    if (!s.phi.deterministic()) throw field_error(cfg, "phi.kind", "ODE scenario needs deterministic phi");
    const auto cls = classify_ode(s.model, s.phi);
    std::string prefix;
    for (const auto& [t, m] : cls.limit_estimates) prefix += fmt::format("m(T - {}) = {}\n", num(s.model.horizon() - t), num(m));
    Writer w(dir);
    RunOutcome out;
    if (cls.kind == OdeClassification::Case::Diverges) {
        out.status = "Diverges";
        w.file("report.txt", [&](std::ostream& o) {
            report_header(o, cfg);
            o << "classification = Diverges\n" << prefix;
            o << "status = no terminal value admits a solution\n";
        });
    } else {
        prefix = fmt::format("classification = ConvergesTo({})\n", num(cls.limit)) + prefix;
        out = nonuniqueness_run(
            cfg, s, NonUniquenessScenario::ode_family(s.model, s.phi, cls.limit, cfg.get_list("family.y0")), w,
            prefix);
        out.status = fmt::format("ConvergesTo({}), {}", num(cls.limit), out.status);
    }
    out.files = w.files;
    return out;
}

RunOutcome run_ek_red(ScenarioConfig& cfg, const std::filesystem::path& dir) {
    const Setup s = build_setup(cfg);
    if (s.model.kind() != IntensityKind::ExpGap) {
        throw field_error(cfg, "intensity.kind", "ek_red uses the exp_gap intensity");
    }
    Writer w(dir);
    auto out = nonuniqueness_run(cfg, s,
                                 NonUniquenessScenario::ek_red(cfg.get_double("ekred.r"), cfg.get_double("ekred.sigma"),
                                                               s.model.parameter(), s.model.horizon(),
                                                               cfg.get_list("family.y0")),
                                 w);
    out.files = w.files;
    return out;
}

RunOutcome run_nonlinear_exp(ScenarioConfig& cfg, const std::filesystem::path& dir) {
    const Setup s = build_setup(cfg);
    BsdeProblem problem = affine_problem(s, EquationForm::NonlinearPlus);
    Writer w(dir);
    if (s.terminal != 0.0) {
        auto out = nonexistence_run(cfg, s, problem, "nonzero terminal value", w);
        out.files = w.files;
        return out;
    }
    guarded(cfg, "driver.kind", [&] { problem.validate(); return 0; });
    const auto schedule = increasing_list(cfg, "scheme.schedule");
    const double t0 = cfg.get_double("scheme.t0");
    if (!(t0 >= 0.0 && t0 <= s.grid.t_cap())) {
        throw field_error(cfg, "scheme.t0", fmt::format("must lie in [0, t_cap = {}]", num(s.grid.t_cap())));
    }
    SchemeConfig sc;
    sc.tol = cfg.get_double("scheme.tol");
    sc.solver.mode = s.mode;
    sc.solver.basis = RegressionBasis::polynomial(s.degree);
    std::optional<PathBundle> bundle;
    if (s.mode == SolveMode::RegressionMC) bundle.emplace(simulate_paths(s.grid, 1, s.paths, s.seed));
    const PathBundle* paths = bundle ? &*bundle : nullptr;
    const auto rep = run_scheme(problem, s.grid, schedule, t0, sc, paths);

    std::optional<UniquenessProbe> probe;
    if (cfg.get_string("scheme.probe") != "none") {
        const auto other = increasing_list(cfg, "scheme.probe");
        probe = uniqueness_probe(problem, s.grid, schedule, other, t0, sc, paths);
    }

    RunOutcome out;
    out.exit_code = rep.status == SchemeStatus::Converged ? kSuccess : kNotConverged;
    out.status = to_string(rep.status);
    w.file("solution.csv", [&](std::ostream& o) { write_scheme_final_csv(rep, o); });
    w.file("scheme.csv", [&](std::ostream& o) { write_scheme_csv(rep, o); });
    w.file("report.txt", [&](std::ostream& o) {
        report_header(o, cfg);
        write_scheme_summary(rep, o);
        o << "class_d_norm = " << num(class_d_norm(rep.final.solution, s.model.horizon() * s.phi.bound() / 8)) << '\n';
        if (probe) {
            o << "uniqueness_distance = " << num(probe->distance) << '\n';
            o << "uniqueness_ok = " << (probe->ok ? "true" : "false") << '\n';
        }
    });
    out.files = w.files;
    return out;
}

}  // namespace

RunOutcome run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
    ScenarioConfig cfg = config;
    const std::string& name = cfg.scenario();
    if (name == "affine_plus") return run_affine_plus(cfg, out_dir);
    if (name == "affine_minus_family") return run_affine_minus_family(cfg, out_dir);
    if (name == "ode_trichotomy") return run_ode_trichotomy(cfg, out_dir);
    if (name == "ek_red") return run_ek_red(cfg, out_dir);
    if (name == "nonlinear_exp") return run_nonlinear_exp(cfg, out_dir);
    throw ConfigError("<command line>", 0, "scenario", fmt::format("unknown scenario '{}'", name));
}

}  // namespace bsdelab::cli
