#include "bsdelab/singular_scheme.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/regression.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bsdelab {

DriverSpec TruncatedDriver::as_driver() const {
    const TruncatedDriver self = *this;
    return {fmt::format("clip({}, {})", base.name, lower_clip),
            [self](double x) { return self(x); },
            [self](double x) { return self.derivative(x); }, base.flags};
}

TruncatedDriver truncate(const DriverSpec& driver, double phi_bound, double horizon) {
    if (!driver.theorem_flags()) {
        throw DomainError(fmt::format("driver '{}' lacks the flags required for truncation", driver.name));
    }
    if (!(phi_bound >= 0.0) || !std::isfinite(phi_bound) || !(horizon > 0.0)) {
        throw DomainError("truncation needs a finite nonnegative phi bound and a positive horizon");
    }
    TruncatedDriver out;
    out.base = driver;
    out.lower_clip = -horizon * phi_bound;
    constexpr int kSamples = 1001;
    double lip = std::max(std::abs(driver.fprime(out.lower_clip)), std::abs(driver.fprime(0.0)));
    for (int k = 1; k < kSamples; ++k) {
        const double x = out.lower_clip * static_cast<double>(k) / kSamples;
        lip = std::max(lip, std::abs(driver.fprime(x)));
    }
    if (!std::isfinite(lip)) throw DomainError("driver derivative is not finite on the clip range");
    out.lipschitz = lip;
    return out;
}

std::string to_string(SchemeStatus s) {
    return s == SchemeStatus::Converged ? "Converged" : "NotConverged";
}

std::vector<double> default_schedule() {
    std::vector<double> s;
    for (double n = 2; n <= 256; n *= 2) s.push_back(n);
    return s;
}

bool SchemeReport::cauchy_decreasing() const {
    for (std::size_t k = 1; k < cauchy_gaps.size(); ++k) {
        if (!(cauchy_gaps[k] < cauchy_gaps[k - 1])) return false;
    }
    return true;
}

double estimate_lambda_f_integral(const SolutionEstimate& sol) { return sol.lambda_f_mass(); }

BmoEstimate estimate_bmo(const SolutionEstimate& sol, const PathBundle* bundle, Execution exec) {
    BmoEstimate best;
    if (sol.mode == SolveMode::OdeExact) return best;
    if (!bundle || bundle->paths() != sol.paths || bundle->grid().times != sol.grid.times) {
        throw DomainError("BMO estimate needs the bundle the solution was computed on");
    }
    const std::size_t n = sol.nodes();
    const std::size_t M = sol.paths;
    const std::size_t d = sol.dim;
    std::vector<double> remaining(M, 0.0);
    best.value = -1.0;

    constexpr int kPoints = 13;
    for (std::size_t i = n - 1; i-- > 0;) {
        const double dt = sol.grid.dt(i);
        parallel_for(M, exec, [&](std::size_t m) {
            double q = 0.0;
            for (std::size_t k = 0; k < d; ++k) q += sol.z_at(i, m, k) * sol.z_at(i, m, k);
            remaining[m] += q * dt;
        });
        NodeRegression reg(*bundle, i, sol.basis, exec);
        const auto fit = reg.fit(1, [&](std::size_t m, double* out) { out[0] = remaining[m]; });
        const std::size_t p = reg.basis_size();
        const double rss = deterministic_scalar_sum(M, exec, [&](std::size_t m) {
            const double e = remaining[m] - reg.predict(fit, m, 0);
            return e * e;
        });
        const double s2 = M > p ? rss / static_cast<double>(M - p) : 0.0;

        auto consider = [&](double value, double se, double x) {
            if (value > best.value) best = {value, se, sol.grid.times[i], x};
        };
        if (reg.constant_only()) {
            consider(fit.coefficients(0, 0), std::sqrt(s2 * fit.gram_inverse(0, 0)), 0.0);
            continue;
        }
        std::vector<double> x(d, 0.0);
        double phi[NodeRegression::kMaxBasis];
        for (std::size_t axis = 0; axis < d; ++axis) {
            for (int j = 0; j < kPoints; ++j) {
                std::fill(x.begin(), x.end(), 0.0);
                x[axis] = -3.0 + 6.0 * j / (kPoints - 1);
                sol.basis.evaluate(x, phi);
                const double value = fit.predict(x, sol.basis, 0);
                double quad = 0.0;
                for (std::size_t a = 0; a < p; ++a) {
                    for (std::size_t b = 0; b < p; ++b) {
                        quad += phi[a] * fit.gram_inverse(static_cast<Eigen::Index>(a),
                                                          static_cast<Eigen::Index>(b)) * phi[b];
                    }
                }
                consider(value, std::sqrt(std::max(s2 * quad, 0.0)), x[axis]);
            }
        }
    }
    if (best.value < 0.0) best.value = 0.0;
    return best;
}

namespace {

double node_mean(const SolutionEstimate& s, std::size_t i) {
    return s.mode == SolveMode::OdeExact ? s.y_at(i) : s.y_stats(i).mean;
}

std::size_t last_node_at_or_before(const TimeGrid& grid, double t0) {
    std::size_t k = 0;
    while (k + 1 < grid.size() && grid.times[k + 1] <= t0) ++k;
    return k;
}

double sup_distance(const SolutionEstimate& a, const SolutionEstimate& b, std::size_t last) {
    double d = 0.0;
    for (std::size_t i = 0; i <= last; ++i) d = std::max(d, std::abs(node_mean(a, i) - node_mean(b, i)));
    return d;
}

void validate_schedule(const std::vector<double>& schedule) {
    if (schedule.empty()) throw DomainError("truncation schedule is empty");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        if (!(schedule[k] > 0.0) || !std::isfinite(schedule[k])) {
            throw DomainError(fmt::format("truncation level {} is not positive", schedule[k]));
        }
        if (k > 0 && !(schedule[k] > schedule[k - 1])) {
            throw DomainError("truncation schedule must be strictly increasing");
        }
    }
}

}  // namespace

SchemeReport run_scheme(const BsdeProblem& problem, const TimeGrid& grid,
                        const std::vector<double>& schedule, double t0, const SchemeConfig& config,
                        const PathBundle* paths) {
    if (!problem.terminal.is_zero()) throw NoSolution("terminal value must vanish");
    if (problem.form != EquationForm::NonlinearPlus) {
        throw DomainError("the truncation scheme applies to the nonlinear +λf(Y) form");
    }
    problem.validate();
    validate_schedule(schedule);
    const double T = problem.horizon();
    if (!(t0 >= 0.0) || !(t0 < T) || t0 > grid.t_cap()) {
        throw DomainError(fmt::format("t0 = {} must lie in [0, t_cap = {}]", t0, grid.t_cap()));
    }
    if (config.solver.mode == SolveMode::RegressionMC && !paths) {
        throw DomainError("RegressionMC mode needs a path bundle");
    }

    const double phi_bound = problem.phi.bound();
    BsdeProblem clipped = problem;
    clipped.driver = truncate(problem.driver, phi_bound, T).as_driver();
    SolverConfig solver = config.solver;
    solver.substep_reference = schedule.back();
    const bool ode = solver.mode == SolveMode::OdeExact;

    SchemeReport rep;
    rep.n_schedule = schedule;
    rep.t0 = t0;
    rep.bmo_bound = 2.0 * T * T * phi_bound * phi_bound;
    const std::size_t last = last_node_at_or_before(grid, t0);

    for (double n : schedule) {
        rep.solutions.push_back(solve(clipped.truncated(n), grid, solver, paths));
        const auto& sol = rep.solutions.back();
        rep.lambda_f_integrals.push_back(estimate_lambda_f_integral(sol));
        rep.bmo.push_back(estimate_bmo(sol, paths, solver.exec));
        for (std::size_t i = 0; i < sol.nodes(); ++i) {
            const double y = node_mean(sol, i);
            const double lower = -grid.gaps[i] * phi_bound;
            rep.box_violation = std::max({rep.box_violation, lower - y, y});
        }
        if (rep.solutions.size() > 1) {
            const auto& prev = rep.solutions[rep.solutions.size() - 2];
            const auto cmp = comparison_check(prev, sol);
            rep.monotone_violations.push_back(cmp.max_violation);
            rep.monotone_violation = std::max(rep.monotone_violation, cmp.max_violation);
            rep.monotone_tolerance = std::max(rep.monotone_tolerance, ode ? config.ode_slack : cmp.tolerance);
            rep.cauchy_gaps.push_back(sup_distance(prev, sol, last));
        }
    }

    const auto& fin = rep.solutions.back();
    double se = 0.0;
    for (double v : fin.y_standard_error) se = std::max(se, v);
    rep.box_slack = ode ? config.ode_slack : solver.clamp_margin + 3.0 * se;
    rep.bounds_ok = rep.box_violation <= rep.box_slack;

    for (std::size_t i = last; i < grid.size(); ++i) {
        rep.terminal_continuity = std::max(rep.terminal_continuity,
                                           std::abs(node_mean(fin, i)) - grid.gaps[i] * phi_bound);
    }

    rep.lambda_f_bound = std::abs(node_mean(fin, 0)) + T * phi_bound + config.mass_margin;
    rep.lambda_f_ok = std::all_of(rep.lambda_f_integrals.begin(), rep.lambda_f_integrals.end(),
                                  [&](double v) { return v <= rep.lambda_f_bound; });
    rep.bmo_estimate = rep.bmo.back().value;
    rep.bmo_standard_error = rep.bmo.back().standard_error;

    rep.final.solution = fin;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        rep.final.lower.push_back(-grid.gaps[i] * phi_bound);
        rep.final.upper.push_back(0.0);
        rep.final.envelope.push_back(grid.times[i] > t0);
    }
    rep.status = !rep.cauchy_gaps.empty() && rep.cauchy_gaps.back() < config.tol
                     ? SchemeStatus::Converged
                     : SchemeStatus::NotConverged;
    return rep;
}

UniquenessProbe uniqueness_probe(const BsdeProblem& problem, const TimeGrid& grid,
                                 const std::vector<double>& schedule_a,
                                 const std::vector<double>& schedule_b, double t0,
                                 const SchemeConfig& config, const PathBundle* paths) {
    const auto a = run_scheme(problem, grid, schedule_a, t0, config, paths);
    const auto b = run_scheme(problem, grid, schedule_b, t0, config, paths);
    UniquenessProbe out;
    out.distance = sup_distance(a.final.solution, b.final.solution, last_node_at_or_before(grid, t0));
    out.tolerance = 2.0 * config.tol;
    out.ok = out.distance <= out.tolerance;
    return out;
}

void write_scheme_csv(const SchemeReport& report, std::ostream& out) {
    out << "n,Y0,cauchy_gap,monotone_violation,lambda_f_integral,bmo_estimate\n";
    for (std::size_t k = 0; k < report.n_schedule.size(); ++k) {
        const auto& sol = report.solutions[k];
        const double y0 = sol.mode == SolveMode::OdeExact ? sol.y_at(0) : sol.y_stats(0).mean;
        const std::string gap = k == 0 ? "" : fmt::format("{:.17g}", report.cauchy_gaps[k - 1]);
        const std::string mono = k == 0 ? "" : fmt::format("{:.17g}", report.monotone_violations[k - 1]);
        out << fmt::format("{:.17g},{:.17g},{},{},{:.17g},{:.17g}\n", report.n_schedule[k], y0, gap,
                           mono, report.lambda_f_integrals[k], report.bmo[k].value);
    }
}

void write_scheme_final_csv(const SchemeReport& report, std::ostream& out) {
    const auto& fin = report.final;
    out << "t,Y_mean,Y_sd,Z_mean,lower,upper,region\n";
    for (std::size_t i = 0; i < fin.solution.nodes(); ++i) {
        const auto st = fin.solution.y_stats(i);
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n",
                           fin.solution.grid.times[i], st.mean, std::sqrt(st.variance),
                           fin.solution.z_mean(i), fin.lower[i], fin.upper[i],
                           fin.envelope[i] ? "envelope" : "computed");
    }
}

void write_scheme_summary(const SchemeReport& report, std::ostream& out) {
    auto line = [&](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
    auto num = [](double v) { return fmt::format("{:.17g}", v); };
    auto list = [&](const std::vector<double>& v) {
        std::string s;
        for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + num(v[k]);
        return "[" + s + "]";
    };
    line("status", to_string(report.status));
    line("schedule", list(report.n_schedule));
    line("t0", num(report.t0));
    line("cauchy_gaps", list(report.cauchy_gaps));
    line("cauchy_decreasing", report.cauchy_decreasing() ? "true" : "false");
    line("monotone_violation", num(report.monotone_violation));
    line("monotone_tolerance", num(report.monotone_tolerance));
    line("box_violation", num(report.box_violation));
    line("box_slack", num(report.box_slack));
    line("bounds_ok", report.bounds_ok ? "true" : "false");
    line("terminal_continuity", num(report.terminal_continuity));
    line("lambda_f_integrals", list(report.lambda_f_integrals));
    line("lambda_f_bound", num(report.lambda_f_bound));
    line("lambda_f_ok", report.lambda_f_ok ? "true" : "false");
    line("bmo_estimate", num(report.bmo_estimate));
    line("bmo_standard_error", num(report.bmo_standard_error));
    line("bmo_bound", num(report.bmo_bound));
    line("bmo_ok", report.bmo_estimate <= report.bmo_bound + 3.0 * report.bmo_standard_error ? "true" : "false");
    const auto& y = report.final.solution;
    line("final_Y0", num(y.mode == SolveMode::OdeExact ? y.y_at(0) : y.y_stats(0).mean));
}

}  // namespace bsdelab
