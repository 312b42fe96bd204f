#include "bsdelab/lipschitz_solver.hpp"
#include "bsdelab/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bsdelab {

namespace {

struct StepResult {
    double y;
    double residual;
};

/// Solves y − c + h·g(y) = 0 with g(y) = φ + sλ f(y) + b·y + σ·zsum.
StepResult implicit_step(const BsdeProblem& p, double c, double h, double lambda, double phi,
                         double zsum, const SolverConfig& cfg) {
    const double s = p.lambda_sign();
    const double b = p.y_slope;
    const double forcing = phi + p.z_slope * zsum;
    auto F = [&](double y) { return y - c + h * (forcing + s * lambda * p.f(y) + b * y); };

    if (p.form != EquationForm::NonlinearPlus) {
        const double denom = 1.0 + h * (s * lambda + b);
        if (!(denom > 0.0)) {
            throw NumericError(fmt::format(
                "implicit step not solvable: 1 + h(±λ + b) = {} (h={}, λ={})", denom, h, lambda));
        }
        const double y = (c - h * forcing) / denom;
        return {y, std::abs(F(y))};
    }

    const double scale = 1.0 + std::abs(c);
    const double tol = cfg.newton_tol * scale;
    double y = c;
    double fy = F(y);
    if (std::abs(fy) <= tol) return {y, std::abs(fy)};

    // Bracket the root; F is increasing for the monotone drivers in scope.
    double lo = y;
    double hi = y;
    double step = std::max(std::abs(fy), 1e-300);
    int expansions = 0;
    if (fy > 0.0) {
        do {
            hi = lo;
            lo = y - step;
            step *= 2.0;
            if (++expansions > 2000) throw NumericError("implicit step: cannot bracket root");
        } while (F(lo) > 0.0);
    } else {
        do {
            lo = hi;
            hi = y + step;
            step *= 2.0;
            if (++expansions > 2000) throw NumericError("implicit step: cannot bracket root");
        } while (F(hi) < 0.0);
    }

    for (int it = 0; it < cfg.newton_max_iter; ++it) {
        const double dF = 1.0 + h * (s * lambda * p.fprime(y) + b);
        double next = (dF > 0.0 && std::isfinite(dF)) ? y - fy / dF : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        y = next;
        fy = F(y);
        if (std::abs(fy) <= tol) return {y, std::abs(fy)};
        if (fy > 0.0) {
            hi = y;
        } else {
            lo = y;
        }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(y))) {
            return {y, std::abs(fy)};
        }
    }
    throw NumericError(fmt::format("implicit step did not converge (residual {})", std::abs(fy)));
}

/// Number of substeps for [gap_left, gap_right]. Counts depend only on the grid, the untruncated
/// intensity and the reference level, so different truncation levels share substep grids.
std::size_t substep_count(const IntensityModel& model, double gap_left, double gap_right,
                          const SolverConfig& cfg) {
    const IntensityModel raw = model.untruncated();
    double reference = std::numeric_limits<double>::infinity();
    if (cfg.substep_reference) {
        reference = *cfg.substep_reference;
    } else if (model.cap()) {
        reference = *model.cap();
    }
    auto level = [&](double gap) {
        double v = (gap == 0.0 && raw.singular()) ? std::numeric_limits<double>::infinity()
                                                  : raw.intensity_at_gap(gap);
        v = std::min(v, reference);
        if (!std::isfinite(v)) v = model.intensity_at_gap(gap);
        return v;
    };
    const double lam = std::max(level(gap_left), level(gap_right));
    const double want = std::ceil((gap_left - gap_right) * lam / cfg.substep_target);
    if (!(want >= 1.0)) return 1;
    return static_cast<std::size_t>(std::min(want, static_cast<double>(cfg.max_substeps)));
}

struct IntervalResult {
    double y;
    double residual;
    double mass;
    double peak;
};

template <class Phi>
IntervalResult integrate_interval(const BsdeProblem& p, double c, double gap_left, double gap_right,
                                  std::size_t substeps, Phi&& phi_at_gap, double zsum,
                                  const SolverConfig& cfg) {
    IntervalResult r{c, 0.0, 0.0, 0.0};
    const double width = gap_left - gap_right;
    const double h = width / static_cast<double>(substeps);
    for (std::size_t j = 0; j < substeps; ++j) {
        const double left =
            j + 1 == substeps ? gap_left : gap_right + static_cast<double>(j + 1) * h;
        const double right = j == 0 ? gap_right : gap_right + static_cast<double>(j) * h;
        const double hj = left - right;
        const double lambda = p.intensity.intensity_at_gap(left);
        const auto step = implicit_step(p, r.y, hj, lambda, phi_at_gap(left), zsum, cfg);
        r.y = step.y;
        r.residual = std::max(r.residual, step.residual);
        const double density = lambda * std::abs(p.f(r.y));
        r.mass += hj * density;
        r.peak = std::max(r.peak, density);
    }
    return r;
}

void require_bounded(const BsdeProblem& p) {
    if (p.intensity.singular()) {
        throw DomainError("the Lipschitz solver needs a bounded intensity; truncate it first");
    }
}

void finish_diagnostics(SolutionEstimate& sol) {
    auto [lo, hi] = std::minmax_element(sol.y.begin(), sol.y.end());
    sol.diagnostics.y_min = *lo;
    sol.diagnostics.y_max = *hi;
    sol.diagnostics.residual_max =
        *std::max_element(sol.node_residual.begin(), sol.node_residual.end());
}

}  // namespace

bool box_is_proven(const BsdeProblem& p) {
    return p.form == EquationForm::NonlinearPlus && p.driver.flags.zero_at_zero &&
           p.driver.flags.nondecreasing && p.driver.flags.below_identity && p.y_slope == 0.0 &&
           p.terminal.is_zero() && p.phi.nonnegative(p.horizon());
}

SolutionEstimate solve_ode_mode(const BsdeProblem& problem, const TimeGrid& grid,
                                const SolverConfig& config) {
    require_bounded(problem);
    if (!problem.phi.deterministic()) throw DomainError("ODE mode needs a deterministic phi");
    if (!problem.terminal.deterministic()) throw DomainError("ODE mode needs a deterministic terminal value");
    if (std::abs(grid.horizon() - problem.horizon()) > 1e-14 * problem.horizon()) {
        throw DomainError("grid horizon differs from the problem horizon");
    }
    const std::size_t n = grid.size();
    const double T = problem.horizon();
    SolutionEstimate sol;
    sol.grid = grid;
    sol.mode = SolveMode::OdeExact;
    sol.y.assign(n, 0.0);
    sol.z.assign(n, 0.0);
    sol.node_residual.assign(n, 0.0);
    sol.interval_mass.assign(n - 1, 0.0);
    sol.interval_peak.assign(n - 1, 0.0);
    sol.y_standard_error.assign(n, 0.0);
    sol.y[n - 1] = problem.terminal({});

    auto phi = [&](double gap) { return problem.phi.at_gap(gap, T); };
    for (std::size_t i = n - 1; i-- > 0;) {
        const std::size_t k = substep_count(problem.intensity, grid.gaps[i], grid.gaps[i + 1], config);
        const auto r = integrate_interval(problem, sol.y[i + 1], grid.gaps[i], grid.gaps[i + 1], k,
                                          phi, 0.0, config);
        sol.y[i] = r.y;
        sol.node_residual[i] = r.residual;
        sol.interval_mass[i] = r.mass;
        sol.interval_peak[i] = r.peak;
    }
    finish_diagnostics(sol);
    return sol;
}

SolutionEstimate solve_regression_mc(const BsdeProblem& problem, const PathBundle& bundle,
                                     const SolverConfig& config) {
    require_bounded(problem);
    const TimeGrid& grid = bundle.grid();
    if (std::abs(grid.horizon() - problem.horizon()) > 1e-14 * problem.horizon()) {
        throw DomainError("grid horizon differs from the problem horizon");
    }
    const std::size_t n = grid.size();
    const std::size_t M = bundle.paths();
    const std::size_t d = bundle.dim();
    if (d + 1 > NodeRegression::kMaxColumns) throw DomainError("Brownian dimension too large");
    const double T = problem.horizon();
    const Execution exec = config.exec;

    SolutionEstimate sol;
    sol.grid = grid;
    sol.mode = SolveMode::RegressionMC;
    sol.paths = M;
    sol.dim = d;
    sol.seed = bundle.seed();
    sol.basis = config.basis;
    sol.y.assign(n * M, 0.0);
    sol.z.assign(n * M * d, 0.0);
    sol.node_residual.assign(n, 0.0);
    sol.interval_mass.assign(n - 1, 0.0);
    sol.interval_peak.assign(n - 1, 0.0);
    sol.y_standard_error.assign(n, 0.0);

    parallel_for(M, exec, [&](std::size_t m) {
        sol.y[(n - 1) * M + m] = problem.terminal(bundle.level(n - 1, m));
    });

    const bool clamp = config.clamp_to_box && box_is_proven(problem);
    const double phi_bound = problem.phi.bound();
    std::vector<double> chat(M);
    std::vector<double> residual(M);
    std::vector<double> mass(M);
    std::vector<double> peak(M);

    for (std::size_t i = n - 1; i-- > 0;) {
        const double dt = grid.dt(i);
        const double* next = sol.y.data() + (i + 1) * M;
        NodeRegression reg(bundle, i, config.basis, exec, config.cond_limit);

        const auto fit_y = reg.fit(1, [&](std::size_t m, double* out) { out[0] = next[m]; });
        parallel_for(M, exec, [&](std::size_t m) { chat[m] = reg.predict(fit_y, m, 0); });
        const auto fit_z = reg.fit(d, [&](std::size_t m, double* out) {
            const auto dw = bundle.increment(i, m);
            const double centered = next[m] - chat[m];
            for (std::size_t k = 0; k < d; ++k) out[k] = centered * dw[k] / dt;
        });

        const std::size_t substeps =
            substep_count(problem.intensity, grid.gaps[i], grid.gaps[i + 1], config);
        const double lo_box = -grid.gaps[i] * phi_bound - config.clamp_margin;
        const double hi_box = config.clamp_margin;

        parallel_for(M, exec, [&](std::size_t m) {
            double zsum = 0.0;
            double* zrow = sol.z.data() + (i * M + m) * d;
            for (std::size_t k = 0; k < d; ++k) {
                zrow[k] = reg.predict(fit_z, m, k);
                zsum += zrow[k];
            }
            const auto w = bundle.level(i, m);
            auto phi = [&](double gap) { return problem.phi(T - gap, w); };
            const auto r = integrate_interval(problem, chat[m], grid.gaps[i], grid.gaps[i + 1],
                                              substeps, phi, zsum, config);
            double y = r.y;
            if (clamp) y = std::clamp(y, lo_box, hi_box);
            sol.y[i * M + m] = y;
            residual[m] = r.residual;
            mass[m] = r.mass;
            peak[m] = r.peak;
        });

        sol.interval_mass[i] =
            deterministic_scalar_sum(M, exec, [&](std::size_t m) { return mass[m]; }) /
            static_cast<double>(M);
        sol.interval_peak[i] = *std::max_element(peak.begin(), peak.end());
        sol.node_residual[i] = *std::max_element(residual.begin(), residual.end());
    }
    for (std::size_t i = 0; i < n; ++i) sol.y_standard_error[i] = sol.y_stats(i, exec).std_error;
    finish_diagnostics(sol);
    return sol;
}

SolutionEstimate solve(const BsdeProblem& problem, const TimeGrid& grid, const SolverConfig& config,
                       const PathBundle* bundle) {
    if (config.mode == SolveMode::OdeExact) return solve_ode_mode(problem, grid, config);
    if (!bundle) throw DomainError("RegressionMC mode needs a path bundle");
    if (bundle->grid().times != grid.times) throw DomainError("path bundle grid differs from grid");
    return solve_regression_mc(problem, *bundle, config);
}

SampleStats SolutionEstimate::y_stats(std::size_t i, Execution exec) const {
    const double* row = y.data() + i * paths;
    return sample_stats(paths, exec, [row](std::size_t m) { return row[m]; });
}

double SolutionEstimate::z_mean(std::size_t i, std::size_t k) const {
    return deterministic_scalar_sum(paths, Execution::Parallel,
                                    [&](std::size_t m) { return z_at(i, m, k); }) /
           static_cast<double>(paths);
}

double SolutionEstimate::lambda_f_mass() const {
    double s = 0.0;
    for (double v : interval_mass) s += v;
    return s;
}

double SolutionEstimate::lambda_f_peak() const {
    return interval_peak.empty() ? 0.0 : *std::max_element(interval_peak.begin(), interval_peak.end());
}

ComparisonReport comparison_check(const SolutionEstimate& low, const SolutionEstimate& high) {
    if (low.grid.times != high.grid.times) throw DomainError("comparison needs identical grids");
    if (low.paths != high.paths || low.mode != high.mode) {
        throw DomainError("comparison needs solutions on the same paths");
    }
    ComparisonReport rep;
    const std::size_t M = low.paths;
    for (std::size_t i = 0; i < low.nodes(); ++i) {
        double diff = 0.0;
        double band = 0.0;
        if (low.mode == SolveMode::OdeExact) {
            diff = low.y_at(i) - high.y_at(i);
        } else {
            const auto st = sample_stats(M, Execution::Parallel, [&](std::size_t m) {
                return low.y_at(i, m) - high.y_at(i, m);
            });
            diff = st.mean;
            band = 3.0 * st.std_error;
        }
        rep.max_violation = std::max(rep.max_violation, diff);
        rep.tolerance = std::max(rep.tolerance, band);
        if (diff > band) ++rep.violating_nodes;
    }
    rep.ok = rep.violating_nodes == 0;
    return rep;
}

void write_solution_csv(const SolutionEstimate& sol, std::ostream& out) {
    out << "t,Y_mean,Y_sd,Z_mean,residual\n";
    for (std::size_t i = 0; i < sol.nodes(); ++i) {
        const auto st = sol.y_stats(i);
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", sol.grid.times[i], st.mean,
                           std::sqrt(st.variance), sol.z_mean(i), sol.node_residual[i]);
    }
}

}  // namespace bsdelab
