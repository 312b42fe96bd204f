#pragma once

#include "bsdelab/coefficients.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/regression.hpp"
#include "bsdelab/time_grid.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace bsdelab {

enum class SolveMode { OdeExact, RegressionMC };

struct SolverConfig {
    SolveMode mode = SolveMode::OdeExact;
    RegressionBasis basis = RegressionBasis::polynomial(3);
    double newton_tol = 1e-12;
    int newton_max_iter = 200;
    /// Intervals are split into substeps with h·λ ≤ substep_target.
    double substep_target = 1e-2;
    /// Intensity level used to size substeps. Defaults to the problem's own cap; a truncation
    /// schedule should pass its largest level so every level shares one substep grid.
    std::optional<double> substep_reference;
    std::size_t max_substeps = 200000;
    /// Clamp MC values to [−(T−t)‖φ‖∞ − margin, margin] when the problem provably stays there.
    bool clamp_to_box = true;
    double clamp_margin = 1e-3;
    double cond_limit = 1e12;
    Execution exec = Execution::Parallel;
};

struct SolverDiagnostics {
    double residual_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;
};

/// Y and Z on a grid. Values are stored node-major: y[i·paths + m], z[(i·paths + m)·dim + k].
/// OdeExact solutions have paths = 1 and Z ≡ 0.
struct SolutionEstimate {
    TimeGrid grid;
    SolveMode mode = SolveMode::OdeExact;
    std::size_t paths = 1;
    std::size_t dim = 1;
    std::uint64_t seed = 0;
    RegressionBasis basis;
    std::vector<double> y;
    std::vector<double> z;
    std::vector<double> node_residual;   // max implicit-equation residual per node
    std::vector<double> interval_mass;   // path mean of ∫ λ|f(Y)| over each interval
    std::vector<double> interval_peak;   // max of λ|f(Y)| over each interval and all paths
    SolverDiagnostics diagnostics;
    std::vector<double> y_standard_error;  // per node; zero in OdeExact mode

    std::size_t nodes() const noexcept { return grid.size(); }
    double y_at(std::size_t i, std::size_t m = 0) const noexcept { return y[i * paths + m]; }
    double z_at(std::size_t i, std::size_t m, std::size_t k) const noexcept {
        return z[(i * paths + m) * dim + k];
    }
    SampleStats y_stats(std::size_t i, Execution exec = Execution::Parallel) const;
    double y_mean(std::size_t i) const { return y_stats(i).mean; }
    double z_mean(std::size_t i, std::size_t k = 0) const;
    /// Σ over intervals of interval_mass.
    double lambda_f_mass() const;
    double lambda_f_peak() const;
};

/// Backward implicit Euler with Z ≡ 0. Requires a bounded intensity and deterministic φ.
SolutionEstimate solve_ode_mode(const BsdeProblem& problem, const TimeGrid& grid,
                                const SolverConfig& config = {});

/// Least-squares Monte Carlo backward induction on the bundle's grid.
SolutionEstimate solve_regression_mc(const BsdeProblem& problem, const PathBundle& bundle,
                                     const SolverConfig& config = {});

/// Dispatches on config.mode; `bundle` is required in RegressionMC mode.
SolutionEstimate solve(const BsdeProblem& problem, const TimeGrid& grid, const SolverConfig& config,
                       const PathBundle* bundle = nullptr);

/// True when the a-priori box −(T−t)‖φ‖∞ ≤ Y ≤ 0 is proven for the problem.
bool box_is_proven(const BsdeProblem& problem);

struct ComparisonReport {
    double max_violation = 0.0;  // max over nodes of (Y_low − Y_high)⁺, path means in MC mode
    double tolerance = 0.0;      // 0 in OdeExact mode, largest 3-SE band otherwise
    std::size_t violating_nodes = 0;
    bool ok = true;
};

/// Checks sol_low ≤ sol_high node by node. Throws DomainError on mismatched grids or paths.
ComparisonReport comparison_check(const SolutionEstimate& low, const SolutionEstimate& high);

/// CSV with columns t, Y_mean, Y_sd, Z_mean, residual.
void write_solution_csv(const SolutionEstimate& sol, std::ostream& out);

}  // namespace bsdelab
