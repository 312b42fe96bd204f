#pragma once

#include "bsdelab/coefficients.hpp"
#include "bsdelab/lipschitz_solver.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/time_grid.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace bsdelab {

/// f clipped below at L = −T‖φ‖∞: f̃(x) = f(max(x, L)). Globally Lipschitz on x ≤ 0 with
/// constant sup_{[L,0]} f′.
struct TruncatedDriver {
    DriverSpec base;
    double lower_clip = 0.0;
    double lipschitz = 0.0;

    double operator()(double x) const { return base.f(x < lower_clip ? lower_clip : x); }
    double derivative(double x) const { return x < lower_clip ? 0.0 : base.fprime(x); }

    /// DriverSpec evaluating f̃. The flags are those of the base driver: they describe f̃ on
    /// [L, 0], which is the only range the truncated solutions visit.
    DriverSpec as_driver() const;
};

/// Throws DomainError when the driver lacks the theorem flags or the inputs are not finite.
TruncatedDriver truncate(const DriverSpec& driver, double phi_bound, double horizon);

struct SchemeConfig {
    SolverConfig solver;
    /// Converged when the last Cauchy gap is below tol.
    double tol = 1e-5;
    /// Slack for the monotonicity and box checks in ODE mode.
    double ode_slack = 1e-10;
    /// Added to |Y(0)| + T‖φ‖∞ for the driver-mass bound.
    double mass_margin = 0.05;
};

enum class SchemeStatus { Converged, NotConverged };

std::string to_string(SchemeStatus s);

/// Last iterate plus the envelope [−(T−t)‖φ‖∞, 0]. Nodes with t > t₀ are `envelope` nodes where
/// only the bracket is asserted.
struct SchemeFinal {
    SolutionEstimate solution;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<bool> envelope;
};

struct BmoEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    double t = 0.0;  // node of the maximum
    double x = 0.0;  // standardized evaluation point of the maximum
};

struct SchemeReport {
    std::vector<double> n_schedule;
    std::vector<SolutionEstimate> solutions;
    double t0 = 0.0;
    std::vector<double> cauchy_gaps;          // one per consecutive pair
    std::vector<double> monotone_violations;  // one per consecutive pair
    double monotone_violation = 0.0;
    double monotone_tolerance = 0.0;
    double box_violation = 0.0;  // max distance outside [−(T−t)‖φ‖∞, 0]
    double box_slack = 0.0;
    bool bounds_ok = true;
    double terminal_continuity = 0.0;  // max over nodes t ≥ t₀ of |Y(t)| − (T−t)‖φ‖∞
    std::vector<double> lambda_f_integrals;
    double lambda_f_bound = 0.0;
    bool lambda_f_ok = true;
    std::vector<BmoEstimate> bmo;  // per level; zero in ODE mode
    double bmo_estimate = 0.0;
    double bmo_standard_error = 0.0;
    double bmo_bound = 0.0;  // 2T²‖φ‖∞²
    SchemeFinal final;
    SchemeStatus status = SchemeStatus::NotConverged;

    bool cauchy_decreasing() const;
};

/// Solves the truncated problems λ ∧ n, f̃ for every n in `schedule` and checks monotonicity,
/// Cauchy decay on [0, t0], the a-priori box and the driver-mass bound. `paths` is required in
/// RegressionMC mode. Throws NoSolution when A ≢ 0 and DomainError for a bad schedule or t0.
SchemeReport run_scheme(const BsdeProblem& problem, const TimeGrid& grid,
                        const std::vector<double>& schedule, double t0, const SchemeConfig& config,
                        const PathBundle* paths = nullptr);

/// Doubling schedule 2, 4, ..., 256.
std::vector<double> default_schedule();

/// Max over nodes and evaluation points x ∈ [−3, 3] of the regression estimate of
/// E[Σ_{j≥i} ‖Z_j‖² Δ_j | W_{t_i}]. Zero in ODE mode.
BmoEstimate estimate_bmo(const SolutionEstimate& sol, const PathBundle* bundle,
                         Execution exec = Execution::Parallel);

/// Path mean of ∫₀ᵀ λⁿ|f(Yⁿ)| dt as accumulated by the solver's substeps.
double estimate_lambda_f_integral(const SolutionEstimate& sol);

struct UniquenessProbe {
    double distance = 0.0;  // sup over t ≤ t0 of |Y_a − Y_b| (path means)
    double tolerance = 0.0;
    bool ok = false;
};

/// Runs two schedules and compares their final iterates on [0, t0].
UniquenessProbe uniqueness_probe(const BsdeProblem& problem, const TimeGrid& grid,
                                 const std::vector<double>& schedule_a,
                                 const std::vector<double>& schedule_b, double t0,
                                 const SchemeConfig& config, const PathBundle* paths = nullptr);

/// CSV with columns n, Y0, cauchy_gap, monotone_violation, lambda_f_integral, bmo_estimate.
void write_scheme_csv(const SchemeReport& report, std::ostream& out);

/// CSV of the final estimate: t, Y_mean, Y_sd, Z_mean, lower, upper, region.
void write_scheme_final_csv(const SchemeReport& report, std::ostream& out);

/// Stable-ordered "key = value" summary.
void write_scheme_summary(const SchemeReport& report, std::ostream& out);

}  // namespace bsdelab
