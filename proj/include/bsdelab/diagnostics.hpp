#pragma once

#include "bsdelab/affine.hpp"
#include "bsdelab/coefficients.hpp"
#include "bsdelab/lipschitz_solver.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/time_grid.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bsdelab {

struct ResidualReport {
    /// Max over nodes t_i ≤ t_cap of |Y(t_i) − Y(0) − ∫₀^{t_i} g ds − ∫₀^{t_i} Z dW|; the path mean
    /// of the per-path maximum for stochastic candidates.
    double max_residual = 0.0;
    double worst_path_residual = 0.0;
    double terminal_gap = 0.0;  // |Y_T − A|, path maximum
    /// ∫₀^{t_cap} |g| dt (path mean), a finiteness proxy for the driver's integrability.
    double integrability_estimate = 0.0;
    std::size_t worst_node = 0;
};

/// Deterministic candidates with an evaluator are checked with adaptive quadrature on every
/// interval; otherwise nodal values are used (trapezoid in dt, left point with Z and dW).
/// `paths` is needed for stochastic candidates, Markovian φ and random terminal values.
ResidualReport residual_check(const AffineSolution& candidate, const BsdeProblem& problem,
                              const PathBundle* paths = nullptr);
ResidualReport residual_check(const SolutionEstimate& candidate, const BsdeProblem& problem,
                              const PathBundle* paths = nullptr);

/// max over stopping times of E|Y_τ|: grid nodes, plus the first times Y reaches the levels
/// k·level_unit (k = ±1..±8) when the candidate is stochastic and level_unit > 0. A lower bound
/// of the class-(D) norm.
double class_d_norm(const SolutionEstimate& sol, double level_unit = 0.0);
double class_d_norm(const AffineSolution& sol, double level_unit = 0.0);

struct GrowthPoint {
    double n = 0.0;
    double mass = 0.0;  // ∫₀ᵀ λⁿ|f(Yⁿ)| dt
    double peak = 0.0;  // max λⁿ|f(Yⁿ)|
    double y0 = 0.0;
};

struct NonExistenceEvidence {
    std::vector<GrowthPoint> growth_series;
    /// "mass" when Yⁿ is pushed away from the terminal value (−λY forms), "peak" when it is
    /// pulled toward zero and the mass stays bounded (+λ forms).
    std::string statistic;
    double ratio = 0.0;  // last / first statistic
    double ratio_threshold = 10.0;
    bool monotone_divergent = false;

    double value(const GrowthPoint& g) const { return statistic == "mass" ? g.mass : g.peak; }
};

struct NonUniquenessEvidence {
    std::vector<AffineSolution> members;
    std::vector<std::string> labels;
    std::vector<ResidualReport> residuals;
    /// Sup distance for each pair (a, b), a < b, in lexicographic order.
    std::vector<double> pairwise_sup_distance;
    double tolerance = 0.0;
};

struct PathologyCertificate {
    enum class Kind { NonExistence, NonUniqueness };
    Kind kind = Kind::NonExistence;
    std::string scenario_id;
    std::optional<NonExistenceEvidence> nonexistence;
    std::optional<NonUniquenessEvidence> nonuniqueness;
    std::vector<std::string> notes;
};

/// Solves the truncations λ ∧ n (ODE mode) of a problem with constant terminal value a ≠ 0 and
/// records how the driver mass or peak grows with n. Throws DomainError for a = 0, a random
/// terminal value, a non-singular intensity, a non-deterministic φ, or a NonlinearPlus driver
/// that is not declared nondecreasing.
PathologyCertificate certify_nonexistence(const BsdeProblem& problem, const TimeGrid& grid,
                                          const std::vector<double>& schedule,
                                          const SolverConfig& config = {},
                                          std::string scenario_id = "nonexistence",
                                          double ratio_threshold = 10.0);

struct NonUniquenessScenario {
    enum class Kind { FundamentalMinus, OdeFamily, EkRed };
    Kind kind = Kind::FundamentalMinus;
    IntensityModel model = IntensityModel::power_gap(1.0, 1.0);
    std::vector<double> y0_list;
    CoefficientProcess phi = CoefficientProcess::constant(0.0);
    double c = 0.0;
    double r = 0.0;
    double sigma = 0.0;

    static NonUniquenessScenario fundamental_minus(IntensityModel model, std::vector<double> y0_list);
    static NonUniquenessScenario ode_family(IntensityModel model, CoefficientProcess phi, double c,
                                            std::vector<double> y0_list);
    /// dY = (−λY − rY + σZ) dt + Z dW with λ = ExpGap(γ) on [0, T], Y_T = 0.
    static NonUniquenessScenario ek_red(double r, double sigma, double gamma, double horizon,
                                        std::vector<double> y0_list);

    /// The equation every member must solve.
    BsdeProblem problem() const;
};

/// Builds the family members, verifies each with residual_check and reports pairwise sup
/// distances. Throws CertificateFailed when a member's residual or terminal gap exceeds `tol`, or
/// two members are closer than 10·tol; DomainError for an inconsistent scenario.
PathologyCertificate certify_nonuniqueness(const NonUniquenessScenario& scenario, const TimeGrid& grid,
                                           double tol = 1e-8, std::string scenario_id = "nonuniqueness");

/// Structured text document.
void write_certificate(const PathologyCertificate& cert, std::ostream& out);

/// Growth series (n, mass, peak, Y0) or member table (member, label, Y0, max_residual,
/// terminal_gap, integrability).
void write_certificate_csv(const PathologyCertificate& cert, std::ostream& out);

}  // namespace bsdelab
