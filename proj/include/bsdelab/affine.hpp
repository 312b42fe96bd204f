#pragma once

#include "bsdelab/coefficients.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/regression.hpp"
#include "bsdelab/time_grid.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bsdelab {

enum class AffineProvenance {
    RepresentationFormula,
    FundamentalFamily,
    StochasticFundamental,
    ParticularSolution,
    OdeFamily,
    Superposition
};

std::string to_string(AffineProvenance p);

/// Solution of an affine equation on a grid, node-major like SolutionEstimate.
///
/// Deterministic solutions (paths = 1) also carry `exact`, the closed form or quadrature
/// evaluator Y(T − gap), so residuals can be integrated instead of differenced.
struct AffineSolution {
    TimeGrid grid;
    AffineProvenance provenance = AffineProvenance::RepresentationFormula;
    double y0 = 0.0;
    std::size_t paths = 1;
    std::size_t dim = 1;
    std::vector<double> y;
    std::vector<double> z;
    std::function<double(double)> exact;
    /// ‖φ‖∞(T − t) − |Y(t)| per node (path maximum of |Y|); empty when not applicable.
    std::vector<double> bound_check;
    std::optional<double> integrability;

    bool deterministic() const noexcept { return paths == 1 && static_cast<bool>(exact); }
    std::size_t nodes() const noexcept { return grid.size(); }
    double y_at(std::size_t i, std::size_t m = 0) const noexcept { return y[i * paths + m]; }
    double z_at(std::size_t i, std::size_t m, std::size_t k) const noexcept {
        return z[(i * paths + m) * dim + k];
    }
    SampleStats y_stats(std::size_t i) const;

    /// Copy with Y shifted by `delta` everywhere (including the evaluator).
    AffineSolution shifted(double delta) const;
};

/// Y(t) = −∫ₜᵀ e^{−(Λ(s)−Λ(t)) − b(s−t)} φ(s) ds for the +λY equation with A = 0.
///
/// Deterministic φ uses quadrature (u = Λ(s) near T). Markovian φ needs `paths`; the inner
/// integral is accumulated pathwise on the grid and regressed on `basis`. Throws NoSolution when
/// A is not identically zero.
AffineSolution solve_affine_plus(const BsdeProblem& problem, const TimeGrid& grid,
                                 const PathBundle* paths = nullptr,
                                 const RegressionBasis& basis = RegressionBasis::polynomial(3),
                                 Execution exec = Execution::Parallel);

/// Y₀e^{−Λ(t)+bt}, Z = 0; with β and paths, Y₀e^{−Λ+bt} + e^{−Λ+bt}∫₀ᵗ β(dW + σ dt) per path
/// and Z = e^{−Λ+bt}β. Solves the −λY equation with y_slope b and z_slope σ.
AffineSolution fundamental_family(const IntensityModel& model, double y0, const TimeGrid& grid,
                                  const std::vector<double>* beta = nullptr,
                                  const PathBundle* paths = nullptr, double y_slope = 0.0,
                                  double z_slope = 0.0);

/// Y(t) = −∫ₜᵀ e^{Λ(s)−Λ(t)} φ(s) ds for the −λY equation. Throws NoParticularSolution when the
/// weighted integral diverges.
AffineSolution solve_affine_minus_particular(const IntensityModel& model,
                                             const CoefficientProcess& phi, const TimeGrid& grid);

/// The weighted integral above at a single gap T − t (exposed for tests).
double particular_integral(const IntensityModel& model, const CoefficientProcess& phi, double gap);

struct OdeClassification {
    enum class Case { ConvergesTo, Diverges };
    Case kind = Case::Diverges;
    double limit = 0.0;
    std::vector<std::pair<double, double>> limit_estimates;  // (t, m(t)) approaching T
    double tolerance = 0.0;
};

/// m(t) = ∫₀ᵗ e^{−(Λ(t)−Λ(s))} φ(s) ds.
double ode_m(const IntensityModel& model, const CoefficientProcess& phi, double gap);

/// Evaluates m at T − T·10⁻ᵏ, k = 1..12, and declares ConvergesTo when the last three agree
/// within `tolerance`.
OdeClassification classify_ode(const IntensityModel& model, const CoefficientProcess& phi,
                               double tolerance = 1e-8);

/// Y = e^{−Λ}(Y₀ + ∫₀ᵗ e^{Λ}φ) with terminal value C. Throws DomainError in the Diverges case.
AffineSolution ode_family_member(const IntensityModel& model, const CoefficientProcess& phi,
                                 double y0, const TimeGrid& grid, double tolerance = 1e-8);

/// Sum of two solutions on the same grid and paths (the equation being affine).
AffineSolution superpose(const AffineSolution& a, const AffineSolution& b);

/// CSV with columns t, Y_mean, Y_sd, Z_mean, bound_check.
void write_affine_csv(const AffineSolution& sol, std::ostream& out);

}  // namespace bsdelab
