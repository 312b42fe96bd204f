#include "bsdelab/errors.hpp"
#include "bsdelab/lipschitz_solver.hpp"

#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace bsdelab;

namespace {

const IntensityModel kPg = IntensityModel::power_gap(1.0, 1.0);

BsdeProblem problem(EquationForm form, CoefficientProcess phi, IntensityModel m, DriverSpec d = DriverSpec::identity()) {
    BsdeProblem p;
    p.intensity = std::move(m);
    p.phi = std::move(phi);
    p.form = form;
    p.driver = std::move(d);
    return p;
}

CoefficientProcess sine_markov() {
    return CoefficientProcess::markovian(
        [](double, std::span<const double> w) { return 0.5 * (1 + std::sin(w[0])); }, 1.0);
}

// Independent oracle: dopri5 with tight tolerances on Y' = 1 + min(1/(1−t), 10)·Y, Y(1) = 0,
// integrated backward and observed at the grid nodes. The kink at t = 0.9 is a node of the
// integration so the stepper never straddles it.
std::vector<double> odeint_reference(const TimeGrid& grid) {
    namespace ode = boost::numeric::odeint;
    using State = std::vector<double>;
    auto rhs = [](const State& y, State& dy, double t) {
        const double lam = std::min(1.0 / (1.0 - t), 10.0);
        dy[0] = 1.0 + lam * y[0];
    };
    std::vector<double> out(grid.size(), 0.0);
    State y = {0.0};
    auto stepper = ode::make_controlled(1e-14, 1e-14, ode::runge_kutta_dopri5<State>());
    for (std::size_t i = grid.size() - 1; i-- > 0;) {
        double a = grid.times[i + 1];
        const double b = grid.times[i];
        if (a > 0.9 && b < 0.9) {
            ode::integrate_adaptive(stepper, rhs, y, a, 0.9, -1e-4);
            a = 0.9;
        }
        ode::integrate_adaptive(stepper, rhs, y, a, b, -1e-4);
        out[i] = y[0];
    }
    return out;
}

double max_error(const SolutionEstimate& sol, const std::vector<double>& ref) {
    double e = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) e = std::max(e, std::abs(sol.y_at(i) - ref[i]));
    return e;
}

}  // namespace

TEST(OdeMode, ZeroData) {
    const auto g = make_grid(kPg, 50, GridScheme::uniform());
    const auto sol = solve_ode_mode(problem(EquationForm::NonlinearPlus, CoefficientProcess::constant(0.0),
                                            kPg.truncated(10), DriverSpec::exp_utility(1)), g);
    for (double v : sol.y) EXPECT_EQ(v, 0.0);
}

TEST(OdeMode, PureQuadratureWithoutIntensity) {
    const auto m = IntensityModel::bounded(0.0, 1.0);
    const auto g = make_grid(m, 33, GridScheme::uniform());
    const auto sol = solve_ode_mode(problem(EquationForm::PlusLambdaY, CoefficientProcess::constant(1.0), m), g);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(sol.y_at(i), -(1.0 - g.times[i]), 1e-10);
}

TEST(OdeMode, MatchesAdaptiveOracle) {
    const auto g = make_grid(kPg, 41, GridScheme::uniform());
    const auto ref = odeint_reference(g);
    SolverConfig cfg;
    cfg.substep_target = 1e-5;
    const auto sol = solve_ode_mode(problem(EquationForm::PlusLambdaY, CoefficientProcess::constant(1.0),
                                            kPg.truncated(10.0)), g, cfg);
    EXPECT_LT(max_error(sol, ref), 1e-6);
    EXPECT_LT(sol.diagnostics.residual_max, 1e-12);
}

TEST(OdeMode, FirstOrderConvergence) {
    SolverConfig cfg;
    cfg.substep_target = 1e9;  // one implicit step per interval
    double prev = 0.0;
    for (std::size_t n : {21, 41, 81, 161}) {
        const auto g = make_grid(kPg, n, GridScheme::uniform());
        const auto sol = solve_ode_mode(problem(EquationForm::PlusLambdaY, CoefficientProcess::constant(1.0),
                                                kPg.truncated(10.0)), g, cfg);
        const double err = max_error(sol, odeint_reference(g));
        if (prev > 0.0) {
            EXPECT_GE(prev / err, 1.8) << n;
        }
        prev = err;
    }
}

TEST(OdeMode, RejectsSingularAndStochasticData) {
    const auto g = make_grid(kPg, 10, GridScheme::uniform());
    EXPECT_THROW(solve_ode_mode(problem(EquationForm::PlusLambdaY, CoefficientProcess::constant(1.0), kPg), g),
                 DomainError);
    EXPECT_THROW(solve_ode_mode(problem(EquationForm::PlusLambdaY, sine_markov(), kPg.truncated(5)), g), DomainError);
}

TEST(RegressionMc, ZeroData) {
    const auto g = make_grid(kPg, 11, GridScheme::uniform());
    const auto b = simulate_paths(g, 1, 5000, 1);
    SolverConfig cfg;
    cfg.mode = SolveMode::RegressionMC;
    const auto sol = solve_regression_mc(problem(EquationForm::NonlinearPlus, CoefficientProcess::constant(0.0),
                                                 kPg.truncated(10), DriverSpec::exp_utility(1)), b, cfg);
    for (double v : sol.y) EXPECT_EQ(v, 0.0);
    for (double v : sol.z) EXPECT_EQ(v, 0.0);
}

TEST(RegressionMc, DeterministicPhiAgreesWithOdeMode) {
    const auto g = make_grid(kPg, 21, GridScheme::uniform());
    const auto p = problem(EquationForm::PlusLambdaY, CoefficientProcess::constant(1.0), kPg.truncated(10.0));
    const auto b = simulate_paths(g, 1, 50000, 6);
    SolverConfig cfg;
    cfg.mode = SolveMode::RegressionMC;
    cfg.basis = RegressionBasis::polynomial(2);
    const auto mc = solve_regression_mc(p, b, cfg);
    const auto ode = solve_ode_mode(p, g, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(mc.y_mean(i), ode.y_at(i), 3e-2) << i;
}

TEST(RegressionMc, MarkovianStableAcrossSeedsAndInsideBox) {
    const auto g = make_grid(kPg, 21, GridScheme::uniform());
    const auto p = problem(EquationForm::NonlinearPlus, sine_markov(), kPg.truncated(5.0), DriverSpec::exp_utility(1));
    SolverConfig cfg;
    cfg.mode = SolveMode::RegressionMC;
    std::vector<double> y0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto b = simulate_paths(g, 1, 100000, seed);
        const auto sol = solve_regression_mc(p, b, cfg);
        y0.push_back(sol.y_mean(0));
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_LE(sol.diagnostics.y_max, 1e-3);
            for (std::size_t m = 0; m < sol.paths; m += 101) {
                EXPECT_GE(sol.y_at(i, m), -g.gaps[i] - 1e-3);
                EXPECT_LE(sol.y_at(i, m), 1e-3);
            }
        }
    }
    EXPECT_NEAR(y0[0], y0[1], 1e-2);
    EXPECT_NEAR(y0[0], y0[2], 1e-2);
}

TEST(RegressionMc, SerialAndParallelAreBitIdentical) {
    const auto g = make_grid(kPg, 11, GridScheme::uniform());
    const auto p = problem(EquationForm::NonlinearPlus, sine_markov(), kPg.truncated(5.0), DriverSpec::exp_utility(1));
    const auto b = simulate_paths(g, 1, 9000, 4);
    SolverConfig cfg;
    cfg.mode = SolveMode::RegressionMC;
    cfg.exec = Execution::Serial;
    const auto serial = solve_regression_mc(p, b, cfg);
    const int saved = worker_count();
    for (int w : {1, 4, 8}) {
        set_worker_count(w);
        cfg.exec = Execution::Parallel;
        const auto par = solve_regression_mc(p, b, cfg);
        EXPECT_EQ(par.y, serial.y) << w;
        EXPECT_EQ(par.z, serial.z) << w;
    }
    set_worker_count(saved);
}

TEST(Comparison, IdenticalAndOrderedTruncations) {
    const auto g = make_grid(kPg, 61, GridScheme::lambda_equidistributed(5.0));
    const auto base = problem(EquationForm::NonlinearPlus, CoefficientProcess::constant(1.0), kPg, DriverSpec::exp_utility(1));
    SolverConfig cfg;
    cfg.substep_reference = 10.0;
    const auto low = solve_ode_mode(base.truncated(5), g, cfg);
    const auto high = solve_ode_mode(base.truncated(10), g, cfg);
    const auto same = comparison_check(low, low);
    EXPECT_EQ(same.max_violation, 0.0);
    const auto r = comparison_check(low, high);
    EXPECT_EQ(r.violating_nodes, 0u);
    EXPECT_EQ(r.max_violation, 0.0);
    EXPECT_TRUE(r.ok);
}

TEST(Comparison, MonteCarloWithinStandardErrors) {
    const auto g = make_grid(kPg, 21, GridScheme::lambda_equidistributed(4.0));
    const auto base = problem(EquationForm::NonlinearPlus, sine_markov(), kPg, DriverSpec::exp_utility(1));
    const auto b = simulate_paths(g, 1, 100000, 2);
    SolverConfig cfg;
    cfg.mode = SolveMode::RegressionMC;
    cfg.substep_reference = 10.0;
    const auto low = solve_regression_mc(base.truncated(5), b, cfg);
    const auto high = solve_regression_mc(base.truncated(10), b, cfg);
    const auto r = comparison_check(low, high);
    EXPECT_TRUE(r.ok) << r.max_violation << " tol " << r.tolerance;
    EXPECT_LE(r.max_violation, r.tolerance);
}
