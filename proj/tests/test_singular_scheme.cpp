#include "bsdelab/errors.hpp"
#include "bsdelab/singular_scheme.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace bsdelab;

namespace {

const IntensityModel kPg = IntensityModel::power_gap(1.0, 1.0);

BsdeProblem theorem_problem(DriverSpec d, CoefficientProcess phi = CoefficientProcess::constant(1.0)) {
    BsdeProblem p;
    p.intensity = kPg;
    p.phi = std::move(phi);
    p.form = EquationForm::NonlinearPlus;
    p.driver = std::move(d);
    return p;
}

TimeGrid grid(double lambda_max = 12.0, std::size_t n = 400) {
    return make_grid(kPg, n, GridScheme::lambda_equidistributed(lambda_max));
}

// Exact solution of Y' = 1 + min(1/(1−t), n)·Y, Y(1) = 0, as a function of the gap g = 1 − t.
double truncated_identity(double n, double g) {
    if (g <= 1.0 / n) return -(1.0 - std::exp(-n * g)) / n;
    return -g / 2 + (std::exp(-1.0) - 0.5) / (n * n * g);
}

}  // namespace

TEST(Truncate, Examples) {
    const auto id = truncate(DriverSpec::identity(), 1.0, 1.0);
    EXPECT_EQ(id.lower_clip, -1.0);
    EXPECT_EQ(id(-2.0), -1.0);
    EXPECT_EQ(id(-0.5), -0.5);
    EXPECT_NEAR(id.lipschitz, 1.0, 1e-12);

    const auto ex = truncate(DriverSpec::exp_utility(1.0), 1.0, 1.0);
    EXPECT_NEAR(ex(-2.0), 1.0 - std::exp(1.0), 1e-12);
    EXPECT_NEAR(ex.lipschitz, std::exp(1.0), 1e-9);

    const auto zero = truncate(DriverSpec::exp_utility(2.0), 0.0, 1.0);
    EXPECT_EQ(zero.lower_clip, 0.0);
    for (double x : {-5.0, -1.0, -1e-9, 0.0}) EXPECT_EQ(zero(x), 0.0);
    EXPECT_THROW(truncate(DriverSpec::neg_identity(), 1.0, 1.0), DomainError);
}

TEST(Scheme, ZeroPhiGivesZeroAtEveryLevel) {
    const auto g = grid(6.0, 100);
    const auto r = run_scheme(theorem_problem(DriverSpec::exp_utility(1), CoefficientProcess::constant(0.0)), g,
                              default_schedule(), g.t_cap(), SchemeConfig{});
    for (const auto& s : r.solutions) {
        for (double v : s.y) EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(r.status, SchemeStatus::Converged);
}

TEST(Scheme, ExpUtilityMonotoneDecayingAndBoxed) {
    const auto g = grid();
    const auto r = run_scheme(theorem_problem(DriverSpec::exp_utility(1)), g, default_schedule(), 0.75, SchemeConfig{});
    EXPECT_EQ(r.monotone_violation, 0.0);
    EXPECT_TRUE(r.cauchy_decreasing());
    for (std::size_t k = 1; k < r.cauchy_gaps.size(); ++k) EXPECT_LT(r.cauchy_gaps[k], r.cauchy_gaps[k - 1]);
    EXPECT_EQ(r.box_violation, 0.0);
    EXPECT_TRUE(r.bounds_ok);
    for (const auto& s : r.solutions) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_LE(s.y_at(i), 1e-10);
            EXPECT_GE(s.y_at(i), -g.gaps[i] - 1e-10);
        }
    }
    // Final report marks the region beyond t0 as envelope-only.
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(r.final.envelope[i], g.times[i] > 0.75);
}

TEST(Scheme, IdentityDriverMatchesTruncatedOdeOnDefaultGrid) {
    const auto g = grid();
    const auto r = run_scheme(theorem_problem(DriverSpec::identity()), g, {16, 64, 256}, g.t_cap(), SchemeConfig{});
    const auto& y = r.final.solution;
    for (std::size_t i = 0; i <= g.cap_index; ++i) {
        EXPECT_NEAR(y.y_at(i), truncated_identity(256, g.gaps[i]), 2e-5) << g.gaps[i];
    }
}

TEST(Scheme, IdentityDriverMatchesAffineClosedFormAwayFromHorizon) {
    const auto g = grid(3.0);
    const auto r = run_scheme(theorem_problem(DriverSpec::identity()), g, default_schedule(), g.t_cap(), SchemeConfig{});
    double err = 0.0;
    for (std::size_t i = 0; i <= g.cap_index; ++i) {
        err = std::max(err, std::abs(r.final.solution.y_at(i) + g.gaps[i] / 2));
    }
    EXPECT_LT(err, 1e-4);
}

TEST(Scheme, DriverMassStaysBelowBound) {
    const auto g = grid();
    const auto id = run_scheme(theorem_problem(DriverSpec::identity()), g, {16, 64, 256}, 0.25, SchemeConfig{});
    ASSERT_EQ(id.lambda_f_integrals.size(), 3u);
    EXPECT_LT(id.lambda_f_integrals[0], id.lambda_f_integrals[1]);
    EXPECT_LT(id.lambda_f_integrals[1], id.lambda_f_integrals[2]);
    EXPECT_NEAR(id.lambda_f_bound, 0.5 + 1.0 + 0.05, 1e-3);
    for (double v : id.lambda_f_integrals) EXPECT_LE(v, id.lambda_f_bound);
    EXPECT_TRUE(id.lambda_f_ok);

    const auto ex = run_scheme(theorem_problem(DriverSpec::exp_utility(1)), g, default_schedule(), 0.25, SchemeConfig{});
    EXPECT_TRUE(std::isfinite(ex.lambda_f_integrals.back()));
    EXPECT_LE(ex.lambda_f_integrals.back(), ex.lambda_f_bound);
    EXPECT_EQ(estimate_lambda_f_integral(ex.solutions.back()), ex.lambda_f_integrals.back());
}

TEST(Scheme, TerminalContinuityAndUniquenessProbe) {
    const auto g = grid();
    const auto p = theorem_problem(DriverSpec::exp_utility(1));
    const auto r = run_scheme(p, g, default_schedule(), 0.25, SchemeConfig{});
    EXPECT_LE(r.terminal_continuity, 1e-10);
    EXPECT_EQ(r.status, SchemeStatus::Converged);
    EXPECT_LT(r.cauchy_gaps.back(), 1e-5);
    const auto probe = uniqueness_probe(p, g, default_schedule(), {3, 9, 27, 81, 243}, 0.25, SchemeConfig{});
    EXPECT_TRUE(probe.ok);
    EXPECT_LT(probe.distance, 2e-5);
}

TEST(Scheme, NotConvergedIsAReportState) {
    const auto g = grid();
    const auto r = run_scheme(theorem_problem(DriverSpec::exp_utility(1)), g, {2, 4}, 0.25, SchemeConfig{});
    EXPECT_EQ(r.status, SchemeStatus::NotConverged);
    EXPECT_EQ(to_string(r.status), "NotConverged");
}

TEST(Scheme, Guards) {
    const auto g = grid(6.0, 50);
    auto p = theorem_problem(DriverSpec::exp_utility(1));
    EXPECT_THROW(run_scheme(p, g, {4, 2}, 0.25, SchemeConfig{}), DomainError);
    EXPECT_THROW(run_scheme(p, g, {}, 0.25, SchemeConfig{}), DomainError);
    EXPECT_THROW(run_scheme(p, g, {2, 4}, 0.9999, SchemeConfig{}), DomainError);
    SchemeConfig mc;
    mc.solver.mode = SolveMode::RegressionMC;
    EXPECT_THROW(run_scheme(p, g, {2, 4}, 0.25, mc), DomainError);
    p.terminal = TerminalValue::constant(1.0);
    EXPECT_THROW(run_scheme(p, g, {2, 4}, 0.25, SchemeConfig{}), NoSolution);
    p.terminal = TerminalValue::zero();
    p.form = EquationForm::PlusLambdaY;
    EXPECT_THROW(run_scheme(p, g, {2, 4}, 0.25, SchemeConfig{}), DomainError);
}

TEST(Bmo, ZeroInOdeModeAndForZeroPhi) {
    const auto g = grid(5.0, 41);
    const auto r = run_scheme(theorem_problem(DriverSpec::exp_utility(1)), g, {4, 8}, 0.25, SchemeConfig{});
    EXPECT_EQ(r.bmo_estimate, 0.0);
    EXPECT_EQ(estimate_bmo(r.solutions.back(), nullptr).value, 0.0);

    const auto b = simulate_paths(g, 1, 20000, 3);
    SchemeConfig mc;
    mc.solver.mode = SolveMode::RegressionMC;
    const auto z = run_scheme(theorem_problem(DriverSpec::exp_utility(1), CoefficientProcess::constant(0.0)), g,
                              {4, 8}, 0.25, mc, &b);
    EXPECT_LT(z.bmo_estimate, 1e-6);
}

TEST(Bmo, MarkovianScenarioBelowProofConstant) {
    const auto g = grid(5.0, 41);
    const auto b = simulate_paths(g, 1, 20000, 1);
    SchemeConfig mc;
    mc.solver.mode = SolveMode::RegressionMC;
    const auto phi = CoefficientProcess::markovian(
        [](double, std::span<const double> w) { return 0.5 * (1 + std::sin(w[0])); }, 1.0);
    const auto r = run_scheme(theorem_problem(DriverSpec::exp_utility(1), phi), g, {16, 32}, 0.25, mc, &b);
    EXPECT_EQ(r.bmo_bound, 2.0);
    EXPECT_GT(r.bmo_estimate, 0.0);
    EXPECT_LE(r.bmo_estimate, r.bmo_bound + 3 * r.bmo_standard_error);
    EXPECT_TRUE(r.bounds_ok);
    EXPECT_LE(r.monotone_violation, r.monotone_tolerance);
}

TEST(Scheme, CsvWriters) {
    const auto g = grid(6.0, 50);
    const auto r = run_scheme(theorem_problem(DriverSpec::exp_utility(1)), g, {2, 4, 8}, 0.25, SchemeConfig{});
    std::ostringstream a, b, c;
    write_scheme_csv(r, a);
    write_scheme_final_csv(r, b);
    write_scheme_summary(r, c);
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "n,Y0,cauchy_gap,monotone_violation,lambda_f_integral,bmo_estimate");
    EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "t,Y_mean,Y_sd,Z_mean,lower,upper,region");
    EXPECT_NE(c.str().find("status = "), std::string::npos);
    std::size_t lines = 0;
    for (char ch : a.str()) lines += ch == '\n';
    EXPECT_EQ(lines, 4u);
}
