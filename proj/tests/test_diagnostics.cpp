#include "bsdelab/diagnostics.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/singular_scheme.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <sstream>

using namespace bsdelab;

namespace {

const IntensityModel kPg = IntensityModel::power_gap(1.0, 1.0);

TimeGrid grid(const IntensityModel& m = kPg) { return make_grid(m, 200, GridScheme::lambda_equidistributed(12.0)); }

CoefficientProcess two_lambda() {
    return CoefficientProcess::deterministic_in_gap([](double g) { return 2.0 * kPg.intensity_at_gap(g); }, 1.0, 1e6);
}

BsdeProblem with_terminal(EquationForm form, double a, DriverSpec d = DriverSpec::identity(),
                          IntensityModel m = kPg) {
    BsdeProblem p;
    p.intensity = std::move(m);
    p.form = form;
    p.driver = std::move(d);
    p.terminal = a == 0.0 ? TerminalValue::zero() : TerminalValue::constant(a);
    return p;
}

const std::vector<double> kSchedule = {4, 16, 64, 256};

void expect_divergent(const PathologyCertificate& c) {
    ASSERT_TRUE(c.nonexistence.has_value());
    const auto& e = *c.nonexistence;
    EXPECT_TRUE(e.monotone_divergent);
    EXPECT_GE(e.ratio, 10.0);
    for (std::size_t k = 1; k < e.growth_series.size(); ++k) {
        EXPECT_GT(e.value(e.growth_series[k]), e.value(e.growth_series[k - 1]));
    }
    EXPECT_FALSE(c.notes.empty());
}

}  // namespace

TEST(NonExistence, AffineMinusWithUnitTerminal) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = certify_nonexistence(with_terminal(EquationForm::MinusLambdaY, 1.0), grid(), kSchedule);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 30.0);
    EXPECT_EQ(c.kind, PathologyCertificate::Kind::NonExistence);
    EXPECT_EQ(c.nonexistence->statistic, "mass");
    expect_divergent(c);
}

TEST(NonExistence, AffinePlusAndNonlinearCases) {
    expect_divergent(certify_nonexistence(with_terminal(EquationForm::PlusLambdaY, 1.0), grid(), kSchedule));
    const auto nl = certify_nonexistence(
        with_terminal(EquationForm::NonlinearPlus, -1.0, DriverSpec::exp_utility(1)), grid(), kSchedule);
    EXPECT_EQ(nl.nonexistence->statistic, "peak");
    expect_divergent(nl);
}

TEST(NonExistence, Guards) {
    const auto bounded = IntensityModel::bounded(2.0, 1.0);
    const auto bg = make_grid(bounded, 50, GridScheme::uniform());
    EXPECT_THROW(certify_nonexistence(with_terminal(EquationForm::MinusLambdaY, 1.0, DriverSpec::identity(), bounded),
                                      bg, kSchedule),
                 DomainError);
    EXPECT_THROW(certify_nonexistence(with_terminal(EquationForm::MinusLambdaY, 0.0), grid(), kSchedule), DomainError);
    EXPECT_THROW(certify_nonexistence(with_terminal(EquationForm::MinusLambdaY, 1.0), grid(), {4}), DomainError);
    EXPECT_THROW(certify_nonexistence(with_terminal(EquationForm::NonlinearPlus, 1.0, DriverSpec::neg_identity()),
                                      grid(), kSchedule),
                 DomainError);
}

TEST(NonUniqueness, FundamentalFamily) {
    const auto c = certify_nonuniqueness(NonUniquenessScenario::fundamental_minus(kPg, {0, 1, 3}), grid());
    const auto& e = *c.nonuniqueness;
    ASSERT_EQ(e.members.size(), 3u);
    ASSERT_EQ(e.pairwise_sup_distance.size(), 3u);
    EXPECT_NEAR(e.pairwise_sup_distance[0], 1.0, 1e-14);
    EXPECT_NEAR(e.pairwise_sup_distance[1], 3.0, 1e-14);
    EXPECT_NEAR(e.pairwise_sup_distance[2], 2.0, 1e-14);
    for (const auto& r : e.residuals) {
        EXPECT_LT(r.max_residual, 1e-8);
        EXPECT_EQ(r.terminal_gap, 0.0);
    }
}

TEST(NonUniqueness, OdeFamilyAndReduced) {
    const auto g = grid();
    const auto c = certify_nonuniqueness(NonUniquenessScenario::ode_family(kPg, two_lambda(), 2.0, {0, 1}), g);
    const auto& m = c.nonuniqueness->members;
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        EXPECT_NEAR(m[0].y_at(i), 2.0 * g.times[i], 1e-10);
        const double e = std::exp(-kPg.cumulative_at_gap(g.gaps[i]));
        EXPECT_NEAR(m[1].y_at(i), e + 2.0 * (1.0 - e), 1e-10);
    }
    EXPECT_NEAR(c.nonuniqueness->pairwise_sup_distance[0], 1.0, 1e-10);

    const auto eg = IntensityModel::exp_gap(1.0, 1.0);
    const auto ek = certify_nonuniqueness(NonUniquenessScenario::ek_red(0.05, 0.2, 1.0, 1.0, {0, 1}), grid(eg));
    EXPECT_EQ(ek.nonuniqueness->members.size(), 2u);
    EXPECT_GT(std::abs(ek.nonuniqueness->members[1].y_at(0) - ek.nonuniqueness->members[0].y_at(0)), 0.5);
    for (const auto& r : ek.nonuniqueness->residuals) EXPECT_LT(r.max_residual, 1e-8);
}

TEST(NonUniqueness, FailsForIndistinctMembersOrWrongLimit) {
    EXPECT_THROW(certify_nonuniqueness(NonUniquenessScenario::fundamental_minus(kPg, {0, 1e-9}), grid()),
                 CertificateFailed);
    EXPECT_THROW(certify_nonuniqueness(NonUniquenessScenario::ode_family(kPg, two_lambda(), 3.0, {0, 1}), grid()),
                 DomainError);
}

TEST(Residual, ExactCorruptedAndIntegrability) {
    const auto g = grid();
    const auto family = NonUniquenessScenario::fundamental_minus(kPg, {3});
    const auto member = fundamental_family(kPg, 3.0, g);
    const auto r = residual_check(member, family.problem());
    EXPECT_LT(r.max_residual, 1e-10);
    EXPECT_EQ(r.terminal_gap, 0.0);

    const auto bad = residual_check(member.shifted(0.01), family.problem());
    EXPECT_GT(bad.max_residual, 5e-3);

    const auto ode = NonUniquenessScenario::ode_family(kPg, two_lambda(), 2.0, {0});
    const auto lin = ode_family_member(kPg, two_lambda(), 0.0, g);
    const auto rl = residual_check(lin, ode.problem());
    EXPECT_LT(rl.max_residual, 1e-8);
    // ∫₀^{t_cap} λ|2 − Y| dt = 2(1 − e^{−Λ(t_cap)}) = 2·t_cap.
    EXPECT_NEAR(rl.integrability_estimate, 2.0 * g.t_cap(), 1e-8);
}

TEST(Residual, DeterministicOnRerun) {
    const auto c = certify_nonuniqueness(NonUniquenessScenario::fundamental_minus(kPg, {0, 1, 3}), grid());
    const auto p = NonUniquenessScenario::fundamental_minus(kPg, {0}).problem();
    for (std::size_t k = 0; k < c.nonuniqueness->members.size(); ++k) {
        const auto again = residual_check(c.nonuniqueness->members[k], p);
        EXPECT_NEAR(again.max_residual, c.nonuniqueness->residuals[k].max_residual, 1e-12);
    }
}

TEST(Residual, StochasticMemberConvergesUnderRefinement) {
    // The nodal check of a stochastic member carries an O(λΔt·ΔW) error per step, so the
    // pathwise maximum shrinks like the square root of the Λ-step.
    auto p = NonUniquenessScenario::fundamental_minus(kPg, {0}).problem();
    p.z_slope = 0.2;
    std::vector<double> res;
    for (std::size_t n : {41, 161, 641}) {
        const auto g = make_grid(kPg, n, GridScheme::lambda_equidistributed(6.0));
        const auto b = simulate_paths(g, 1, 2000, 5);
        const std::vector<double> beta(g.size() - 1, 0.7);
        const auto sol = fundamental_family(kPg, 1.0, g, &beta, &b, 0.0, 0.2);
        const auto r = residual_check(sol, p, &b);
        EXPECT_EQ(r.terminal_gap, 0.0);
        EXPECT_TRUE(std::isfinite(r.integrability_estimate));
        res.push_back(r.max_residual);
        EXPECT_GT(residual_check(sol.shifted(0.05), p, &b).max_residual, 5 * r.max_residual + 1e-2);
    }
    EXPECT_GT(res[0] / res[1], 1.6);
    EXPECT_GT(res[1] / res[2], 1.6);
}

TEST(ClassD, Examples) {
    const auto g = grid();
    EXPECT_EQ(class_d_norm(fundamental_family(kPg, 0.0, g)), 0.0);
    EXPECT_NEAR(class_d_norm(fundamental_family(kPg, 3.0, g)), 3.0, 1e-15);

    BsdeProblem p;
    p.intensity = kPg;
    p.phi = CoefficientProcess::constant(1.0);
    p.form = EquationForm::NonlinearPlus;
    p.driver = DriverSpec::identity();
    const auto r = run_scheme(p, g, default_schedule(), 0.25, SchemeConfig{});
    EXPECT_NEAR(class_d_norm(r.final.solution), 0.5, 1e-4);
    EXPECT_LE(class_d_norm(r.final.solution), 1.0);
}

TEST(ClassD, StochasticSchemeSolutionBelowEnvelope) {
    const auto g = make_grid(kPg, 21, GridScheme::lambda_equidistributed(4.0));
    const auto b = simulate_paths(g, 1, 10000, 8);
    BsdeProblem p;
    p.intensity = kPg;
    p.phi = CoefficientProcess::markovian(
        [](double, std::span<const double> w) { return 0.5 * (1 + std::sin(w[0])); }, 1.0);
    p.form = EquationForm::NonlinearPlus;
    p.driver = DriverSpec::exp_utility(1);
    SchemeConfig cfg;
    cfg.solver.mode = SolveMode::RegressionMC;
    const auto r = run_scheme(p, g, {8, 16}, 0.25, cfg, &b);
    const double nodes_only = class_d_norm(r.final.solution);
    const double with_hits = class_d_norm(r.final.solution, 1.0 / 8);
    EXPECT_GE(with_hits, nodes_only);
    EXPECT_LE(with_hits, 1.0 + 1e-3);
}

TEST(Certificates, Serialization) {
    const auto c = certify_nonexistence(with_terminal(EquationForm::MinusLambdaY, 1.0), grid(), kSchedule, {}, "demo");
    std::ostringstream txt, csv;
    write_certificate(c, txt);
    write_certificate_csv(c, csv);
    EXPECT_NE(txt.str().find("scenario = demo"), std::string::npos);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "n,mass,peak,Y0");

    const auto u = certify_nonuniqueness(NonUniquenessScenario::fundamental_minus(kPg, {0, 1}), grid());
    std::ostringstream ucsv;
    write_certificate_csv(u, ucsv);
    EXPECT_EQ(ucsv.str().substr(0, ucsv.str().find('\n')), "member,label,Y0,max_residual,terminal_gap,integrability");
}
