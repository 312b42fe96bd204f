#include "bsdelab/diagnostics.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/quadrature.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bsdelab {

namespace {

void require_bundle(const PathBundle* paths, const TimeGrid& grid, std::size_t count, const char* why) {
    if (!paths) throw DomainError(fmt::format("{} needs the path bundle", why));
    if (paths->grid().times != grid.times) throw DomainError("path bundle grid differs from candidate grid");
    if (count != 1 && paths->paths() != count) throw DomainError("path bundle size differs from candidate");
}

/// Residuals from nodal values. y(i, m) and zsum(i, m) read the candidate.
template <class Y, class ZSum, class ZDot>
ResidualReport nodal_residual(const TimeGrid& grid, std::size_t M, bool stochastic, Y&& y, ZSum&& zsum,
                              ZDot&& z_dot_dw, const BsdeProblem& problem, const PathBundle* paths) {
    const double T = problem.horizon();
    const std::size_t last = grid.cap_index;
    const bool markov = !problem.phi.deterministic();
    if (stochastic || markov || !problem.terminal.deterministic()) {
        require_bundle(paths, grid, M, "stochastic residual check");
    }
    const std::size_t path_count = stochastic ? M : 1;
    std::vector<double> per_path_max(path_count, 0.0);
    std::vector<double> per_path_mass(path_count, 0.0);
    std::vector<std::size_t> per_path_node(path_count, 0);
    std::vector<double> terminal(path_count, 0.0);

    auto g = [&](std::size_t i, std::size_t m) {
        const double gap = grid.gaps[i];
        const double lambda = problem.intensity.intensity_at_gap(gap);
        const double phi = markov ? problem.phi(grid.times[i], paths->level(i, m)) : problem.phi.at_gap(gap, T);
        return problem.generator(lambda, phi, y(i, m), zsum(i, m));
    };

    parallel_for(path_count, Execution::Parallel, [&](std::size_t m) {
        double r = 0.0;
        for (std::size_t i = 0; i < last; ++i) {
            const double dt = grid.dt(i);
            // Trapezoid in dt; only the dW term must stay left-point to be an Itô sum.
            const double gl = g(i, m);
            const double gr = g(i + 1, m);
            const double drift = 0.5 * (gl + gr) * dt;
            per_path_mass[m] += 0.5 * (std::abs(gl) + std::abs(gr)) * dt;
            r += y(i + 1, m) - y(i, m) - drift - (stochastic ? z_dot_dw(i, m) : 0.0);
            if (std::abs(r) > per_path_max[m]) {
                per_path_max[m] = std::abs(r);
                per_path_node[m] = i + 1;
            }
        }
        const std::size_t n = grid.size();
        const double a = problem.terminal.deterministic()
                             ? problem.terminal({})
                             : problem.terminal(paths->level(n - 1, m));
        terminal[m] = std::abs(y(n - 1, m) - a);
    });

    ResidualReport rep;
    const double inv = 1.0 / static_cast<double>(path_count);
    rep.max_residual = deterministic_scalar_sum(path_count, Execution::Parallel,
                                                [&](std::size_t m) { return per_path_max[m]; }) * inv;
    rep.integrability_estimate = deterministic_scalar_sum(
        path_count, Execution::Parallel, [&](std::size_t m) { return per_path_mass[m]; }) * inv;
    const auto worst = std::max_element(per_path_max.begin(), per_path_max.end());
    rep.worst_path_residual = *worst;
    rep.worst_node = per_path_node[static_cast<std::size_t>(worst - per_path_max.begin())];
    rep.terminal_gap = *std::max_element(terminal.begin(), terminal.end());
    return rep;
}

template <class Y>
double class_d_generic(const TimeGrid& grid, std::size_t M, Y&& y, double level_unit) {
    const std::size_t n = grid.size();
    auto mean_abs = [&](auto&& node_of_path) {
        return deterministic_scalar_sum(M, Execution::Parallel, [&](std::size_t m) {
                   return std::abs(y(node_of_path(m), m));
               }) / static_cast<double>(M);
    };
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, mean_abs([i](std::size_t) { return i; }));
    if (M == 1 || !(level_unit > 0.0)) return best;
    for (int k = -8; k <= 8; ++k) {
        if (k == 0) continue;
        const double level = k * level_unit;
        best = std::max(best, mean_abs([&](std::size_t m) {
            for (std::size_t i = 0; i < n; ++i) {
                const double v = y(i, m);
                if (k < 0 ? v <= level : v >= level) return i;
            }
            return n - 1;
        }));
    }
    return best;
}

}  // namespace

ResidualReport residual_check(const AffineSolution& c, const BsdeProblem& problem, const PathBundle* paths) {
    const TimeGrid& grid = c.grid;
    if (std::abs(grid.horizon() - problem.horizon()) > 1e-14 * problem.horizon()) {
        throw DomainError("candidate grid horizon differs from the problem horizon");
    }
    const std::size_t M = c.paths;
    const std::size_t d = c.dim;
    auto y = [&](std::size_t i, std::size_t m) { return c.y_at(i, M == 1 ? 0 : m); };
    auto zsum = [&](std::size_t i, std::size_t m) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += c.z_at(i, M == 1 ? 0 : m, k);
        return s;
    };
    auto zdw = [&](std::size_t i, std::size_t m) {
        const auto dw = paths->increment(i, m);
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += c.z_at(i, m, k) * dw[k];
        return s;
    };
    if (!c.deterministic() || !problem.phi.deterministic()) {
        return nodal_residual(grid, M, M > 1, y, zsum, zdw, problem, paths);
    }

    // Integral form with the evaluator: Y(t_k) − Y(0) − Σ_{i<k} ∫ g, g taken along Y itself.
    const double T = problem.horizon();
    auto g = [&](double gap) {
        const double lambda = problem.intensity.intensity_at_gap(gap);
        return problem.generator(lambda, problem.phi.at_gap(gap, T), c.exact(gap), 0.0);
    };
    // The evaluator may itself be a quadrature whose noise is not smooth, so refinement is kept
    // shallow; grid intervals already resolve Λ.
    constexpr unsigned kDepth = 4;
    ResidualReport rep;
    double r = 0.0;
    for (std::size_t i = 0; i < grid.cap_index; ++i) {
        const auto q = integrate(g, grid.gaps[i + 1], grid.gaps[i], 1e-12, kDepth);
        r += c.y_at(i + 1) - c.y_at(i) - q.value;
        rep.integrability_estimate += q.l1;
        if (std::abs(r) > rep.max_residual) {
            rep.max_residual = std::abs(r);
            rep.worst_node = i + 1;
        }
    }
    rep.worst_path_residual = rep.max_residual;
    if (!problem.terminal.deterministic()) throw DomainError("deterministic candidate with a random terminal value");
    rep.terminal_gap = std::abs(c.y_at(grid.size() - 1) - problem.terminal({}));
    return rep;
}

ResidualReport residual_check(const SolutionEstimate& c, const BsdeProblem& problem, const PathBundle* paths) {
    const std::size_t M = c.paths;
    const std::size_t d = c.dim;
    auto y = [&](std::size_t i, std::size_t m) { return c.y_at(i, M == 1 ? 0 : m); };
    auto zsum = [&](std::size_t i, std::size_t m) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += c.z_at(i, M == 1 ? 0 : m, k);
        return s;
    };
    auto zdw = [&](std::size_t i, std::size_t m) {
        const auto dw = paths->increment(i, m);
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += c.z_at(i, m, k) * dw[k];
        return s;
    };
    return nodal_residual(c.grid, M, c.mode == SolveMode::RegressionMC, y, zsum, zdw, problem, paths);
}

double class_d_norm(const SolutionEstimate& sol, double level_unit) {
    return class_d_generic(sol.grid, sol.paths,
                           [&](std::size_t i, std::size_t m) { return sol.y_at(i, m); }, level_unit);
}

double class_d_norm(const AffineSolution& sol, double level_unit) {
    return class_d_generic(sol.grid, sol.paths,
                           [&](std::size_t i, std::size_t m) { return sol.y_at(i, m); }, level_unit);
}

PathologyCertificate certify_nonexistence(const BsdeProblem& problem, const TimeGrid& grid,
                                          const std::vector<double>& schedule, const SolverConfig& config,
                                          std::string scenario_id, double ratio_threshold) {
    if (problem.terminal.kind == TerminalValue::Kind::Random) {
        throw DomainError("non-existence certificate needs a constant terminal value");
    }
    if (problem.terminal.is_zero()) {
        throw DomainError("terminal value is zero; use the scheme or the affine solvers instead");
    }
    if (!problem.intensity.singular()) {
        throw DomainError(fmt::format("intensity {} is not singular; the standing assumption fails",
                                      problem.intensity.describe()));
    }
    if (problem.form == EquationForm::NonlinearPlus && !problem.driver.flags.nondecreasing) {
        throw DomainError("non-existence needs a nondecreasing driver");
    }
    if (!problem.phi.deterministic()) throw DomainError("non-existence certificate needs a deterministic phi");
    if (schedule.size() < 2) throw DomainError("non-existence certificate needs at least two levels");
    for (std::size_t k = 1; k < schedule.size(); ++k) {
        if (!(schedule[k] > schedule[k - 1])) throw DomainError("schedule must be strictly increasing");
    }

    SolverConfig cfg = config;
    cfg.mode = SolveMode::OdeExact;
    cfg.substep_reference = schedule.back();
    NonExistenceEvidence ev;
    ev.statistic = problem.form == EquationForm::MinusLambdaY ? "mass" : "peak";
    ev.ratio_threshold = ratio_threshold;
    for (double n : schedule) {
        const auto sol = solve_ode_mode(problem.truncated(n), grid, cfg);
        ev.growth_series.push_back({n, sol.lambda_f_mass(), sol.lambda_f_peak(), sol.y_at(0)});
    }
    bool increasing = true;
    for (std::size_t k = 1; k < ev.growth_series.size(); ++k) {
        if (!(ev.value(ev.growth_series[k]) > ev.value(ev.growth_series[k - 1]))) increasing = false;
    }
    const double first = ev.value(ev.growth_series.front());
    ev.ratio = first > 0.0 ? ev.value(ev.growth_series.back()) / first : INFINITY;
    ev.monotone_divergent = increasing && ev.ratio >= ratio_threshold;

    PathologyCertificate cert;
    cert.kind = PathologyCertificate::Kind::NonExistence;
    cert.scenario_id = std::move(scenario_id);
    cert.nonexistence = std::move(ev);
    cert.notes.push_back("evidence is divergence in the truncation level n of the truncated solutions");
    cert.notes.push_back("no pathwise analogue of the random time used by the analytic argument is attempted");
    if (cert.nonexistence->statistic == "peak") {
        cert.notes.push_back("the +lambda form pulls Y^n toward 0, so the bounded mass is replaced by the peak density");
    }
    return cert;
}

NonUniquenessScenario NonUniquenessScenario::fundamental_minus(IntensityModel model, std::vector<double> y0_list) {
    NonUniquenessScenario s;
    s.kind = Kind::FundamentalMinus;
    s.model = std::move(model);
    s.y0_list = std::move(y0_list);
    return s;
}

NonUniquenessScenario NonUniquenessScenario::ode_family(IntensityModel model, CoefficientProcess phi,
                                                        double c, std::vector<double> y0_list) {
    NonUniquenessScenario s;
    s.kind = Kind::OdeFamily;
    s.model = std::move(model);
    s.phi = std::move(phi);
    s.c = c;
    s.y0_list = std::move(y0_list);
    return s;
}

NonUniquenessScenario NonUniquenessScenario::ek_red(double r, double sigma, double gamma, double horizon,
                                                    std::vector<double> y0_list) {
    NonUniquenessScenario s;
    s.kind = Kind::EkRed;
    s.model = IntensityModel::exp_gap(gamma, horizon);
    s.r = r;
    s.sigma = sigma;
    s.y0_list = std::move(y0_list);
    return s;
}

BsdeProblem NonUniquenessScenario::problem() const {
    BsdeProblem p;
    p.intensity = model;
    p.form = EquationForm::MinusLambdaY;
    p.phi = kind == Kind::OdeFamily ? phi : CoefficientProcess::constant(0.0);
    p.terminal = kind == Kind::OdeFamily ? TerminalValue::constant(c) : TerminalValue::zero();
    if (kind == Kind::EkRed) {
        p.y_slope = -r;
        p.z_slope = sigma;
    }
    return p;
}

PathologyCertificate certify_nonuniqueness(const NonUniquenessScenario& scenario, const TimeGrid& grid,
                                           double tol, std::string scenario_id) {
    if (scenario.y0_list.size() < 2) throw DomainError("a non-uniqueness certificate needs two members");
    NonUniquenessEvidence ev;
    ev.tolerance = tol;
    const BsdeProblem problem = scenario.problem();

    if (scenario.kind == NonUniquenessScenario::Kind::OdeFamily) {
        const auto cls = classify_ode(scenario.model, scenario.phi);
        if (cls.kind != OdeClassification::Case::ConvergesTo) {
            throw DomainError("ODE scenario: m(t) does not converge, the family is empty");
        }
        if (std::abs(cls.limit - scenario.c) > 1e-6 * std::max(1.0, std::abs(scenario.c))) {
            throw DomainError(fmt::format("ODE scenario: terminal value {} differs from the limit {}",
                                          scenario.c, cls.limit));
        }
    }

    for (double y0 : scenario.y0_list) {
        switch (scenario.kind) {
            case NonUniquenessScenario::Kind::FundamentalMinus:
                ev.members.push_back(fundamental_family(scenario.model, y0, grid));
                break;
            case NonUniquenessScenario::Kind::OdeFamily:
                ev.members.push_back(ode_family_member(scenario.model, scenario.phi, y0, grid));
                break;
            case NonUniquenessScenario::Kind::EkRed:
                ev.members.push_back(fundamental_family(scenario.model, y0, grid, nullptr, nullptr,
                                                        problem.y_slope, problem.z_slope));
                break;
        }
        ev.labels.push_back(fmt::format("Y0={}", y0));
    }

    for (std::size_t k = 0; k < ev.members.size(); ++k) {
        const auto rep = residual_check(ev.members[k], problem);
        ev.residuals.push_back(rep);
        if (!(rep.max_residual <= tol)) {
            throw CertificateFailed(k, fmt::format("residual {} exceeds {}", rep.max_residual, tol));
        }
        if (!(rep.terminal_gap <= tol)) {
            throw CertificateFailed(k, fmt::format("terminal gap {} exceeds {}", rep.terminal_gap, tol));
        }
    }
    for (std::size_t a = 0; a < ev.members.size(); ++a) {
        for (std::size_t b = a + 1; b < ev.members.size(); ++b) {
            double dist = 0.0;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                dist = std::max(dist, std::abs(ev.members[a].y_at(i) - ev.members[b].y_at(i)));
            }
            ev.pairwise_sup_distance.push_back(dist);
            if (!(dist > 10.0 * tol)) {
                throw CertificateFailed(b, fmt::format("member coincides with member {} (distance {})", a, dist));
            }
        }
    }

    PathologyCertificate cert;
    cert.kind = PathologyCertificate::Kind::NonUniqueness;
    cert.scenario_id = std::move(scenario_id);
    cert.nonuniqueness = std::move(ev);
    cert.notes.push_back("every member is checked in integral form on [0, t_cap] and at T");
    return cert;
}

void write_certificate(const PathologyCertificate& cert, std::ostream& out) {
    auto num = [](double v) { return fmt::format("{:.17g}", v); };
    out << "certificate = "
        << (cert.kind == PathologyCertificate::Kind::NonExistence ? "NonExistence" : "NonUniqueness") << '\n';
    out << "scenario = " << cert.scenario_id << '\n';
    if (cert.nonexistence) {
        const auto& ev = *cert.nonexistence;
        out << "statistic = " << ev.statistic << '\n';
        for (const auto& g : ev.growth_series) {
            out << fmt::format("level n={} mass={} peak={} Y0={}\n", num(g.n), num(g.mass), num(g.peak), num(g.y0));
        }
        out << "ratio = " << num(ev.ratio) << '\n';
        out << "ratio_threshold = " << num(ev.ratio_threshold) << '\n';
        out << "monotone_divergent = " << (ev.monotone_divergent ? "true" : "false") << '\n';
    }
    if (cert.nonuniqueness) {
        const auto& ev = *cert.nonuniqueness;
        out << "members = " << ev.members.size() << '\n';
        for (std::size_t k = 0; k < ev.members.size(); ++k) {
            const auto& r = ev.residuals[k];
            out << fmt::format("member {} {} provenance={} max_residual={} terminal_gap={} integrability={}\n", k,
                               ev.labels[k], to_string(ev.members[k].provenance), num(r.max_residual),
                               num(r.terminal_gap), num(r.integrability_estimate));
        }
        std::size_t at = 0;
        for (std::size_t a = 0; a < ev.members.size(); ++a) {
            for (std::size_t b = a + 1; b < ev.members.size(); ++b) {
                out << fmt::format("distance {} {} = {}\n", a, b, num(ev.pairwise_sup_distance[at++]));
            }
        }
        out << "tolerance = " << num(ev.tolerance) << '\n';
    }
    for (const auto& note : cert.notes) out << "note = " << note << '\n';
}

void write_certificate_csv(const PathologyCertificate& cert, std::ostream& out) {
    auto num = [](double v) { return fmt::format("{:.17g}", v); };
    if (cert.nonexistence) {
        out << "n,mass,peak,Y0\n";
        for (const auto& g : cert.nonexistence->growth_series) {
            out << num(g.n) << ',' << num(g.mass) << ',' << num(g.peak) << ',' << num(g.y0) << '\n';
        }
        return;
    }
    if (cert.nonuniqueness) {
        const auto& ev = *cert.nonuniqueness;
        out << "member,label,Y0,max_residual,terminal_gap,integrability\n";
        for (std::size_t k = 0; k < ev.members.size(); ++k) {
            const auto& r = ev.residuals[k];
            out << k << ',' << ev.labels[k] << ',' << num(ev.members[k].y_at(0)) << ',' << num(r.max_residual)
                << ',' << num(r.terminal_gap) << ',' << num(r.integrability_estimate) << '\n';
        }
    }
}

}  // namespace bsdelab
