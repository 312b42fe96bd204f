#include "bsdelab/affine.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/quadrature.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bsdelab {

std::string to_string(AffineProvenance p) {
    switch (p) {
        case AffineProvenance::RepresentationFormula:
            return "representation_formula";
        case AffineProvenance::FundamentalFamily:
            return "fundamental_family";
        case AffineProvenance::StochasticFundamental:
            return "stochastic_fundamental";
        case AffineProvenance::ParticularSolution:
            return "particular_solution";
        case AffineProvenance::OdeFamily:
            return "ode_family";
        case AffineProvenance::Superposition:
            return "superposition";
    }
    return "?";
}

namespace {

constexpr double kQuadTol = 1e-13;

/// u-panel edges 0, 1, 2, 4, ... up to `last`.
std::vector<double> dyadic_edges(double last) {
    std::vector<double> e{0.0};
    for (double u = 1.0; u < last; u *= 2.0) e.push_back(u);
    e.push_back(last);
    return e;
}

struct KernelResult {
    double value = 0.0;
    double last_panel = 0.0;
};

/// ∫ over gaps γ ∈ (0, g] of exp(κ(Λ(γ) − Λ(g)) − b(g − γ)) φ(γ) dγ, i.e. the integral over
/// s ∈ [t, T] of e^{κ(Λ(s)−Λ(t)) − b(s−t)} φ(s). Near T the variable u = Λ(γ) − Λ(g*) is used.
KernelResult kernel_integral(const IntensityModel& model, const CoefficientProcess& phi, double b,
                             double kappa, double g, double u_last) {
    KernelResult out;
    if (!(g > 0.0)) return out;
    const double T = model.horizon();
    const double lam_g = model.cumulative_at_gap(g);
    const double g_star = std::min(g, T / 2);
    auto phi_gap = [&](double gamma) { return phi.at_gap(gamma, T); };

    if (g > g_star) {
        auto f = [&](double gamma) {
            return std::exp(kappa * (model.cumulative_at_gap(gamma) - lam_g) - b * (g - gamma)) *
                   phi_gap(gamma);
        };
        out.value += integrate(f, g_star, g, kQuadTol).value;
    }

    if (!model.singular()) {
        auto f = [&](double gamma) {
            return std::exp(kappa * (model.cumulative_at_gap(gamma) - lam_g) - b * (g - gamma)) *
                   phi_gap(gamma);
        };
        out.value += integrate(f, 0.0, g_star, kQuadTol).value;
        return out;
    }

    const double lam_star = model.cumulative_at_gap(g_star);
    auto f = [&](double u) {
        const double gamma = model.gap_at_cumulative(lam_star + u);
        if (!(gamma > 0.0)) return 0.0;
        const double lambda = model.intensity_at_gap(gamma);
        return std::exp(kappa * (lam_star - lam_g + u) - b * (g - gamma)) * phi_gap(gamma) / lambda;
    };
    const auto edges = dyadic_edges(u_last);
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
        const double piece = integrate(f, edges[k], edges[k + 1], kQuadTol).value;
        out.value += piece;
        out.last_panel = piece;
    }
    return out;
}

double decaying_integral(const IntensityModel& model, const CoefficientProcess& phi, double b,
                         double g) {
    return kernel_integral(model, phi, b, -1.0, g, 64.0).value;
}

void fill_bound_check(AffineSolution& sol, double phi_bound) {
    const std::size_t n = sol.nodes();
    sol.bound_check.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double worst = 0.0;
        for (std::size_t m = 0; m < sol.paths; ++m) worst = std::max(worst, std::abs(sol.y_at(i, m)));
        sol.bound_check[i] = phi_bound * sol.grid.gaps[i] - worst;
    }
}

AffineSolution deterministic_solution(const TimeGrid& grid, AffineProvenance prov,
                                      std::function<double(double)> exact, double terminal) {
    AffineSolution sol;
    sol.grid = grid;
    sol.provenance = prov;
    const std::size_t n = grid.size();
    sol.y.assign(n, 0.0);
    sol.z.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) sol.y[i] = exact(grid.gaps[i]);
    sol.y[n - 1] = terminal;
    sol.exact = std::move(exact);
    return sol;
}

AffineSolution affine_plus_markovian(const BsdeProblem& problem, const TimeGrid& grid,
                                     const PathBundle& bundle, const RegressionBasis& basis,
                                     Execution exec) {
    if (bundle.grid().times != grid.times) throw DomainError("path bundle grid differs from grid");
    const IntensityModel& model = problem.intensity;
    const double b = problem.y_slope;
    const std::size_t n = grid.size();
    const std::size_t M = bundle.paths();
    const std::size_t d = bundle.dim();

    // Per interval: w_i = ∫ e^{−(Λ(s)−Λ_i) − b(s−t_i)} ds and the decay to the next node.
    std::vector<double> weight(n - 1);
    std::vector<double> decay(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double gi = grid.gaps[i];
        const double gn = grid.gaps[i + 1];
        const double lam_i = model.cumulative_at_gap(gi);
        auto f = [&](double gamma) {
            return std::exp(-(model.cumulative_at_gap(gamma) - lam_i) - b * (gi - gamma));
        };
        weight[i] = integrate_dyadic(f, gn, gi, std::max(gn, 1e-300), kQuadTol).value;
        decay[i] = (gn == 0.0 && model.singular()) ? 0.0 : f(gn);
    }

    AffineSolution sol;
    sol.grid = grid;
    sol.provenance = AffineProvenance::RepresentationFormula;
    sol.paths = M;
    sol.dim = d;
    sol.y.assign(n * M, 0.0);
    sol.z.assign(n * M * d, 0.0);

    // |Y_i| ≤ ‖φ‖∞·envelope[i] holds pathwise; polynomial fits overshoot it at extreme W.
    std::vector<double> envelope(n, 0.0);
    for (std::size_t i = n - 1; i-- > 0;) envelope[i] = weight[i] + decay[i] * envelope[i + 1];
    const double phi_bound = problem.phi.bound();

    std::vector<double> inner(M, 0.0);
    std::vector<double> chat(M, 0.0);
    for (std::size_t i = n - 1; i-- > 0;) {
        const double t = grid.times[i];
        parallel_for(M, exec, [&](std::size_t m) {
            inner[m] = weight[i] * problem.phi(t, bundle.level(i, m)) + decay[i] * inner[m];
        });
        const double* next = sol.y.data() + (i + 1) * M;
        NodeRegression reg(bundle, i, basis, exec);
        const auto fit = reg.fit(2, [&](std::size_t m, double* out) {
            out[0] = inner[m];
            out[1] = next[m];
        });
        parallel_for(M, exec, [&](std::size_t m) {
            const double cap = phi_bound * envelope[i];
            sol.y[i * M + m] = std::clamp(-reg.predict(fit, m, 0), -cap, cap);
            chat[m] = reg.predict(fit, m, 1);
        });
        const double dt = grid.dt(i);
        const auto zfit = reg.fit(d, [&](std::size_t m, double* out) {
            const auto dw = bundle.increment(i, m);
            for (std::size_t k = 0; k < d; ++k) out[k] = (next[m] - chat[m]) * dw[k] / dt;
        });
        parallel_for(M, exec, [&](std::size_t m) {
            for (std::size_t k = 0; k < d; ++k) sol.z[(i * M + m) * d + k] = reg.predict(zfit, m, k);
        });
    }
    fill_bound_check(sol, problem.phi.bound());
    return sol;
}

}  // namespace

SampleStats AffineSolution::y_stats(std::size_t i) const {
    const double* row = y.data() + i * paths;
    return sample_stats(paths, Execution::Parallel, [row](std::size_t m) { return row[m]; });
}

AffineSolution AffineSolution::shifted(double delta) const {
    AffineSolution out = *this;
    for (double& v : out.y) v += delta;
    if (exact) {
        auto base = exact;
        out.exact = [base, delta](double gap) { return base(gap) + delta; };
    }
    return out;
}

AffineSolution solve_affine_plus(const BsdeProblem& problem, const TimeGrid& grid,
                                 const PathBundle* paths, const RegressionBasis& basis,
                                 Execution exec) {
    if (problem.form != EquationForm::PlusLambdaY) {
        throw DomainError("solve_affine_plus needs the +λY form");
    }
    if (!problem.terminal.is_zero()) throw NoSolution("terminal value must vanish");
    if (!problem.phi.deterministic()) {
        if (!paths) throw DomainError("Markovian phi needs a path bundle");
        return affine_plus_markovian(problem, grid, *paths, basis, exec);
    }
    const IntensityModel model = problem.intensity;
    const CoefficientProcess phi = problem.phi;
    const double b = problem.y_slope;
    auto exact = [model, phi, b](double gap) { return -decaying_integral(model, phi, b, gap); };
    AffineSolution sol =
        deterministic_solution(grid, AffineProvenance::RepresentationFormula, exact, 0.0);
    fill_bound_check(sol, phi.bound());
    return sol;
}

AffineSolution fundamental_family(const IntensityModel& model, double y0, const TimeGrid& grid,
                                  const std::vector<double>* beta, const PathBundle* paths,
                                  double y_slope, double z_slope) {
    if (!model.singular()) {
        throw DomainError("fundamental family needs a singular intensity (e^{-Λ} must vanish at T)");
    }
    const double T = model.horizon();
    auto envelope = [model, y_slope, T](double gap) {
        if (!(gap > 0.0)) return 0.0;
        return std::exp(-model.cumulative_at_gap(gap) + y_slope * (T - gap));
    };
    if (!beta) {
        auto exact = [envelope, y0](double gap) { return y0 * envelope(gap); };
        AffineSolution sol = deterministic_solution(grid, AffineProvenance::FundamentalFamily, exact, 0.0);
        sol.y0 = y0;
        auto mass = [&](double gap) { return std::abs(model.intensity_at_gap(gap) * exact(gap)); };
        const double g_cap = grid.gaps[grid.cap_index];
        sol.integrability = g_cap > 0.0 ? integrate_dyadic(mass, g_cap, T, g_cap, 1e-12).value
                                        : integrate(mass, 0.0, T, 1e-12).value;
        return sol;
    }
    if (!paths) throw DomainError("stochastic fundamental family needs a path bundle");
    if (paths->grid().times != grid.times) throw DomainError("path bundle grid differs from grid");
    const std::size_t n = grid.size();
    if (beta->size() + 1 != n) {
        throw DomainError(fmt::format("beta has {} values, grid has {} intervals", beta->size(), n - 1));
    }
    const std::size_t M = paths->paths();
    const std::size_t d = paths->dim();
    AffineSolution sol;
    sol.grid = grid;
    sol.provenance = AffineProvenance::StochasticFundamental;
    sol.y0 = y0;
    sol.paths = M;
    sol.dim = d;
    sol.y.assign(n * M, 0.0);
    sol.z.assign(n * M * d, 0.0);
    std::vector<double> env(n);
    for (std::size_t i = 0; i < n; ++i) env[i] = envelope(grid.gaps[i]);
    parallel_for(M, Execution::Parallel, [&](std::size_t m) {
        double mart = y0;
        for (std::size_t i = 0; i < n; ++i) {
            sol.y[i * M + m] = env[i] * mart;
            if (i + 1 == n) break;
            double dw_sum = 0.0;
            for (double dw : paths->increment(i, m)) dw_sum += dw;
            for (std::size_t k = 0; k < d; ++k) sol.z[(i * M + m) * d + k] = env[i] * (*beta)[i];
            mart += (*beta)[i] * (dw_sum + z_slope * static_cast<double>(d) * grid.dt(i));
        }
    });
    return sol;
}

double particular_integral(const IntensityModel& model, const CoefficientProcess& phi, double gap) {
    if (!model.singular()) {
        return kernel_integral(model, phi, 0.0, 1.0, gap, 0.0).value;
    }
    const auto r = kernel_integral(model, phi, 0.0, 1.0, gap, 512.0);
    const double scale = std::max(phi.bound(), std::numeric_limits<double>::min());
    const bool runaway = !std::isfinite(r.value) || std::abs(r.value) > 1e6 * scale;
    const bool tail_alive = std::abs(r.last_panel) > 1e-10 * std::max(std::abs(r.value), scale);
    if (runaway || tail_alive) {
        throw NoParticularSolution(fmt::format(
            "weighted integral diverges at t = T - {} (partial value {}, last panel {})", gap,
            r.value, r.last_panel));
    }
    return r.value;
}

AffineSolution solve_affine_minus_particular(const IntensityModel& model,
                                             const CoefficientProcess& phi, const TimeGrid& grid) {
    if (!phi.deterministic()) throw DomainError("particular solution needs a deterministic phi");
    // Probe convergence at t = 0 first so divergence is reported before any grid work.
    (void)particular_integral(model, phi, model.horizon());
    auto exact = [model, phi](double gap) {
        if (!(gap > 0.0)) return 0.0;
        return -particular_integral(model, phi, gap);
    };
    return deterministic_solution(grid, AffineProvenance::ParticularSolution, exact, 0.0);
}

double ode_m(const IntensityModel& model, const CoefficientProcess& phi, double g) {
    const double T = model.horizon();
    if (!(g < T)) return 0.0;
    const double lam_g = model.cumulative_at_gap(g);
    const double g_star = std::max(g, T / 2);
    auto phi_gap = [&](double gamma) { return phi.at_gap(gamma, T); };
    auto direct = [&](double gamma) {
        return std::exp(-(lam_g - model.cumulative_at_gap(gamma))) * phi_gap(gamma);
    };
    double total = integrate(direct, g_star, T, kQuadTol).value;
    if (g_star > g) {
        if (!model.singular()) {
            total += integrate(direct, g, g_star, kQuadTol).value;
        } else {
            const double v_max = lam_g - model.cumulative_at_gap(g_star);
            auto f = [&](double v) {
                const double gamma = model.gap_at_cumulative(lam_g - v);
                return std::exp(-v) * phi_gap(gamma) / model.intensity_at_gap(gamma);
            };
            const auto edges = dyadic_edges(v_max);
            for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
                if (edges[k + 1] > edges[k]) total += integrate(f, edges[k], edges[k + 1], kQuadTol).value;
            }
        }
    }
    if (!std::isfinite(total)) throw NumericError(fmt::format("m(T - {}) is not finite", g));
    return total;
}

OdeClassification classify_ode(const IntensityModel& model, const CoefficientProcess& phi,
                               double tolerance) {
    if (!phi.deterministic()) throw DomainError("classify_ode needs a deterministic phi");
    OdeClassification out;
    out.tolerance = tolerance;
    const double T = model.horizon();
    for (int k = 1; k <= 12; ++k) {
        const double gap = T * std::pow(10.0, -k);
        out.limit_estimates.emplace_back(T - gap, ode_m(model, phi, gap));
    }
    const auto& e = out.limit_estimates;
    const std::size_t n = e.size();
    const bool cauchy = std::abs(e[n - 1].second - e[n - 2].second) <= tolerance &&
                        std::abs(e[n - 2].second - e[n - 3].second) <= tolerance;
    if (cauchy) {
        out.kind = OdeClassification::Case::ConvergesTo;
        out.limit = e[n - 1].second;
    }
    return out;
}

AffineSolution ode_family_member(const IntensityModel& model, const CoefficientProcess& phi,
                                 double y0, const TimeGrid& grid, double tolerance) {
    const auto cls = classify_ode(model, phi, tolerance);
    if (cls.kind != OdeClassification::Case::ConvergesTo) {
        throw DomainError("ODE family requested but m(t) does not converge at T");
    }
    auto exact = [model, phi, y0](double gap) {
        const double decay = gap > 0.0 ? std::exp(-model.cumulative_at_gap(gap)) : 0.0;
        return y0 * decay + ode_m(model, phi, gap);
    };
    AffineSolution sol = deterministic_solution(grid, AffineProvenance::OdeFamily, exact, cls.limit);
    sol.y0 = y0;
    const double T = model.horizon();
    auto driver = [&](double gap) {
        return std::abs(phi.at_gap(gap, T) - model.intensity_at_gap(gap) * exact(gap));
    };
    const double g_cap = grid.gaps[grid.cap_index];
    sol.integrability =
        g_cap > 0.0 ? integrate_dyadic(driver, g_cap, T, g_cap, 1e-10).value
                    : integrate(driver, 0.0, T, 1e-10).value;
    return sol;
}

AffineSolution superpose(const AffineSolution& a, const AffineSolution& b) {
    if (a.grid.times != b.grid.times) throw DomainError("superpose needs identical grids");
    if (a.paths != b.paths && a.paths != 1 && b.paths != 1) {
        throw DomainError("superpose needs matching path counts");
    }
    const AffineSolution& wide = a.paths >= b.paths ? a : b;
    const AffineSolution& narrow = a.paths >= b.paths ? b : a;
    AffineSolution out = wide;
    out.provenance = AffineProvenance::Superposition;
    out.y0 = a.y0 + b.y0;
    const std::size_t M = wide.paths;
    for (std::size_t i = 0; i < out.nodes(); ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            const std::size_t mm = narrow.paths == 1 ? 0 : m;
            out.y[i * M + m] += narrow.y_at(i, mm);
            if (narrow.dim == out.dim) {
                for (std::size_t k = 0; k < out.dim; ++k) {
                    out.z[(i * M + m) * out.dim + k] += narrow.z_at(i, mm, k);
                }
            }
        }
    }
    if (a.exact && b.exact) {
        auto ea = a.exact;
        auto eb = b.exact;
        out.exact = [ea, eb](double gap) { return ea(gap) + eb(gap); };
    } else {
        out.exact = nullptr;
    }
    out.bound_check.clear();
    out.integrability.reset();
    return out;
}

void write_affine_csv(const AffineSolution& sol, std::ostream& out) {
    out << "t,Y_mean,Y_sd,Z_mean,bound_check\n";
    for (std::size_t i = 0; i < sol.nodes(); ++i) {
        const auto st = sol.y_stats(i);
        const double zmean =
            deterministic_scalar_sum(sol.paths, Execution::Parallel,
                                     [&](std::size_t m) { return sol.z_at(i, m, 0); }) /
            static_cast<double>(sol.paths);
        const double bc = sol.bound_check.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : sol.bound_check[i];
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", sol.grid.times[i], st.mean,
                           std::sqrt(st.variance), zmean, bc);
    }
}

}  // namespace bsdelab
