// Serial reference vs OpenMP kernels. Both produce bit-identical results; only the wall time differs.
#include "bsdelab/lipschitz_solver.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/time_grid.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace bsdelab;

namespace {

const IntensityModel kPg = IntensityModel::power_gap(1.0, 1.0);

Execution exec_of(const benchmark::State& state) {
    return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

void label(benchmark::State& state) {
    state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void BM_simulate_paths(benchmark::State& state) {
    const auto grid = make_grid(kPg, 41, GridScheme::lambda_equidistributed(5.0));
    for (auto _ : state) {
        auto bundle = simulate_paths(grid, 1, 20000, 7, exec_of(state));
        benchmark::DoNotOptimize(bundle);
    }
    label(state);
}

void BM_regression_mc(benchmark::State& state) {
    const auto truncated = kPg.truncated(16.0);
    const auto grid = make_grid(kPg, 41, GridScheme::lambda_equidistributed(5.0));
    const auto bundle = simulate_paths(grid, 1, 20000, 7);
    BsdeProblem p;
    p.intensity = truncated;
    p.phi = CoefficientProcess::markovian(
        [](double, std::span<const double> w) { return 0.5 * (1 + std::sin(w[0])); }, 1.0);
    p.form = EquationForm::NonlinearPlus;
    p.driver = DriverSpec::exp_utility(1.0);
    SolverConfig cfg;
    cfg.mode = SolveMode::RegressionMC;
    cfg.exec = exec_of(state);
    for (auto _ : state) {
        auto sol = solve_regression_mc(p, bundle, cfg);
        benchmark::DoNotOptimize(sol);
    }
    label(state);
}

void BM_deterministic_sum(benchmark::State& state) {
    const std::size_t n = 1 << 22;
    for (auto _ : state) {
        const double s = deterministic_scalar_sum(n, exec_of(state), [](std::size_t i) {
            return std::sin(static_cast<double>(i) * 1e-3);
        });
        benchmark::DoNotOptimize(s);
    }
    label(state);
}

}  // namespace

BENCHMARK(BM_simulate_paths)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_regression_mc)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_deterministic_sum)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
