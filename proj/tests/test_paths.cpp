#include "bsdelab/coefficients.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/parallel.hpp"
#include "bsdelab/paths.hpp"
#include "bsdelab/regression.hpp"
#include "bsdelab/time_grid.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

using namespace bsdelab;

namespace {

TimeGrid uniform(std::size_t n, double T = 1.0) {
    return make_grid(IntensityModel::bounded(1.0, T), n, GridScheme::uniform());
}

}  // namespace

TEST(Paths, SinglePathIsReproducible) {
    const auto g = uniform(2);
    const auto a = simulate_paths(g, 1, 1, 42);
    const auto b = simulate_paths(g, 1, 1, 42);
    EXPECT_EQ(a.raw_increments(), b.raw_increments());
    EXPECT_EQ(a.level(0, 0)[0], 0.0);
    EXPECT_EQ(a.level(1, 0)[0], a.increment(0, 0)[0]);
    EXPECT_NE(simulate_paths(g, 1, 1, 43).raw_increments(), a.raw_increments());
}

TEST(Paths, LevelsTelescopeExactly) {
    const auto g = make_grid(IntensityModel::power_gap(1.0, 1.0), 30, GridScheme::lambda_equidistributed(6.0));
    const auto b = simulate_paths(g, 2, 500, 3);
    for (std::size_t m = 0; m < b.paths(); ++m) {
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_EQ(b.level(0, m)[k], 0.0);
            for (std::size_t i = 0; i + 1 < b.nodes(); ++i) {
                EXPECT_EQ(b.level(i + 1, m)[k], b.level(i, m)[k] + b.increment(i, m)[k]);
            }
        }
    }
}

TEST(Paths, TerminalMoments) {
    const std::size_t M = 100000;
    const auto b = simulate_paths(uniform(2), 1, M, 11);
    const auto s = sample_stats(M, Execution::Parallel, [&](std::size_t m) { return b.level(1, m)[0]; });
    EXPECT_LE(std::abs(s.mean), 4.0 / std::sqrt(double(M)));
    EXPECT_NEAR(s.variance, 1.0, 0.05);
}

TEST(Paths, BrownianCovariance) {
    const std::size_t M = 100000;
    const auto b = simulate_paths(uniform(11), 1, M, 5);
    const auto s = sample_stats(M, Execution::Parallel,
                                [&](std::size_t m) { return b.level(5, m)[0] * b.level(10, m)[0]; });
    EXPECT_NEAR(s.mean, 0.5, 4.0 * s.std_error);
}

TEST(Paths, IndependentCoordinates) {
    const std::size_t M = 100000;
    const auto b = simulate_paths(uniform(2), 3, M, 8);
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t c = a + 1; c < 3; ++c) {
            const auto s = sample_stats(M, Execution::Parallel,
                                        [&](std::size_t m) { return b.level(1, m)[a] * b.level(1, m)[c]; });
            EXPECT_NEAR(s.mean, 0.0, 4.0 * s.std_error);
        }
    }
}

TEST(Paths, StochasticIntegralExamples) {
    const auto g = uniform(21);
    const auto b = simulate_paths(g, 1, 1000, 9);
    const std::vector<double> zero(g.size() - 1, 0.0);
    for (double v : stochastic_integral(b, zero)) EXPECT_EQ(v, 0.0);
    const std::vector<double> one(g.size() - 1, 1.0);
    const auto w = stochastic_integral(b, one);
    for (std::size_t m = 0; m < b.paths(); ++m) EXPECT_NEAR(w[m], b.level(g.size() - 1, m)[0], 1e-13);
}

TEST(Paths, ItoIsometry) {
    const auto model = IntensityModel::power_gap(1.0, 1.0);
    const auto g = make_grid(model, 60, GridScheme::lambda_equidistributed(6.0));
    const std::size_t M = 100000;
    const auto b = simulate_paths(g, 1, M, 21);
    std::vector<double> beta(g.size() - 1);
    double expected = 0.0;
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
        beta[i] = std::exp(-model.cumulative_at_gap(g.gaps[i]));
        expected += beta[i] * beta[i] * g.dt(i);
    }
    const auto v = stochastic_integral(b, beta);
    const auto s = sample_stats(M, Execution::Serial, [&](std::size_t m) { return v[m]; });
    EXPECT_NEAR(s.variance, expected, 0.05 * expected);
    // Standard error of the sample variance for a Gaussian: σ²·sqrt(2/(M−1)).
    EXPECT_NEAR(s.variance, expected, 5.0 * expected * std::sqrt(2.0 / (M - 1)));
}

TEST(Paths, BitIdenticalAcrossWorkerCountsAndSerial) {
    const auto g = make_grid(IntensityModel::power_gap(1.0, 1.0), 25, GridScheme::lambda_equidistributed(5.0));
    const auto ref = simulate_paths(g, 2, 10007, 77, Execution::Serial);
    const int saved = worker_count();
    for (int w : {1, 4, 8}) {
        set_worker_count(w);
        const auto b = simulate_paths(g, 2, 10007, 77, Execution::Parallel);
        EXPECT_EQ(b.raw_increments(), ref.raw_increments()) << w;
        EXPECT_EQ(b.raw_levels(), ref.raw_levels()) << w;
        std::vector<double> beta(g.size() - 1, 0.3);
        EXPECT_EQ(stochastic_integral(b, beta), stochastic_integral(ref, beta, Execution::Serial));
    }
    set_worker_count(saved);
}

TEST(Paths, DeterministicReductionsIndependentOfWorkers) {
    const std::size_t n = 123457;
    auto value = [](std::size_t i) { return std::sin(double(i)) * 1e3 + 1e-7 * double(i); };
    const double ref = deterministic_scalar_sum(n, Execution::Serial, value);
    const int saved = worker_count();
    for (int w : {1, 2, 4, 8}) {
        set_worker_count(w);
        EXPECT_EQ(deterministic_scalar_sum(n, Execution::Parallel, value), ref);
    }
    set_worker_count(saved);
}

TEST(Paths, GuardsAndDumpRoundTrip) {
    const auto g = uniform(5);
    EXPECT_THROW(simulate_paths(g, 1, 0, 1), DomainError);
    EXPECT_THROW(simulate_paths(g, 0, 10, 1), DomainError);
    EXPECT_THROW(simulate_paths(g, 1, 1000, 1, Execution::Parallel, 100), ResourceLimit);

    const auto b = simulate_paths(g, 2, 7, 13);
    const auto file = std::filesystem::temp_directory_path() / "bsdelab_paths_roundtrip.bin";
    write_paths(b, file);
    const auto d = read_paths(file);
    std::filesystem::remove(file);
    EXPECT_EQ(d.seed, 13u);
    EXPECT_EQ(d.paths, 7u);
    EXPECT_EQ(d.nodes, 5u);
    EXPECT_EQ(d.dim, 2u);
    for (std::size_t m = 0; m < 7; ++m) {
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t k = 0; k < 2; ++k) {
                EXPECT_EQ(d.increments[(m * 4 + i) * 2 + k], b.increment(i, m)[k]);
            }
        }
    }
}

TEST(Regression, RecoversPolynomialTargetsExactly) {
    const auto g = uniform(5);
    const auto b = simulate_paths(g, 1, 4000, 2);
    const std::size_t node = 2;
    NodeRegression reg(b, node, RegressionBasis::polynomial(3), Execution::Parallel);
    EXPECT_FALSE(reg.constant_only());
    const auto fit = reg.fit(1, [&](std::size_t m, double* out) {
        const double w = b.level(node, m)[0];
        out[0] = 1.0 - 2.0 * w + 0.5 * w * w * w;
    });
    for (std::size_t m = 0; m < b.paths(); m += 97) {
        const double w = b.level(node, m)[0];
        EXPECT_NEAR(reg.predict(fit, m, 0), 1.0 - 2.0 * w + 0.5 * w * w * w, 1e-9);
    }
}

TEST(Regression, ConstantOnlyAtTimeZeroAndBasisSizes) {
    const auto b = simulate_paths(uniform(3), 1, 100, 2);
    NodeRegression reg(b, 0, RegressionBasis::polynomial(3), Execution::Serial);
    EXPECT_TRUE(reg.constant_only());
    const auto fit = reg.fit(1, [](std::size_t m, double* out) { out[0] = double(m % 2); });
    EXPECT_NEAR(reg.predict(fit, 0, 0), 0.5, 1e-14);

    EXPECT_EQ(RegressionBasis::polynomial(3).size(1), 4u);
    EXPECT_EQ(RegressionBasis::polynomial(2).size(2), 6u);
    EXPECT_EQ(RegressionBasis::piecewise_linear({-1.0, 0.0, 1.0}).size(1), 5u);
}
