#include "bsdelab/time_grid.hpp"
#include "bsdelab/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bsdelab {

TimeGrid TimeGrid::from_times(std::vector<double> times) {
    if (times.size() < 2) throw DomainError("a time grid needs at least two points");
    if (times.front() != 0.0) throw DomainError("a time grid must start at 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw DomainError(fmt::format("grid not strictly increasing at index {}", i));
        }
    }
    TimeGrid g;
    const double T = times.back();
    g.gaps.reserve(times.size());
    for (double t : times) g.gaps.push_back(T - t);
    g.times = std::move(times);
    g.cap_index = g.times.size() - 2;
    return g;
}

namespace {

TimeGrid from_gaps(std::vector<double> gaps, double horizon) {
    TimeGrid g;
    g.times.reserve(gaps.size());
    for (double gap : gaps) g.times.push_back(horizon - gap);
    g.times.front() = 0.0;
    g.times.back() = horizon;
    for (std::size_t i = 1; i < g.times.size(); ++i) {
        if (!(gaps[i] < gaps[i - 1]) || !(g.times[i] > g.times[i - 1])) {
            throw InfeasibleGrid(fmt::format("grid nodes coincide at index {}", i));
        }
    }
    g.gaps = std::move(gaps);
    g.cap_index = g.times.size() - 2;
    return g;
}

}  // namespace

TimeGrid make_grid(const IntensityModel& model, std::size_t n, const GridScheme& scheme) {
    if (n < 2) throw DomainError("make_grid needs N >= 2");
    const double T = model.horizon();
    std::vector<double> gaps;
    switch (scheme.kind) {
        case GridScheme::Kind::Uniform: {
            for (std::size_t i = 0; i < n; ++i) {
                gaps.push_back(T * static_cast<double>(n - 1 - i) / static_cast<double>(n - 1));
            }
            return from_gaps(std::move(gaps), T);
        }
        case GridScheme::Kind::LambdaEquidistributed: {
            if (!(scheme.lambda_max > 0.0) || !std::isfinite(scheme.lambda_max)) {
                throw DomainError("Λ_max must be positive and finite");
            }
            if (!(model.total() > scheme.lambda_max)) {
                throw InfeasibleGrid(fmt::format("Λ(T) = {} does not exceed Λ_max = {}",
                                                 model.total(), scheme.lambda_max));
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double level =
                    scheme.lambda_max * static_cast<double>(i) / static_cast<double>(n - 1);
                gaps.push_back(model.gap_at_cumulative(level));
            }
            gaps.push_back(0.0);
            TimeGrid g = from_gaps(std::move(gaps), T);
            g.terminal_collapsed = true;
            return g;
        }
        case GridScheme::Kind::GeometricTail: {
            if (!(scheme.ratio > 0.0 && scheme.ratio < 1.0)) {
                throw DomainError("geometric tail ratio must lie in (0, 1)");
            }
            if (!(scheme.eps_min > 0.0 && scheme.eps_min < T)) {
                throw DomainError("geometric tail eps_min must lie in (0, T)");
            }
            const double h = T / static_cast<double>(n - 1);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                gaps.push_back(T * static_cast<double>(n - 1 - i) / static_cast<double>(n - 1));
            }
            for (double g = h * scheme.ratio; g >= scheme.eps_min; g *= scheme.ratio) {
                gaps.push_back(g);
            }
            gaps.push_back(0.0);
            return from_gaps(std::move(gaps), T);
        }
    }
    throw DomainError("unknown grid scheme");
}

}  // namespace bsdelab
