#pragma once

#include "bsdelab/coefficients.hpp"

#include <cstddef>
#include <vector>

namespace bsdelab {

/// Strictly increasing partition 0 = t_0 < ... < t_{N-1} = T.
///
/// Gaps T − t_i are stored alongside the times so that step sizes near T keep full relative
/// precision. `cap_index` marks t_cap, the last node strictly before T; when
/// `terminal_collapsed` is set the interval [t_cap, T] stands for the whole unresolved tail.
struct TimeGrid {
    std::vector<double> times;
    std::vector<double> gaps;
    std::size_t cap_index = 0;
    bool terminal_collapsed = false;

    std::size_t size() const noexcept { return times.size(); }
    double horizon() const noexcept { return times.back(); }
    double t_cap() const noexcept { return times[cap_index]; }
    /// t_{i+1} − t_i computed from the gaps.
    double dt(std::size_t i) const noexcept { return gaps[i] - gaps[i + 1]; }

    /// Builds a grid from explicit times; throws DomainError unless strictly increasing from 0.
    static TimeGrid from_times(std::vector<double> times);
};

struct GridScheme {
    enum class Kind { Uniform, LambdaEquidistributed, GeometricTail };
    Kind kind = Kind::Uniform;
    double lambda_max = 12.0;
    double ratio = 0.5;
    double eps_min = 1e-4;

    static GridScheme uniform() { return {}; }
    static GridScheme lambda_equidistributed(double lambda_max) {
        return {Kind::LambdaEquidistributed, lambda_max, 0.5, 1e-4};
    }
    static GridScheme geometric_tail(double ratio, double eps_min) {
        return {Kind::GeometricTail, 12.0, ratio, eps_min};
    }
};

/// Uniform: N equally spaced points. LambdaEquidistributed: N nodes with Λ(t_i) = i·Λ_max/(N−1)
/// followed by T. GeometricTail: N uniform points refined by gaps h·ratio^k ≥ eps_min to T.
TimeGrid make_grid(const IntensityModel& model, std::size_t n, const GridScheme& scheme);

}  // namespace bsdelab
