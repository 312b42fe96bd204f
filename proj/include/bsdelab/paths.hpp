#pragma once

#include "bsdelab/parallel.hpp"
#include "bsdelab/time_grid.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace bsdelab {

/// Brownian increments and levels for M paths on a grid.
///
/// Storage is node-major ([node][path][coordinate]) so the backward solvers read one node
/// contiguously. Path m is generated from its own Philox substream keyed by (seed, m), so the
/// arrays do not depend on how paths are split across workers.
class PathBundle {
public:
    PathBundle(TimeGrid grid, std::size_t dim, std::size_t paths, std::uint64_t seed);

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t paths() const noexcept { return paths_; }
    std::size_t nodes() const noexcept { return grid_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }

    /// ΔW over [t_i, t_{i+1}] for path m; i < N − 1.
    std::span<const double> increment(std::size_t i, std::size_t m) const noexcept {
        return {increments_.data() + (i * paths_ + m) * dim_, dim_};
    }
    /// W_{t_i} for path m.
    std::span<const double> level(std::size_t i, std::size_t m) const noexcept {
        return {levels_.data() + (i * paths_ + m) * dim_, dim_};
    }

    const std::vector<double>& raw_increments() const noexcept { return increments_; }
    const std::vector<double>& raw_levels() const noexcept { return levels_; }

private:
    friend PathBundle simulate_paths(const TimeGrid&, std::size_t, std::size_t, std::uint64_t,
                                     Execution, std::size_t);
    TimeGrid grid_;
    std::size_t dim_;
    std::size_t paths_;
    std::uint64_t seed_;
    std::vector<double> increments_;
    std::vector<double> levels_;
};

/// Default cap on M·N·d (per stored array).
inline constexpr std::size_t kDefaultPathMemoryCap = 50'000'000;

/// Independent N(0, Δt_i) increments per coordinate. Throws ResourceLimit when M·N·d exceeds
/// `memory_cap`, DomainError when M or d is zero.
PathBundle simulate_paths(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                          std::uint64_t seed, Execution exec = Execution::Parallel,
                          std::size_t memory_cap = kDefaultPathMemoryCap);

/// Σ_i β(t_i)·Σ_k ΔW^k[m][i] per path (left-point Itô sum). β has one value per interval.
std::vector<double> stochastic_integral(const PathBundle& bundle, std::span<const double> beta,
                                        Execution exec = Execution::Parallel);

/// Binary dump: little-endian u64 header {seed, M, N, d} followed by the increments as f64 in
/// path-major order [m][i][k].
void write_paths(const PathBundle& bundle, const std::filesystem::path& file);

struct PathDump {
    std::uint64_t seed = 0;
    std::uint64_t paths = 0;
    std::uint64_t nodes = 0;
    std::uint64_t dim = 0;
    std::vector<double> increments;  // path-major
};

PathDump read_paths(const std::filesystem::path& file);

}  // namespace bsdelab
