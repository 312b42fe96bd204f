#include "bsdelab/paths.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/philox.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace bsdelab {

PathBundle::PathBundle(TimeGrid grid, std::size_t dim, std::size_t paths, std::uint64_t seed)
    : grid_(std::move(grid)), dim_(dim), paths_(paths), seed_(seed) {}

PathBundle simulate_paths(const TimeGrid& grid, std::size_t dim, std::size_t paths,
                          std::uint64_t seed, Execution exec, std::size_t memory_cap) {
    if (paths == 0) throw DomainError("simulate_paths needs M >= 1");
    if (dim == 0) throw DomainError("simulate_paths needs d >= 1");
    const std::size_t nodes = grid.size();
    const double elements = static_cast<double>(paths) * static_cast<double>(nodes) * dim;
    if (elements > static_cast<double>(memory_cap)) {
        throw ResourceLimit(fmt::format("M·N·d = {} exceeds the path memory cap {}", elements,
                                        memory_cap));
    }
    PathBundle b(grid, dim, paths, seed);
    b.increments_.assign((nodes - 1) * paths * dim, 0.0);
    b.levels_.assign(nodes * paths * dim, 0.0);
    std::vector<double> sd(nodes - 1);
    for (std::size_t i = 0; i + 1 < nodes; ++i) sd[i] = std::sqrt(grid.dt(i));

    parallel_for(paths, exec, [&](std::size_t m) {
        for (std::size_t i = 0; i + 1 < nodes; ++i) {
            for (std::size_t k = 0; k < dim; ++k) {
                const double dw = sd[i] * path_normal(seed, m, i * dim + k);
                const std::size_t at = (i * paths + m) * dim + k;
                b.increments_[at] = dw;
                b.levels_[((i + 1) * paths + m) * dim + k] = b.levels_[at] + dw;
            }
        }
    });
    return b;
}

std::vector<double> stochastic_integral(const PathBundle& bundle, std::span<const double> beta,
                                        Execution exec) {
    if (beta.size() + 1 != bundle.nodes()) {
        throw DomainError(fmt::format("integrand has {} values, grid has {} intervals", beta.size(),
                                      bundle.nodes() - 1));
    }
    std::vector<double> out(bundle.paths(), 0.0);
    parallel_for(bundle.paths(), exec, [&](std::size_t m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < beta.size(); ++i) {
            for (double dw : bundle.increment(i, m)) acc += beta[i] * dw;
        }
        out[m] = acc;
    });
    return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary dump assumes little-endian host");

void put_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

void write_paths(const PathBundle& bundle, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DomainError(fmt::format("cannot open {} for writing", file.string()));
    put_u64(out, bundle.seed());
    put_u64(out, bundle.paths());
    put_u64(out, bundle.nodes());
    put_u64(out, bundle.dim());
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        for (std::size_t i = 0; i + 1 < bundle.nodes(); ++i) {
            const auto dw = bundle.increment(i, m);
            out.write(reinterpret_cast<const char*>(dw.data()),
                      static_cast<std::streamsize>(dw.size() * sizeof(double)));
        }
    }
    if (!out) throw DomainError(fmt::format("write to {} failed", file.string()));
}

PathDump read_paths(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DomainError(fmt::format("cannot open {}", file.string()));
    PathDump d;
    d.seed = get_u64(in);
    d.paths = get_u64(in);
    d.nodes = get_u64(in);
    d.dim = get_u64(in);
    if (!in || d.nodes < 2) throw DomainError(fmt::format("{}: truncated header", file.string()));
    d.increments.resize(d.paths * (d.nodes - 1) * d.dim);
    in.read(reinterpret_cast<char*>(d.increments.data()),
            static_cast<std::streamsize>(d.increments.size() * sizeof(double)));
    if (!in) throw DomainError(fmt::format("{}: truncated payload", file.string()));
    return d;
}

}  // namespace bsdelab
