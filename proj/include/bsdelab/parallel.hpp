#pragma once

#include <cmath>
#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bsdelab {

/// Serial is the reference implementation kept for testing; Parallel uses OpenMP. Both produce
/// bit-identical results because reductions go through fixed chunks and a fixed pairwise tree.
enum class Execution { Serial, Parallel };

void set_worker_count(int workers);
int worker_count();

/// Paths per reduction chunk. Independent of the worker count by design.
inline constexpr std::size_t kReductionChunk = 2048;

/// In-place pairwise tree sum over `parts` vectors of width `width` laid out contiguously.
/// Result lands in parts[0 .. width).
void pairwise_reduce(std::vector<double>& parts, std::size_t count, std::size_t width);

/// body(i) for i in [0, n). In parallel mode the first exception thrown by any item is rethrown
/// after the loop, since exceptions cannot leave an OpenMP region.
template <class Body>
void parallel_for(std::size_t n, Execution exec, Body&& body) {
    if (exec == Execution::Parallel) {
        const auto sn = static_cast<long long>(n);
        std::exception_ptr failure;
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < sn; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(bsdelab_parallel_for_failure)
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
    } else {
        for (std::size_t i = 0; i < n; ++i) body(i);
    }
}

/// Deterministic vector-valued sum Σ_i contribution(i): `accumulate(i, acc)` adds item i into
/// acc[0 .. width). Items are summed sequentially inside fixed chunks, chunk partials are combined
/// by pairwise_reduce.
template <class Accumulate>
std::vector<double> deterministic_sum(std::size_t n, std::size_t width, Execution exec,
                                      Accumulate&& accumulate) {
    const std::size_t chunks = n == 0 ? 1 : (n + kReductionChunk - 1) / kReductionChunk;
    std::vector<double> parts(chunks * width, 0.0);
    parallel_for(chunks, exec, [&](std::size_t c) {
        double* acc = parts.data() + c * width;
        const std::size_t lo = c * kReductionChunk;
        const std::size_t hi = lo + kReductionChunk < n ? lo + kReductionChunk : n;
        for (std::size_t i = lo; i < hi; ++i) accumulate(i, acc);
    });
    pairwise_reduce(parts, chunks, width);
    parts.resize(width);
    return parts;
}

template <class Value>
double deterministic_scalar_sum(std::size_t n, Execution exec, Value&& value) {
    return deterministic_sum(n, 1, exec, [&](std::size_t i, double* acc) { acc[0] += value(i); })[0];
}

struct SampleStats {
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Mean and variance of value(i), i in [0, n), via deterministic reductions (two passes).
template <class Value>
SampleStats sample_stats(std::size_t n, Execution exec, Value&& value) {
    SampleStats s;
    s.count = n;
    if (n == 0) return s;
    s.mean = deterministic_scalar_sum(n, exec, value) / static_cast<double>(n);
    if (n > 1) {
        const double m = s.mean;
        const double ss = deterministic_scalar_sum(n, exec, [&](std::size_t i) {
            const double d = value(i) - m;
            return d * d;
        });
        s.variance = ss / static_cast<double>(n - 1);
        s.std_error = std::sqrt(s.variance / static_cast<double>(n));
    }
    return s;
}

}  // namespace bsdelab
