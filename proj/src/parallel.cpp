#include "bsdelab/parallel.hpp"
#include "bsdelab/errors.hpp"

namespace bsdelab {

void set_worker_count(int workers) {
    if (workers < 1) throw DomainError("worker count must be at least 1");
#ifdef _OPENMP
    omp_set_num_threads(workers);
#endif
}

int worker_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void pairwise_reduce(std::vector<double>& parts, std::size_t count, std::size_t width) {
    for (std::size_t stride = 1; stride < count; stride *= 2) {
        for (std::size_t a = 0; a + stride < count; a += 2 * stride) {
            double* dst = parts.data() + a * width;
            const double* src = parts.data() + (a + stride) * width;
            for (std::size_t k = 0; k < width; ++k) dst[k] += src[k];
        }
    }
}

}  // namespace bsdelab
