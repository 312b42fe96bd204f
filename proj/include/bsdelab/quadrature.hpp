#pragma once

#include <functional>

namespace bsdelab {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;  // ∫|f|
};

/// Adaptive Gauss–Kronrod (7/15) on [a, b] with relative tolerance and bisection depth.
/// Nodes are interior, so f is never evaluated at a or b.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_tol = 1e-12, unsigned max_depth = 20);

/// Sum of adaptive integrals over dyadic panels [a + w/2^(k+1), a + w/2^k] ending at b = a + w,
/// down to `a + smallest`. Suited to integrands with an integrable blow-up at `a`.
QuadratureResult integrate_dyadic(const std::function<double(double)>& f, double a, double b,
                                  double smallest, double rel_tol = 1e-12);

}  // namespace bsdelab
