#include "bsdelab/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>

namespace bsdelab {

namespace {

using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;

// Boost's own adaptive driver compares the unscaled [-1, 1] error against a scaled tolerance,
// which never terminates on short intervals; only its single-panel rule is used here.
double panel(const std::function<double(double)>& f, double a, double b, double* error, double* l1) {
    double err = 0.0;
    double mass = 0.0;
    const double v = Rule::integrate(f, a, b, 0, 0.0, &err, &mass);
    *error = err * std::abs(b - a) / 2;
    *l1 = mass;
    return v;
}

double recurse(const std::function<double(double)>& f, double a, double b, double value,
               double error, double l1, double target, unsigned depth, QuadratureResult& out) {
    // Cancelling integrands never get below their roundoff level, so that level is accepted too.
    const double roundoff = 50.0 * std::numeric_limits<double>::epsilon() * l1;
    if (error <= target || error <= roundoff || depth == 0) {
        out.value += value;
        out.error += error;
        out.l1 += l1;
        return value;
    }
    const double mid = 0.5 * (a + b);
    double el, ll, er, lr;
    const double vl = panel(f, a, mid, &el, &ll);
    const double vr = panel(f, mid, b, &er, &lr);
    recurse(f, a, mid, vl, el, ll, target / 2, depth - 1, out);
    recurse(f, mid, b, vr, er, lr, target / 2, depth - 1, out);
    return vl + vr;
}

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_tol, unsigned max_depth) {
    QuadratureResult out;
    if (a == b) return out;
    double error = 0.0;
    double l1 = 0.0;
    const double value = panel(f, a, b, &error, &l1);
    const double target = rel_tol * l1;
    recurse(f, a, b, value, error, l1, target, max_depth, out);
    return out;
}

QuadratureResult integrate_dyadic(const std::function<double(double)>& f, double a, double b,
                                  double smallest, double rel_tol) {
    QuadratureResult out;
    double hi = b;
    double width = b - a;
    while (width > smallest && width > 0.0) {
        const double lo = a + width / 2;
        const auto piece = integrate(f, lo, hi, rel_tol);
        out.value += piece.value;
        out.error += piece.error;
        out.l1 += piece.l1;
        hi = lo;
        width /= 2;
    }
    if (hi > a) {
        const auto piece = integrate(f, a, hi, rel_tol);
        out.value += piece.value;
        out.error += piece.error;
        out.l1 += piece.l1;
    }
    return out;
}

}  // namespace bsdelab
