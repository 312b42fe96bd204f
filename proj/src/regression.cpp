#include "bsdelab/regression.hpp"
#include "bsdelab/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bsdelab {

RegressionBasis RegressionBasis::polynomial(int degree) {
    if (degree < 0) throw DomainError("polynomial basis degree must be >= 0");
    RegressionBasis b;
    b.kind = Kind::Polynomial;
    b.degree = degree;
    return b;
}

RegressionBasis RegressionBasis::piecewise_linear(std::vector<double> knots) {
    if (!std::is_sorted(knots.begin(), knots.end()) ||
        std::adjacent_find(knots.begin(), knots.end()) != knots.end()) {
        throw DomainError("piecewise-linear knots must be strictly increasing");
    }
    RegressionBasis b;
    b.kind = Kind::PiecewiseLinear;
    b.degree = 1;
    b.knots = std::move(knots);
    return b;
}

std::size_t RegressionBasis::size(std::size_t dim) const {
    if (kind == Kind::PiecewiseLinear) return 1 + dim * (1 + knots.size());
    // C(degree + dim, dim)
    std::size_t n = 1;
    for (std::size_t k = 1; k <= dim; ++k) {
        n = n * (static_cast<std::size_t>(degree) + k) / k;
    }
    return n;
}

void RegressionBasis::evaluate(std::span<const double> x, double* out) const {
    const std::size_t dim = x.size();
    out[0] = 1.0;
    if (kind == Kind::PiecewiseLinear) {
        std::size_t at = 1;
        for (std::size_t k = 0; k < dim; ++k) {
            out[at++] = x[k];
            for (double knot : knots) out[at++] = std::max(x[k] - knot, 0.0);
        }
        return;
    }
    // Graded monomials: each degree-q monomial extends a degree-(q−1) one by a variable with
    // index >= its last variable, so every monomial appears exactly once.
    std::size_t prev_begin = 0;
    std::size_t prev_end = 1;
    std::size_t at = 1;
    std::size_t last_var[NodeRegression::kMaxBasis] = {0};
    for (int q = 1; q <= degree; ++q) {
        for (std::size_t j = prev_begin; j < prev_end; ++j) {
            for (std::size_t k = last_var[j]; k < dim; ++k) {
                out[at] = out[j] * x[k];
                last_var[at] = k;
                ++at;
            }
        }
        prev_begin = prev_end;
        prev_end = at;
    }
}

std::string RegressionBasis::describe() const {
    if (kind == Kind::Polynomial) return fmt::format("polynomial({})", degree);
    return fmt::format("piecewise_linear({} knots)", knots.size());
}

double LinearFit::predict(std::span<const double> x, const RegressionBasis& basis,
                          std::size_t column) const {
    if (constant_only) return coefficients(0, static_cast<Eigen::Index>(column));
    double phi[NodeRegression::kMaxBasis];
    basis.evaluate(x, phi);
    double v = 0.0;
    for (Eigen::Index a = 0; a < coefficients.rows(); ++a) {
        v += phi[a] * coefficients(a, static_cast<Eigen::Index>(column));
    }
    return v;
}

NodeRegression::NodeRegression(const PathBundle& bundle, std::size_t node,
                               const RegressionBasis& basis, Execution exec, double cond_limit)
    : bundle_(bundle), node_(node), basis_(basis), exec_(exec) {
    const double t = bundle.grid().times[node];
    constant_only_ = !(t > 0.0);
    p_ = constant_only_ ? 1 : basis.size(bundle.dim());
    if (p_ > kMaxBasis) {
        throw DomainError(fmt::format("basis has {} functions, limit is {}", p_, kMaxBasis));
    }
    if (!constant_only_) scale_ = 1.0 / std::sqrt(t);

    const std::size_t p = p_;
    const auto sums = deterministic_sum(bundle.paths(), p * p, exec, [&](std::size_t m, double* acc) {
        double phi[kMaxBasis];
        row(m, phi);
        for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t b = 0; b < p; ++b) acc[a * p + b] += phi[a] * phi[b];
        }
    });
    Eigen::MatrixXd gram(p, p);
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b < p; ++b) gram(a, b) = sums[a * p + b];
    }

    Eigen::VectorXd d = gram.diagonal();
    if ((d.array() <= 0.0).any()) throw BasisDegenerate(node, INFINITY);
    Eigen::VectorXd inv_sqrt = d.array().rsqrt();
    Eigen::MatrixXd normalized = inv_sqrt.asDiagonal() * gram * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normalized, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : INFINITY;
    if (!(condition_ <= cond_limit)) throw BasisDegenerate(node, condition_);

    solver_.compute(gram);
    gram_inverse_ = solver_.solve(Eigen::MatrixXd::Identity(p, p));
}

void NodeRegression::features(std::size_t m, double* x) const {
    const auto w = bundle_.level(node_, m);
    for (std::size_t k = 0; k < w.size(); ++k) x[k] = w[k] * scale_;
}

void NodeRegression::row(std::size_t m, double* out) const {
    if (constant_only_) {
        out[0] = 1.0;
        return;
    }
    double x[kMaxBasis];
    features(m, x);
    basis_.evaluate(std::span<const double>(x, bundle_.dim()), out);
}

double NodeRegression::predict(const LinearFit& fit, std::size_t m, std::size_t column) const {
    double phi[kMaxBasis];
    row(m, phi);
    double v = 0.0;
    for (std::size_t a = 0; a < p_; ++a) {
        v += phi[a] * fit.coefficients(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(column));
    }
    return v;
}

}  // namespace bsdelab
