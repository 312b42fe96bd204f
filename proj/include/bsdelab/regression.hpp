#pragma once

#include "bsdelab/parallel.hpp"
#include "bsdelab/paths.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace bsdelab {

/// Basis functions of the standardized Brownian level x = W_t/√t.
///
/// Polynomial(q): all monomials of total degree ≤ q in the d coordinates.
/// PiecewiseLinear(knots): 1, x_k and the ramps (x_k − κ)⁺ for every coordinate k and knot κ.
struct RegressionBasis {
    enum class Kind { Polynomial, PiecewiseLinear };
    Kind kind = Kind::Polynomial;
    int degree = 3;
    std::vector<double> knots;

    static RegressionBasis polynomial(int degree);
    static RegressionBasis piecewise_linear(std::vector<double> knots);

    std::size_t size(std::size_t dim) const;
    /// Writes size(dim) values for the point x into out.
    void evaluate(std::span<const double> x, double* out) const;
    std::string describe() const;
};

/// Least-squares fit of one or more target columns on a common design.
struct LinearFit {
    Eigen::MatrixXd coefficients;  // basis size × targets
    Eigen::MatrixXd gram_inverse;  // (XᵀX)⁻¹, for delta-method errors
    double condition = 1.0;
    bool constant_only = false;

    double predict(std::span<const double> x, const RegressionBasis& basis, std::size_t column) const;
};

/// Regression at node `node` of a bundle: features are the standardized levels, except at a node
/// with t = 0 where only the constant is used. `targets(m, out)` writes `columns` values for
/// path m. Throws BasisDegenerate when the normalized Gram matrix has condition > cond_limit.
class NodeRegression {
public:
    NodeRegression(const PathBundle& bundle, std::size_t node, const RegressionBasis& basis,
                   Execution exec, double cond_limit = 1e12);

    bool constant_only() const noexcept { return constant_only_; }
    double condition() const noexcept { return condition_; }
    std::size_t basis_size() const noexcept { return p_; }

    /// Standardized feature point of path m.
    void features(std::size_t m, double* x) const;
    /// Basis row of path m.
    void row(std::size_t m, double* out) const;

    template <class Targets>
    LinearFit fit(std::size_t columns, Targets&& targets) const {
        const std::size_t p = p_;
        const auto moments = deterministic_sum(
            bundle_.paths(), p * columns, exec_, [&](std::size_t m, double* acc) {
                double phi[kMaxBasis];
                double y[kMaxColumns];
                row(m, phi);
                targets(m, y);
                for (std::size_t c = 0; c < columns; ++c) {
                    for (std::size_t a = 0; a < p; ++a) acc[c * p + a] += phi[a] * y[c];
                }
            });
        Eigen::MatrixXd rhs(p, columns);
        for (std::size_t c = 0; c < columns; ++c) {
            for (std::size_t a = 0; a < p; ++a) rhs(a, c) = moments[c * p + a];
        }
        LinearFit out;
        out.coefficients = solver_.solve(rhs);
        out.gram_inverse = gram_inverse_;
        out.condition = condition_;
        out.constant_only = constant_only_;
        return out;
    }

    double predict(const LinearFit& fit, std::size_t m, std::size_t column) const;

    static constexpr std::size_t kMaxBasis = 64;
    static constexpr std::size_t kMaxColumns = 16;

private:
    const PathBundle& bundle_;
    std::size_t node_;
    RegressionBasis basis_;
    Execution exec_;
    bool constant_only_ = false;
    std::size_t p_ = 1;
    double scale_ = 1.0;
    double condition_ = 1.0;
    Eigen::LDLT<Eigen::MatrixXd> solver_;
    Eigen::MatrixXd gram_inverse_;
};

}  // namespace bsdelab
