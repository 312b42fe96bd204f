#include "bsdelab/coefficients.hpp"
#include "bsdelab/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace bsdelab {

CoefficientProcess CoefficientProcess::constant(double value) {
    if (!std::isfinite(value)) throw DomainError("constant coefficient must be finite");
    CoefficientProcess c;
    c.kind_ = CoefficientKind::Constant;
    c.value_ = value;
    c.bound_ = std::abs(value);
    return c;
}

CoefficientProcess CoefficientProcess::deterministic(TimeFunction fn, double horizon,
                                                     std::optional<double> bound) {
    if (!fn) throw DomainError("deterministic coefficient requires a callable");
    CoefficientProcess c;
    c.kind_ = CoefficientKind::DetFunction;
    c.time_fn_ = std::move(fn);
    if (bound) {
        if (!(*bound >= 0.0) || !std::isfinite(*bound)) {
            throw DomainError("coefficient bound must be finite and nonnegative");
        }
        c.bound_ = *bound;
    } else {
        constexpr int kSamples = 10001;
        double b = 0.0;
        for (int k = 0; k < kSamples; ++k) {
            const double v = c.time_fn_(horizon * k / kSamples);
            if (!std::isfinite(v)) {
                throw DomainError(fmt::format("coefficient not finite at t={}", horizon * k / kSamples));
            }
            b = std::max(b, std::abs(v));
        }
        c.bound_ = b;
    }
    return c;
}

CoefficientProcess CoefficientProcess::deterministic_in_gap(TimeFunction fn_of_gap, double horizon,
                                                           std::optional<double> bound) {
    if (!fn_of_gap) throw DomainError("deterministic coefficient requires a callable");
    auto shifted = [fn_of_gap, horizon](double t) { return fn_of_gap(horizon - t); };
    CoefficientProcess c = deterministic(shifted, horizon, bound);
    c.gap_fn_ = std::move(fn_of_gap);
    c.gap_horizon_ = horizon;
    return c;
}

CoefficientProcess CoefficientProcess::markovian(MarkovFunction fn, double bound) {
    if (!fn) throw DomainError("Markovian coefficient requires a callable");
    if (!(bound >= 0.0) || !std::isfinite(bound)) {
        throw DomainError("Markovian coefficient needs a finite nonnegative bound");
    }
    CoefficientProcess c;
    c.kind_ = CoefficientKind::Markovian;
    c.markov_fn_ = std::move(fn);
    c.bound_ = bound;
    return c;
}

CoefficientProcess CoefficientProcess::exp_minus_lambda(const IntensityModel& model) {
    CoefficientProcess c;
    c.kind_ = CoefficientKind::ExpMinusLambda;
    c.intensity_ = model;
    c.bound_ = 1.0;
    return c;
}

double CoefficientProcess::operator()(double t) const {
    switch (kind_) {
        case CoefficientKind::Constant:
            return value_;
        case CoefficientKind::DetFunction:
            return time_fn_(t);
        case CoefficientKind::ExpMinusLambda:
            return at_gap(intensity_->horizon() - t, intensity_->horizon());
        case CoefficientKind::Markovian:
            throw DomainError("Markovian coefficient needs the Brownian level");
    }
    return 0.0;
}

double CoefficientProcess::operator()(double t, std::span<const double> w) const {
    if (kind_ == CoefficientKind::Markovian) return markov_fn_(t, w);
    return (*this)(t);
}

double CoefficientProcess::at_gap(double gap, double horizon) const {
    if (kind_ == CoefficientKind::ExpMinusLambda) {
        if (gap <= 0.0 && intensity_->singular()) return 0.0;
        return std::exp(-intensity_->cumulative_at_gap(gap));
    }
    if (gap_fn_ && horizon == gap_horizon_) return gap_fn_(gap);
    return (*this)(horizon - gap);
}

bool CoefficientProcess::nonnegative(double horizon, double slack, std::size_t samples) const {
    switch (kind_) {
        case CoefficientKind::Constant:
            return value_ >= -slack;
        case CoefficientKind::ExpMinusLambda:
            return true;
        case CoefficientKind::DetFunction:
            for (std::size_t k = 0; k < samples; ++k) {
                if (time_fn_(horizon * k / samples) < -slack) return false;
            }
            return true;
        case CoefficientKind::Markovian: {
            const double wmax = 8.0 * std::sqrt(horizon);
            const std::size_t side = std::max<std::size_t>(2, static_cast<std::size_t>(std::sqrt(samples)));
            for (std::size_t a = 0; a < side; ++a) {
                const double t = horizon * a / side;
                for (std::size_t b = 0; b <= side; ++b) {
                    const double w = -wmax + 2.0 * wmax * b / side;
                    if (markov_fn_(t, std::span<const double>(&w, 1)) < -slack) return false;
                }
            }
            return true;
        }
    }
    return false;
}

std::string CoefficientProcess::describe() const {
    switch (kind_) {
        case CoefficientKind::Constant:
            return fmt::format("constant({})", value_);
        case CoefficientKind::DetFunction:
            return fmt::format("deterministic(bound={})", bound_);
        case CoefficientKind::Markovian:
            return fmt::format("markovian(bound={})", bound_);
        case CoefficientKind::ExpMinusLambda:
            return "exp_minus_lambda";
    }
    return "?";
}

DriverSpec DriverSpec::identity() {
    return {"identity", [](double x) { return x; }, [](double) { return 1.0; },
            DriverFlags{true, true, true, 1.0}};
}

DriverSpec DriverSpec::neg_identity() {
    return {"neg_identity", [](double x) { return -x; }, [](double) { return -1.0; },
            DriverFlags{true, false, false, -1.0}};
}

DriverSpec DriverSpec::exp_utility(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw DomainError(fmt::format("exp_utility alpha must be positive (got {})", alpha));
    }
    return {fmt::format("exp_utility(alpha={})", alpha),
            [alpha](double x) { return -std::expm1(-alpha * x) / alpha; },
            [alpha](double x) { return std::exp(-alpha * x); }, DriverFlags{true, true, true, 1.0}};
}

FlagCheck verify_flags(const DriverSpec& driver, double lo, double hi, std::size_t samples,
                       double slack) {
    if (!(lo < hi) || samples < 2) throw DomainError("verify_flags needs lo < hi and >= 2 samples");
    FlagCheck out;
    const auto& fl = driver.flags;
    if (fl.zero_at_zero) out.zero_at_zero = std::abs(driver.f(0.0)) <= slack;
    double prev = driver.f(lo);
    for (std::size_t j = 0; j < samples; ++j) {
        const double x = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(samples - 1);
        const double fx = driver.f(x);
        if (fl.nondecreasing && j > 0) {
            out.worst_monotone_drop = std::max(out.worst_monotone_drop, prev - fx);
        }
        if (fl.below_identity) {
            out.worst_identity_excess = std::max(out.worst_identity_excess, fx - x);
        }
        if (fl.delta > 0.0 && x <= 0.0) {
            out.worst_delta_shortfall =
                std::max(out.worst_delta_shortfall, fl.delta - driver.fprime(x));
        }
        prev = fx;
    }
    if (fl.delta > 0.0) {
        out.worst_delta_shortfall = std::max(out.worst_delta_shortfall, fl.delta - driver.fprime(0.0));
    }
    out.nondecreasing = out.worst_monotone_drop <= slack;
    out.below_identity = out.worst_identity_excess <= slack;
    out.delta = out.worst_delta_shortfall <= slack;
    return out;
}

TerminalValue TerminalValue::constant(double a) {
    if (!std::isfinite(a)) throw DomainError("terminal value must be finite");
    TerminalValue v;
    v.kind = Kind::Constant;
    v.value = a;
    return v;
}

TerminalValue TerminalValue::random_of_level(std::function<double(std::span<const double>)> fn) {
    if (!fn) throw DomainError("random terminal value requires a callable");
    TerminalValue v;
    v.kind = Kind::Random;
    v.random = std::move(fn);
    return v;
}

double TerminalValue::operator()(std::span<const double> w_terminal) const {
    switch (kind) {
        case Kind::Zero:
            return 0.0;
        case Kind::Constant:
            return value;
        case Kind::Random:
            return random(w_terminal);
    }
    return 0.0;
}

double BsdeProblem::f(double y) const {
    return form == EquationForm::NonlinearPlus ? driver.f(y) : y;
}

double BsdeProblem::fprime(double y) const {
    return form == EquationForm::NonlinearPlus ? driver.fprime(y) : 1.0;
}

void BsdeProblem::validate() const {
    if (!std::isfinite(y_slope) || !std::isfinite(z_slope)) {
        throw DomainError("y_slope and z_slope must be finite");
    }
    if (form != EquationForm::NonlinearPlus) return;
    if (!driver.theorem_flags()) {
        throw DomainError(fmt::format(
            "driver '{}' lacks the flags zero_at_zero, nondecreasing, below_identity, delta > 0",
            driver.name));
    }
    const double T = horizon();
    const double lo = std::min(-10.0 * T * phi.bound(), -1.0);
    const auto check = verify_flags(driver, lo, 10.0);
    if (!check.all()) {
        throw DomainError(fmt::format("driver '{}' violates its declared flags on [{}, 10]",
                                      driver.name, lo));
    }
    if (!phi.nonnegative(T)) throw DomainError("nonlinear problems require phi >= 0");
}

BsdeProblem BsdeProblem::truncated(double n) const {
    BsdeProblem p = *this;
    p.intensity = intensity.truncated(n);
    return p;
}

}  // namespace bsdelab
