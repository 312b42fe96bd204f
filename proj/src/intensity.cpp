#include "bsdelab/coefficients.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/quadrature.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace bsdelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(fmt::format("{} must be a positive finite number (got {})", what, v));
    }
}

}  // namespace

IntensityModel::IntensityModel(IntensityKind kind, double parameter, double horizon)
    : kind_(kind), parameter_(parameter), horizon_(horizon) {
    require_positive(horizon, "horizon T");
}

IntensityModel IntensityModel::power_gap(double p, double horizon) {
    require_positive(p, "power_gap exponent p");
    return IntensityModel(IntensityKind::PowerGap, p, horizon);
}

IntensityModel IntensityModel::exp_gap(double gamma, double horizon) {
    require_positive(gamma, "exp_gap rate gamma");
    return IntensityModel(IntensityKind::ExpGap, gamma, horizon);
}

IntensityModel IntensityModel::bounded(double c, double horizon) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
        throw DomainError(fmt::format("bounded intensity must be nonnegative (got {})", c));
    }
    return IntensityModel(IntensityKind::Bounded, c, horizon);
}

IntensityModel IntensityModel::custom(std::function<double(double)> lambda, double horizon,
                                      bool singular) {
    if (!lambda) throw DomainError("custom intensity requires a callable");
    IntensityModel m(IntensityKind::Custom, 0.0, horizon);
    m.custom_ = std::move(lambda);
    m.custom_singular_ = singular;
    return m;
}

IntensityModel IntensityModel::truncated(double cap) const {
    require_positive(cap, "truncation level n");
    IntensityModel m = *this;
    m.cap_ = cap_ ? std::min(*cap_, cap) : cap;
    return m;
}

IntensityModel IntensityModel::untruncated() const {
    IntensityModel m = *this;
    m.cap_.reset();
    return m;
}

bool IntensityModel::singular() const noexcept {
    if (cap_) return false;
    switch (kind_) {
        case IntensityKind::PowerGap:
        case IntensityKind::ExpGap:
            return true;
        case IntensityKind::Bounded:
            return false;
        case IntensityKind::Custom:
            return custom_singular_;
    }
    return false;
}

double IntensityModel::sup_intensity() const {
    double raw = kInf;
    if (kind_ == IntensityKind::Bounded) raw = parameter_;
    return cap_ ? std::min(raw, *cap_) : raw;
}

double IntensityModel::raw_intensity_at_gap(double gap) const {
    switch (kind_) {
        case IntensityKind::PowerGap:
            return parameter_ / gap;
        case IntensityKind::ExpGap:
            return parameter_ / std::expm1(parameter_ * gap);
        case IntensityKind::Bounded:
            return parameter_;
        case IntensityKind::Custom:
            return custom_(horizon_ - gap);
    }
    return 0.0;
}

double IntensityModel::intensity_at_gap(double gap) const {
    if (gap < 0.0 || gap > horizon_) {
        throw DomainError(fmt::format("gap {} outside [0, {}]", gap, horizon_));
    }
    if (gap == 0.0 && singular()) {
        throw SingularEvaluation("intensity of a singular model evaluated at T");
    }
    if (gap == 0.0 && cap_ && kind_ != IntensityKind::Bounded && kind_ != IntensityKind::Custom) {
        return *cap_;
    }
    const double raw = raw_intensity_at_gap(gap);
    return cap_ ? std::min(raw, *cap_) : raw;
}

double IntensityModel::intensity(double t) const {
    if (t < 0.0) throw DomainError(fmt::format("time {} is negative", t));
    if (t >= horizon_ && singular()) {
        throw SingularEvaluation(fmt::format("intensity evaluated at t={} >= T={}", t, horizon_));
    }
    if (t > horizon_) throw DomainError(fmt::format("time {} beyond horizon {}", t, horizon_));
    return intensity_at_gap(horizon_ - t);
}

double IntensityModel::cap_crossing_gap() const {
    if (!cap_) return 0.0;
    const double n = *cap_;
    switch (kind_) {
        case IntensityKind::PowerGap:
            return std::min(parameter_ / n, horizon_);
        case IntensityKind::ExpGap:
            return std::min(std::log1p(parameter_ / n) / parameter_, horizon_);
        default:
            return 0.0;
    }
}

double IntensityModel::cumulative_at_gap(double gap) const {
    if (gap < 0.0 || gap > horizon_) {
        throw DomainError(fmt::format("gap {} outside [0, {}]", gap, horizon_));
    }
    if (gap == 0.0 && singular()) {
        throw SingularEvaluation("cumulative intensity of a singular model is infinite at T");
    }
    const double T = horizon_;
    switch (kind_) {
        case IntensityKind::PowerGap:
        case IntensityKind::ExpGap: {
            const double p = parameter_;
            auto raw = [&](double g) {
                if (kind_ == IntensityKind::PowerGap) return p * (std::log(T) - std::log(g));
                return std::log(-std::expm1(-p * T)) - std::log(-std::expm1(-p * g));
            };
            if (!cap_) return raw(gap);
            const double gc = cap_crossing_gap();
            if (gc >= T) return *cap_ * (T - gap);
            if (gap >= gc) return raw(gap);
            return raw(gc) + *cap_ * (gc - gap);
        }
        case IntensityKind::Bounded:
            return sup_intensity() * (T - gap);
        case IntensityKind::Custom:
            return custom_cumulative_at_gap(gap);
    }
    return 0.0;
}

double IntensityModel::custom_cumulative_at_gap(double gap) const {
    if (gap >= horizon_) return 0.0;
    auto lam = [this](double g) { return intensity_at_gap(g); };
    const double smallest = std::max(gap, std::numeric_limits<double>::min());
    return integrate_dyadic(lam, gap, horizon_, smallest, 1e-13).value;
}

double IntensityModel::cumulative(double t) const {
    if (t < 0.0) throw DomainError(fmt::format("time {} is negative", t));
    if (t >= horizon_ && singular()) {
        throw SingularEvaluation(
            fmt::format("cumulative intensity evaluated at t={} >= T={}", t, horizon_));
    }
    if (t > horizon_) throw DomainError(fmt::format("time {} beyond horizon {}", t, horizon_));
    return cumulative_at_gap(horizon_ - t);
}

double IntensityModel::total() const {
    if (singular()) return kInf;
    return cumulative_at_gap(0.0);
}

double IntensityModel::gap_at_cumulative(double level) const {
    if (level < 0.0 || std::isnan(level)) {
        throw DomainError(fmt::format("cumulative level {} is negative", level));
    }
    if (level == 0.0) return horizon_;
    const double total_mass = total();
    if (level >= total_mass) {
        throw DomainError(fmt::format("level {} not reachable: Λ(T) = {}", level, total_mass));
    }
    const double T = horizon_;
    switch (kind_) {
        case IntensityKind::PowerGap:
        case IntensityKind::ExpGap: {
            const double p = parameter_;
            auto raw_inverse = [&](double L) {
                if (kind_ == IntensityKind::PowerGap) return T * std::exp(-L / p);
                return -std::log1p(std::expm1(-p * T) * std::exp(-L)) / p;
            };
            if (!cap_) return raw_inverse(level);
            const double gc = cap_crossing_gap();
            if (gc >= T) return T - level / *cap_;
            const double lc = cumulative_at_gap(gc);
            if (level <= lc) return raw_inverse(level);
            return std::max(gc - (level - lc) / *cap_, 0.0);
        }
        case IntensityKind::Bounded:
            return T - level / sup_intensity();
        case IntensityKind::Custom:
            return custom_gap_at_cumulative(level);
    }
    return T;
}

double IntensityModel::custom_gap_at_cumulative(double level) const {
    // Λ is nonincreasing in the gap; bisect on log(gap).
    double hi = horizon_;
    double lo = horizon_ / 2;
    while (cumulative_at_gap(lo) < level) {
        hi = lo;
        lo /= 2;
        if (lo < 1e-300) throw NumericError("custom intensity: cannot bracket cumulative level");
    }
    for (int it = 0; it < 200 && hi / lo - 1.0 > 1e-15; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (cumulative_at_gap(mid) >= level) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return std::sqrt(lo * hi);
}

std::string IntensityModel::describe() const {
    std::string base;
    switch (kind_) {
        case IntensityKind::PowerGap:
            base = fmt::format("power_gap(p={}, T={})", parameter_, horizon_);
            break;
        case IntensityKind::ExpGap:
            base = fmt::format("exp_gap(gamma={}, T={})", parameter_, horizon_);
            break;
        case IntensityKind::Bounded:
            base = fmt::format("bounded(c={}, T={})", parameter_, horizon_);
            break;
        case IntensityKind::Custom:
            base = fmt::format("custom(T={}, singular={})", horizon_, custom_singular_);
            break;
    }
    if (cap_) base += fmt::format(" ∧ {}", *cap_);
    return base;
}

ValidationReport validate_standing_assumption(const IntensityModel& model,
                                              std::span<const double> epsilons, double threshold) {
    ValidationReport report;
    report.epsilons.assign(epsilons.begin(), epsilons.end());
    bool increasing = true;
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
        const double eps = epsilons[k];
        if (k > 0 && !(eps < epsilons[k - 1])) {
            report.failures.push_back(fmt::format("epsilons not strictly decreasing at index {}", k));
        }
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
            value = model.cumulative_at_gap(eps);
        } catch (const Error& e) {
            report.failures.push_back(fmt::format("Λ(T-{}) failed: {}", eps, e.what()));
        }
        if (!std::isfinite(value)) report.all_finite = false;
        if (k > 0 && !(value > report.values.back())) increasing = false;
        report.values.push_back(value);
    }
    report.diverges = report.all_finite && increasing && !report.values.empty() &&
                      report.values.back() > threshold;
    return report;
}

}  // namespace bsdelab
