#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsdelab {

enum class IntensityKind { PowerGap, ExpGap, Bounded, Custom };

/// Deterministic intensity λ on [0,T] together with its cumulative Λ(t) = ∫₀ᵗ λ.
///
/// Singular kinds (PowerGap, ExpGap, and Custom declared singular) have Λ(t) < ∞
/// for t < T and Λ(t) → ∞ as t → T. Every function has a "gap" variant taking the
/// distance T − t, which keeps full relative precision when t is within a few ulps of T.
///
/// A model may carry a cap n, in which case it represents the truncation λ ∧ n; capped
/// models are bounded and never singular.
class IntensityModel {
public:
    static IntensityModel power_gap(double p, double horizon);
    static IntensityModel exp_gap(double gamma, double horizon);
    static IntensityModel bounded(double c, double horizon);
    static IntensityModel custom(std::function<double(double)> lambda, double horizon,
                                 bool singular);

    /// λ ∧ cap. Capping an already capped model keeps the smaller cap.
    IntensityModel truncated(double cap) const;
    /// The same model without any cap.
    IntensityModel untruncated() const;

    IntensityKind kind() const noexcept { return kind_; }
    double horizon() const noexcept { return horizon_; }
    /// p, γ or c depending on kind (0 for Custom).
    double parameter() const noexcept { return parameter_; }
    std::optional<double> cap() const noexcept { return cap_; }
    bool singular() const noexcept;
    /// sup λ for bounded models, +inf otherwise.
    double sup_intensity() const;

    double intensity(double t) const;
    double intensity_at_gap(double gap) const;

    /// Λ(t). Throws SingularEvaluation for t >= T on singular models, DomainError for t < 0.
    double cumulative(double t) const;
    double cumulative_at_gap(double gap) const;
    /// Λ(T); +inf for singular models.
    double total() const;

    /// Gap T − t solving Λ(t) = level. Throws DomainError when level >= Λ(T).
    double gap_at_cumulative(double level) const;
    double time_at_cumulative(double level) const { return horizon_ - gap_at_cumulative(level); }

    std::string describe() const;

private:
    IntensityModel(IntensityKind kind, double parameter, double horizon);
    double raw_intensity_at_gap(double gap) const;
    double custom_cumulative_at_gap(double gap) const;
    double custom_gap_at_cumulative(double level) const;
    /// Gap below which the raw intensity exceeds the cap (0 when never, horizon when always).
    double cap_crossing_gap() const;

    IntensityKind kind_;
    double parameter_;
    double horizon_;
    bool custom_singular_ = false;
    std::optional<double> cap_;
    std::function<double(double)> custom_;
};

struct ValidationReport {
    std::vector<double> epsilons;
    std::vector<double> values;  // Λ(T − ε)
    bool all_finite = true;
    bool diverges = false;
    std::vector<std::string> failures;
};

/// Probes Λ(T − ε) along strictly decreasing ε. Never throws; problems land in `failures`.
ValidationReport validate_standing_assumption(const IntensityModel& model,
                                              std::span<const double> epsilons, double threshold);

enum class CoefficientKind { Constant, DetFunction, Markovian, ExpMinusLambda };

/// The coefficient process φ. Markovian coefficients are functions of (t, W_t).
class CoefficientProcess {
public:
    using TimeFunction = std::function<double(double)>;
    using MarkovFunction = std::function<double(double, std::span<const double>)>;

    static CoefficientProcess constant(double value);
    /// Bound ‖φ‖∞ is computed by dense sampling on [0, horizon] when not supplied.
    static CoefficientProcess deterministic(TimeFunction fn, double horizon,
                                            std::optional<double> bound = std::nullopt);
    /// Deterministic φ given as a function of the gap T − t; exact for t within ulps of T.
    static CoefficientProcess deterministic_in_gap(TimeFunction fn_of_gap, double horizon,
                                                   std::optional<double> bound = std::nullopt);
    static CoefficientProcess markovian(MarkovFunction fn, double bound);
    /// φ_t = e^{−Λ_t}.
    static CoefficientProcess exp_minus_lambda(const IntensityModel& model);

    CoefficientKind kind() const noexcept { return kind_; }
    bool deterministic() const noexcept { return kind_ != CoefficientKind::Markovian; }
    double bound() const noexcept { return bound_; }

    double operator()(double t) const;
    double operator()(double t, std::span<const double> w) const;
    /// φ(T − gap); exact near T for ExpMinusLambda.
    double at_gap(double gap, double horizon) const;

    /// Sampled check φ ≥ −slack. For Markovian coefficients w ranges over [−wmax, wmax].
    bool nonnegative(double horizon, double slack = 1e-12, std::size_t samples = 2001) const;
    std::string describe() const;

private:
    CoefficientKind kind_ = CoefficientKind::Constant;
    double value_ = 0.0;
    double bound_ = 0.0;
    TimeFunction time_fn_;
    TimeFunction gap_fn_;
    double gap_horizon_ = 0.0;
    MarkovFunction markov_fn_;
    std::optional<IntensityModel> intensity_;
};

struct DriverFlags {
    bool zero_at_zero = false;
    bool nondecreasing = false;
    bool below_identity = false;  // f(x) − x ≤ 0 for all x
    double delta = 0.0;           // lower bound of f′ on x ≤ 0
};

/// Scalar map f entering the driver as λ f(Y).
struct DriverSpec {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> fprime;
    DriverFlags flags;

    double operator()(double x) const { return f(x); }
    double derivative(double x) const { return fprime(x); }

    static DriverSpec identity();
    static DriverSpec neg_identity();
    /// f(x) = α⁻¹(1 − e^{−αx}); δ is exactly 1.
    static DriverSpec exp_utility(double alpha);

    /// Flags needed by the nonlinear existence theorem.
    bool theorem_flags() const noexcept {
        return flags.zero_at_zero && flags.nondecreasing && flags.below_identity &&
               flags.delta > 0.0;
    }
};

struct FlagCheck {
    bool zero_at_zero = true;
    bool nondecreasing = true;
    bool below_identity = true;
    bool delta = true;
    double worst_monotone_drop = 0.0;
    double worst_identity_excess = 0.0;
    double worst_delta_shortfall = 0.0;
    bool all() const noexcept { return zero_at_zero && nondecreasing && below_identity && delta; }
};

/// Verifies the declared flags of `driver` by sampling [lo, hi]; only declared flags are tested.
FlagCheck verify_flags(const DriverSpec& driver, double lo, double hi, std::size_t samples = 4001,
                       double slack = 1e-12);

enum class EquationForm {
    PlusLambdaY,   // dY = (φ + λY + bY + σZ) dt + Z dW
    MinusLambdaY,  // dY = (φ − λY + bY + σZ) dt + Z dW
    NonlinearPlus  // dY = (φ + λ f(Y) + bY + σZ) dt + Z dW
};

struct TerminalValue {
    enum class Kind { Zero, Constant, Random };
    Kind kind = Kind::Zero;
    double value = 0.0;
    std::function<double(std::span<const double>)> random;

    static TerminalValue zero() { return {}; }
    static TerminalValue constant(double a);
    static TerminalValue random_of_level(std::function<double(std::span<const double>)> fn);

    bool is_zero() const noexcept { return kind == Kind::Zero || (kind == Kind::Constant && value == 0.0); }
    bool deterministic() const noexcept { return kind != Kind::Random; }
    double operator()(std::span<const double> w_terminal) const;
};

/// A BSDE on [0,T] written as dY = g(t, Y, Z) dt + Z dW, Y_T = A.
struct BsdeProblem {
    IntensityModel intensity = IntensityModel::bounded(0.0, 1.0);
    CoefficientProcess phi = CoefficientProcess::constant(0.0);
    DriverSpec driver = DriverSpec::identity();
    EquationForm form = EquationForm::PlusLambdaY;
    TerminalValue terminal;
    double y_slope = 0.0;
    double z_slope = 0.0;

    double horizon() const noexcept { return intensity.horizon(); }

    /// The λ-term's map: identity for the affine forms, f otherwise.
    double f(double y) const;
    double fprime(double y) const;
    /// Signed coefficient in front of λ f(Y): −1 for MinusLambdaY, +1 otherwise.
    double lambda_sign() const noexcept { return form == EquationForm::MinusLambdaY ? -1.0 : 1.0; }

    /// g(t, y, z) given the already-evaluated λ(t), φ(t, W_t) and Σ_k z_k.
    double generator(double lambda, double phi_value, double y, double z_sum) const {
        return phi_value + lambda_sign() * lambda * f(y) + y_slope * y + z_slope * z_sum;
    }
    double generator_dy(double lambda, double y) const {
        return lambda_sign() * lambda * fprime(y) + y_slope;
    }

    /// Structural checks; throws DomainError. NonlinearPlus needs the theorem flags and φ ≥ 0.
    void validate() const;
    /// Same problem with λ replaced by λ ∧ n.
    BsdeProblem truncated(double n) const;
};

}  // namespace bsdelab
