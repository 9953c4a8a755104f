#pragma once

#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace piggyback {

enum class ModelKind {
    OlsStandard,
    OlsSimpleInterp,
    OlsDoubleInterp,
    Ridge,
    Logistic,
    Huber,
    Hinge,
};

inline constexpr std::array<std::pair<ModelKind, std::string_view>, 7> kModelKindNames{{
    {ModelKind::OlsStandard, "ols-standard"},
    {ModelKind::OlsSimpleInterp, "ols-simple-interp"},
    {ModelKind::OlsDoubleInterp, "ols-double-interp"},
    {ModelKind::Ridge, "ridge"},
    {ModelKind::Logistic, "logistic"},
    {ModelKind::Huber, "huber"},
    {ModelKind::Hinge, "hinge"},
}};

constexpr std::string_view to_string(ModelKind kind) noexcept
{
    for (const auto& [k, name] : kModelKindNames) {
        if (k == kind) {
            return name;
        }
    }
    return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name)
{
    for (const auto& [k, n] : kModelKindNames) {
        if (n == name) {
            return k;
        }
    }
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

constexpr bool is_least_squares(ModelKind kind) noexcept
{
    return kind == ModelKind::OlsStandard || kind == ModelKind::OlsSimpleInterp
        || kind == ModelKind::OlsDoubleInterp;
}

/// Families whose gradient is affine in (x, theta): constant Hessians.
constexpr bool is_quadratic(ModelKind kind) noexcept
{
    return is_least_squares(kind) || kind == ModelKind::Ridge;
}

constexpr bool is_smooth(ModelKind kind) noexcept
{
    return kind != ModelKind::Huber && kind != ModelKind::Hinge;
}

/// Seeded description of a model instance; the data matrix is generated.
struct ModelSpec {
    ModelKind kind = ModelKind::Ridge;
    Index d = 10;
    Index m = 100;
    std::uint64_t seed = 0;
    double reg = 0.05;
    double huber_delta = 0.1;
};

struct SampleDerivatives {
    double value = 0.0;
    Vector grad_x;
    Matrix hess_xx;
    Matrix hess_xtheta;
};

/// Scalar coefficients of one sample's derivatives. Every family is a
/// function of a_ξᵀx (plus the regularizer), so with a = a_ξ and λ = reg:
///
///   grad_x      = slope · a + 2λ x
///   hess_xx     = curvature · a aᵀ + 2λ I
///   hess_xtheta = a wᵀ,  w = cross · e_ξ   (column layout)
///                        w = cross · a     (data-row layout, double interpolation)
struct SampleTerms {
    double value = 0.0;
    double slope = 0.0;
    double curvature = 0.0;
    double cross = 0.0;
};

struct AdmissibilityReport {
    bool differentiable = true;
    bool twice_differentiable = true;
    bool per_sample_strongly_convex = true;
    bool gradient_lipschitz = true;
    bool hessian_lipschitz = true;
    std::optional<double> strong_convexity; ///< per-sample constant when it holds
    std::optional<double> hessian_lipschitz_constant; ///< when θ-independent

    [[nodiscard]] bool assumption1_holds() const noexcept
    {
        return twice_differentiable && per_sample_strongly_convex && gradient_lipschitz
            && hessian_lipschitz;
    }
};

namespace detail {

    inline double sigmoid(double t) noexcept
    {
        if (t >= 0.0) {
            return 1.0 / (1.0 + std::exp(-t));
        }
        const double e = std::exp(t);
        return e / (1.0 + e);
    }

    /// log(1 + exp(t)) without overflow.
    inline double softplus(double t) noexcept
    {
        return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }

} // namespace detail

/// A parametric finite-sum objective F(x, θ) = (1/m) Σ_ξ f(x, θ; ξ) with
/// hand-derived per-sample derivatives.
///
/// Sample indices are zero based. The parameter dimension is m except for
/// double interpolation least squares, where θ ∈ R^d.
class Model {
public:
    Model(ModelKind kind, const Matrix& data, double reg = 0.0, double huber_delta = 0.1)
        : kind_(kind)
        , rows_(data.transpose())
        , reg_(reg)
        , delta_(huber_delta)
    {
        if (data.rows() < 1 || data.cols() < 1) {
            throw ConfigError("model data matrix must be non-empty");
        }
        if (!data.allFinite()) {
            throw ConfigError("model data matrix has non-finite entries");
        }
        if (is_least_squares(kind)) {
            if (reg != 0.0) {
                throw ConfigError("least-squares families are unregularized (reg must be 0)");
            }
            if (data.cols() > data.rows()) {
                throw ConfigError("least-squares families need d <= m");
            }
            const Matrix gram = data.transpose() * data;
            const double defect = (gram - Matrix::Identity(data.cols(), data.cols())).cwiseAbs().maxCoeff();
            if (defect > 1e-10) {
                throw ConfigError("least-squares families need a data matrix with orthonormal columns");
            }
        } else if (!(reg > 0.0)) {
            throw ConfigError(std::string(to_string(kind)) + " needs reg > 0");
        }
        if (kind == ModelKind::Huber && !(huber_delta > 0.0)) {
            throw ConfigError("huber_delta must be positive");
        }
    }

    /// Draws a standard Gaussian m×d matrix from the seed and orthonormalizes
    /// its columns (thin Householder QR).
    static Model generate(const ModelSpec& spec)
    {
        if (spec.d < 1 || spec.m < 1) {
            throw ConfigError("model dimensions must be positive");
        }
        if (spec.d > spec.m) {
            throw ConfigError("orthonormal data needs d <= m");
        }
        return Model(spec.kind, orthonormal_gaussian(spec.m, spec.d, spec.seed),
            is_least_squares(spec.kind) ? 0.0 : spec.reg, spec.huber_delta);
    }

    static Matrix orthonormal_gaussian(Index m, Index d, std::uint64_t seed)
    {
        SplitMix64 rng(derive_seed(seed, "data-matrix"));
        Matrix g(m, d);
        // row-major fill order is part of the reproducibility contract
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < d; ++j) {
                g(i, j) = rng.normal();
            }
        }
        Eigen::HouseholderQR<Matrix> qr(g);
        Matrix q = qr.householderQ() * Matrix::Identity(m, d);
        // fix the sign ambiguity of QR so that R has a positive diagonal
        const Matrix& r = qr.matrixQR();
        for (Index j = 0; j < d; ++j) {
            if (r(j, j) < 0.0) {
                q.col(j) = -q.col(j);
            }
        }
        return q;
    }

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
    [[nodiscard]] Index dim() const noexcept { return rows_.rows(); }
    [[nodiscard]] Index num_samples() const noexcept { return rows_.cols(); }
    [[nodiscard]] Index param_dim() const noexcept
    {
        return kind_ == ModelKind::OlsDoubleInterp ? dim() : num_samples();
    }
    [[nodiscard]] double reg() const noexcept { return reg_; }
    [[nodiscard]] double huber_delta() const noexcept { return delta_; }
    [[nodiscard]] bool data_row_cross() const noexcept { return kind_ == ModelKind::OlsDoubleInterp; }

    /// Data matrix A (m×d).
    [[nodiscard]] Matrix data() const { return rows_.transpose(); }

    /// Sample vector a_ξ.
    [[nodiscard]] auto sample_vector(Index xi) const { return rows_.col(xi); }

    /// Structured derivatives of sample ξ; inputs are not validated.
    [[nodiscard]] SampleTerms sample_terms(const Vector& x, const Vector& theta, Index xi) const
    {
        const auto a = rows_.col(xi);
        const double t = a.dot(x);
        SampleTerms s;
        switch (kind_) {
        case ModelKind::OlsStandard:
        case ModelKind::OlsSimpleInterp:
        case ModelKind::Ridge: {
            const double r = t - theta[xi];
            s = {0.5 * r * r, r, 1.0, -1.0};
            break;
        }
        case ModelKind::OlsDoubleInterp: {
            const double r = t - a.dot(theta);
            s = {0.5 * r * r, r, 1.0, -1.0};
            break;
        }
        case ModelKind::Logistic: {
            const double label = theta[xi];
            const double u = label * t;
            const double sm = detail::sigmoid(-u);
            const double sp = detail::sigmoid(u);
            s.value = detail::softplus(-u);
            s.slope = -label * sm;
            s.curvature = label * label * sp * sm;
            s.cross = -sm + u * sp * sm;
            break;
        }
        case ModelKind::Huber: {
            const double r = theta[xi] - t;
            if (std::abs(r) <= delta_) {
                s = {0.5 * r * r, -r, 1.0, -1.0};
            } else {
                s = {delta_ * (std::abs(r) - 0.5 * delta_), -delta_ * std::copysign(1.0, r), 0.0, 0.0};
            }
            break;
        }
        case ModelKind::Hinge: {
            const double label = theta[xi];
            const double margin = label * t;
            if (margin < 1.0) {
                s = {1.0 - margin, -label, 0.0, -1.0};
            }
            break;
        }
        }
        if (reg_ != 0.0) {
            s.value += reg_ * x.squaredNorm();
        }
        return s;
    }

    /// Adds the cross term row w (see SampleTerms) into `row` (length p).
    template <typename Derived>
    void add_cross_row(Eigen::MatrixBase<Derived>& row, Index xi, double cross) const
    {
        if (data_row_cross()) {
            row += cross * rows_.col(xi);
        } else {
            row[xi] += cross;
        }
    }

    [[nodiscard]] SampleDerivatives evaluate_sample(const Vector& x, const Vector& theta, Index xi) const
    {
        validate(x, theta, xi);
        return expand(sample_terms(x, theta, xi), x, xi);
    }

    /// Exact expectation over the uniform sample distribution.
    [[nodiscard]] SampleDerivatives evaluate_full(const Vector& x, const Vector& theta) const
    {
        validate(x, theta, 0);
        const Index d = dim();
        SampleDerivatives out{0.0, Vector::Zero(d), Matrix::Zero(d, d), Matrix::Zero(d, param_dim())};
        for (Index xi = 0; xi < num_samples(); ++xi) {
            const SampleDerivatives s = expand(sample_terms(x, theta, xi), x, xi);
            out.value += s.value;
            out.grad_x += s.grad_x;
            out.hess_xx += s.hess_xx;
            out.hess_xtheta += s.hess_xtheta;
        }
        const double inv_m = 1.0 / static_cast<double>(num_samples());
        out.value *= inv_m;
        out.grad_x *= inv_m;
        out.hess_xx *= inv_m;
        out.hess_xtheta *= inv_m;
        return out;
    }

    [[nodiscard]] double full_value(const Vector& x, const Vector& theta) const
    {
        double v = 0.0;
        for (Index xi = 0; xi < num_samples(); ++xi) {
            v += sample_terms(x, theta, xi).value;
        }
        return v / static_cast<double>(num_samples());
    }

    [[nodiscard]] Vector full_gradient(const Vector& x, const Vector& theta) const
    {
        Vector g = Vector::Zero(dim());
        for (Index xi = 0; xi < num_samples(); ++xi) {
            g += sample_terms(x, theta, xi).slope * rows_.col(xi);
        }
        g /= static_cast<double>(num_samples());
        g += 2.0 * reg_ * x;
        return g;
    }

    /// Which parts of the smoothness / strong convexity assumptions hold,
    /// decided analytically per family.
    [[nodiscard]] AdmissibilityReport check_assumptions() const
    {
        AdmissibilityReport r;
        switch (kind_) {
        case ModelKind::OlsStandard:
        case ModelKind::OlsSimpleInterp:
        case ModelKind::OlsDoubleInterp: {
            // per-sample Hessian a aᵀ is rank one
            const double min_sq = rows_.colwise().squaredNorm().minCoeff();
            r.per_sample_strongly_convex = dim() == 1 && min_sq > 0.0;
            if (r.per_sample_strongly_convex) {
                r.strong_convexity = min_sq;
            }
            r.hessian_lipschitz_constant = 0.0;
            break;
        }
        case ModelKind::Ridge:
            r.strong_convexity = 2.0 * reg_;
            r.hessian_lipschitz_constant = 0.0;
            break;
        case ModelKind::Logistic:
            r.strong_convexity = 2.0 * reg_;
            break;
        case ModelKind::Huber:
            r.strong_convexity = 2.0 * reg_;
            r.twice_differentiable = false;
            r.hessian_lipschitz = false;
            break;
        case ModelKind::Hinge:
            r.strong_convexity = 2.0 * reg_;
            r.differentiable = false;
            r.twice_differentiable = false;
            r.gradient_lipschitz = false;
            r.hessian_lipschitz = false;
            break;
        }
        return r;
    }

    void validate(const Vector& x, const Vector& theta, Index xi) const
    {
        if (x.size() != dim() || theta.size() != param_dim()) {
            throw ShapeError("model: x or theta has the wrong dimension");
        }
        if (xi < 0 || xi >= num_samples()) {
            throw std::out_of_range("model: sample index " + std::to_string(xi) + " out of range");
        }
        if (!x.allFinite() || !theta.allFinite()) {
            throw std::domain_error("model: non-finite x or theta");
        }
    }

private:
    [[nodiscard]] SampleDerivatives expand(const SampleTerms& s, const Vector& x, Index xi) const
    {
        const auto a = rows_.col(xi);
        const Index d = dim();
        SampleDerivatives out;
        out.value = s.value;
        out.grad_x = s.slope * a + 2.0 * reg_ * x;
        out.hess_xx = s.curvature * (a * a.transpose());
        out.hess_xx.diagonal().array() += 2.0 * reg_;
        out.hess_xtheta = Matrix::Zero(d, param_dim());
        if (data_row_cross()) {
            out.hess_xtheta = s.cross * (a * a.transpose());
        } else {
            out.hess_xtheta.col(xi) = s.cross * a;
        }
        return out;
    }

    ModelKind kind_;
    Matrix rows_; // d×m, column ξ is a_ξ
    double reg_;
    double delta_;
};

} // namespace piggyback
