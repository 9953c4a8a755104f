#pragma once

#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace piggyback {

/// Anything exposing per-sample derivatives as dense matrices.
template <typename P>
concept ParametricProblem = requires(const P& p, const Vector& v, Index i) {
    { p.dim() } -> std::convertible_to<Index>;
    { p.param_dim() } -> std::convertible_to<Index>;
    { p.num_samples() } -> std::convertible_to<Index>;
    { p.evaluate_sample(v, v, i) };
};

/// Problems whose per-sample Hessian is rank one plus a scaled identity;
/// the engine then never forms hess_xx.
template <typename P>
concept RankOneProblem = ParametricProblem<P> && requires(const P& p, const Vector& v, Index i, Vector& row) {
    { p.sample_terms(v, v, i) };
    { p.sample_vector(i) };
    { p.reg() } -> std::convertible_to<double>;
    p.add_cross_row(row, i, 0.0);
};

struct JointState {
    std::size_t k = 0;
    Vector x;
    Matrix D;
};

/// Step-size rule η_k.
class StepSchedule {
public:
    struct Constant {
        double eta;
    };
    /// η_k = c / (k + u)
    struct InverseK {
        double c;
        double u;
    };
    /// η_k = 2 / (μ (k + 8κ²)), κ = L/μ
    struct TheoremDecay {
        double mu;
        double L;
    };

    static StepSchedule constant(double eta)
    {
        if (!(eta > 0.0) || !std::isfinite(eta)) {
            throw ConfigError("constant step must be positive and finite");
        }
        return StepSchedule(Constant{eta});
    }

    static StepSchedule inverse_k(double c, double u)
    {
        if (!(c > 0.0) || !(u > 0.0) || !std::isfinite(c) || !std::isfinite(u)) {
            throw ConfigError("inverse-k schedule needs c > 0 and u > 0");
        }
        return StepSchedule(InverseK{c, u});
    }

    static StepSchedule theorem_decay(double mu, double L)
    {
        if (!(mu > 0.0) || !(L >= mu) || !std::isfinite(L)) {
            throw ConfigError("theorem-decay schedule needs 0 < mu <= L");
        }
        return StepSchedule(TheoremDecay{mu, L});
    }

    [[nodiscard]] double operator()(std::size_t k) const
    {
        const double kk = static_cast<double>(k);
        return std::visit(
            [kk](const auto& s) -> double {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Constant>) {
                    return s.eta;
                } else if constexpr (std::is_same_v<S, InverseK>) {
                    return s.c / (kk + s.u);
                } else {
                    const double kappa = s.L / s.mu;
                    return 2.0 / (s.mu * (kk + 8.0 * kappa * kappa));
                }
            },
            rule_);
    }

    /// Decaying-schedule admissibility against the problem constants (μ, L):
    /// constant steps need η ≤ μ/(4L²); c/(k+u) needs c ≥ 2/μ and u ≥ 8κ².
    void validate_for_theorem(double mu, double L) const
    {
        constexpr double rel = 1e-12;
        const double kappa = L / mu;
        if (const auto* c = std::get_if<Constant>(&rule_)) {
            if (c->eta > mu / (4.0 * L * L) * (1.0 + rel)) {
                throw ConfigError("constant step exceeds mu/(4 L^2)");
            }
        } else if (const auto* ik = std::get_if<InverseK>(&rule_)) {
            if (ik->c < 2.0 / mu * (1.0 - rel) || ik->u < 8.0 * kappa * kappa * (1.0 - rel)) {
                throw ConfigError("inverse-k schedule needs c >= 2/mu and u >= 8 kappa^2");
            }
        } else {
            const auto& t = std::get<TheoremDecay>(rule_);
            if (t.mu > mu * (1.0 + rel) || t.L < L * (1.0 - rel)) {
                throw ConfigError("theorem-decay constants must under-estimate mu and over-estimate L");
            }
        }
    }

    [[nodiscard]] std::string id() const
    {
        std::ostringstream os;
        os.precision(17);
        std::visit(
            [&os](const auto& s) {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, Constant>) {
                    os << "constant(eta=" << s.eta << ")";
                } else if constexpr (std::is_same_v<S, InverseK>) {
                    os << "inverse-k(c=" << s.c << ",u=" << s.u << ")";
                } else {
                    os << "theorem-decay(mu=" << s.mu << ",L=" << s.L << ")";
                }
            },
            rule_);
        return os.str();
    }

    [[nodiscard]] bool is_constant() const noexcept { return std::holds_alternative<Constant>(rule_); }

private:
    using Rule = std::variant<Constant, InverseK, TheoremDecay>;
    explicit StepSchedule(Rule r) : rule_(r) {}
    Rule rule_;
};

struct Trajectory {
    std::vector<JointState> states;
    std::string schedule_id;
    std::uint64_t seed = 0;
    /// Stream position of the draw used for the first step; the index used
    /// to go from k to k+1 is SampleStream(seed, m).at(stream_offset + k).
    std::uint64_t stream_offset = 0;
    std::string model_id;
};

namespace detail {

    /// In-place joint update (SGD) + (SGD'); derivatives at the pre-update x.
    template <ParametricProblem P>
    void joint_update(const P& problem, Vector& x, Matrix& D, const Vector& theta, double eta, Index xi,
        Vector& scratch)
    {
        if constexpr (RankOneProblem<P>) {
            const auto terms = problem.sample_terms(x, theta, xi);
            const auto a = problem.sample_vector(xi);
            const double two_reg = 2.0 * problem.reg();
            // r = curvature·Dᵀa + w, so hess_xx·D + hess_xθ = a rᵀ + 2λ D
            scratch.noalias() = D.transpose() * a;
            scratch *= terms.curvature;
            problem.add_cross_row(scratch, xi, terms.cross);
            D *= 1.0 - eta * two_reg;
            D.noalias() -= (eta * a) * scratch.transpose();
            x *= 1.0 - eta * two_reg;
            x.noalias() -= (eta * terms.slope) * a;
        } else {
            const auto s = problem.evaluate_sample(x, theta, xi);
            Matrix step = s.hess_xx * D + s.hess_xtheta;
            D.noalias() -= eta * step;
            x.noalias() -= eta * s.grad_x;
        }
    }

    template <ParametricProblem P>
    void sgd_update(const P& problem, Vector& x, const Vector& theta, double eta, Index xi)
    {
        if constexpr (RankOneProblem<P>) {
            const auto terms = problem.sample_terms(x, theta, xi);
            x *= 1.0 - eta * 2.0 * problem.reg();
            x.noalias() -= (eta * terms.slope) * problem.sample_vector(xi);
        } else {
            x -= eta * problem.evaluate_sample(x, theta, xi).grad_x;
        }
    }

    inline void check_finite(const JointState& s)
    {
        if (!s.x.allFinite() || !s.D.allFinite()) {
            throw OverflowError(s.k);
        }
    }

    template <ParametricProblem P>
    void check_shapes(const P& problem, const Vector& theta, const Vector& x0, const Matrix* D0)
    {
        if (theta.size() != problem.param_dim() || x0.size() != problem.dim()) {
            throw ShapeError("engine: theta or x0 has the wrong dimension");
        }
        if (D0 != nullptr && (D0->rows() != problem.dim() || D0->cols() != problem.param_dim())) {
            throw ShapeError("engine: D0 must be d x p");
        }
    }

} // namespace detail

/// One step of the joint recursion using sample ξ:
///   x⁺ = x − η ∇ₓf(x,θ;ξ)
///   D⁺ = D − η (∇²ₓₓf(x,θ;ξ) D + ∇²ₓθf(x,θ;ξ))
template <ParametricProblem P>
[[nodiscard]] JointState joint_step(const P& problem, const JointState& state, const Vector& theta,
    double eta, Index xi)
{
    if (!(eta >= 0.0)) {
        throw ConfigError("joint_step: step size must be non-negative");
    }
    detail::check_shapes(problem, theta, state.x, &state.D);
    if (xi < 0 || xi >= problem.num_samples()) {
        throw std::out_of_range("joint_step: sample index out of range");
    }
    JointState next{state.k + 1, state.x, state.D};
    Vector scratch(problem.param_dim());
    detail::joint_update(problem, next.x, next.D, theta, eta, xi, scratch);
    detail::check_finite(next);
    return next;
}

/// Runs num_iters joint steps, calling on_snapshot(const JointState&) at
/// k = 0, stride, 2·stride, ... and at the final iterate. Finiteness is
/// checked at snapshots only.
template <ParametricProblem P, typename OnSnapshot>
JointState run_observed(const P& problem, const Vector& theta, const Vector& x0, const Matrix& D0,
    const StepSchedule& schedule, SampleStream& stream, std::size_t num_iters, std::size_t stride,
    OnSnapshot&& on_snapshot)
{
    if (num_iters < 1) {
        throw ConfigError("run: num_iters must be at least 1");
    }
    if (stride < 1) {
        throw ConfigError("run: stride must be at least 1");
    }
    detail::check_shapes(problem, theta, x0, &D0);
    if (static_cast<Index>(stream.num_samples()) != problem.num_samples()) {
        throw ShapeError("run: sample stream size differs from the model's sample count");
    }
    JointState state{0, x0, D0};
    Vector scratch(problem.param_dim());
    on_snapshot(std::as_const(state));
    for (std::size_t k = 0; k < num_iters; ++k) {
        const double eta = schedule(k);
        const auto xi = static_cast<Index>(stream.next_index());
        detail::joint_update(problem, state.x, state.D, theta, eta, xi, scratch);
        state.k = k + 1;
        if (state.k % stride == 0 || state.k == num_iters) {
            detail::check_finite(state);
            on_snapshot(std::as_const(state));
        }
    }
    return state;
}

template <ParametricProblem P>
[[nodiscard]] Trajectory run(const P& problem, const Vector& theta, const Vector& x0, const Matrix& D0,
    const StepSchedule& schedule, SampleStream& stream, std::size_t num_iters, std::size_t stride = 1)
{
    Trajectory traj;
    traj.schedule_id = schedule.id();
    traj.seed = stream.seed();
    traj.stream_offset = stream.position();
    run_observed(problem, theta, x0, D0, schedule, stream, num_iters, stride,
        [&traj](const JointState& s) { traj.states.push_back(s); });
    return traj;
}

/// Default initialization ∂θx₀ = 0.
template <ParametricProblem P>
[[nodiscard]] Trajectory run(const P& problem, const Vector& theta, const Vector& x0,
    const StepSchedule& schedule, SampleStream& stream, std::size_t num_iters, std::size_t stride = 1)
{
    return run(problem, theta, x0, Matrix::Zero(problem.dim(), problem.param_dim()), schedule, stream,
        num_iters, stride);
}

/// Plain SGD without derivatives; returns x_K.
template <ParametricProblem P>
[[nodiscard]] Vector sgd_iterate(const P& problem, const Vector& theta, const Vector& x0,
    const StepSchedule& schedule, SampleStream& stream, std::size_t num_iters)
{
    detail::check_shapes(problem, theta, x0, nullptr);
    Vector x = x0;
    for (std::size_t k = 0; k < num_iters; ++k) {
        detail::sgd_update(problem, x, theta, schedule(k), static_cast<Index>(stream.next_index()));
    }
    if (!x.allFinite()) {
        throw OverflowError(num_iters);
    }
    return x;
}

/// Column j is [x_K(θ + h e_j) − x_K(θ − h e_j)] / (2h), every run replaying
/// the same sample stream.
template <ParametricProblem P>
[[nodiscard]] Matrix jacobian_by_path_fd(const P& problem, const Vector& theta, const Vector& x0,
    const StepSchedule& schedule, std::uint64_t seed, std::size_t num_iters, double h)
{
    if (!(h > 0.0)) {
        throw ConfigError("jacobian_by_path_fd: h must be positive");
    }
    const SampleStream base(seed, static_cast<std::uint64_t>(problem.num_samples()));
    Matrix fd(problem.dim(), problem.param_dim());
    for (Index j = 0; j < problem.param_dim(); ++j) {
        Vector plus = theta;
        Vector minus = theta;
        plus[j] += h;
        minus[j] -= h;
        SampleStream s_plus = base.fork();
        SampleStream s_minus = base.fork();
        const Vector x_plus = sgd_iterate(problem, plus, x0, schedule, s_plus, num_iters);
        const Vector x_minus = sgd_iterate(problem, minus, x0, schedule, s_minus, num_iters);
        fd.col(j) = (x_plus - x_minus) / (2.0 * h);
    }
    return fd;
}

/// Uniform bound on ‖∂θx_k‖_F: max{‖D₀‖_F, 2√p(κ+1)²}.
[[nodiscard]] inline double derivative_norm_bound(double d0_norm, double kappa, Index param_dim)
{
    const double ball = 2.0 * std::sqrt(static_cast<double>(param_dim)) * (kappa + 1.0) * (kappa + 1.0);
    return std::max(d0_norm, ball);
}

} // namespace piggyback
