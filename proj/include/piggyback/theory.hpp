#pragma once

#include "piggyback/engine.hpp"
#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/model.hpp"
#include "piggyback/oracle.hpp"
#include "piggyback/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace piggyback {

/// Deterministic worst-case model of inexact SGD in root-mean-square distance:
///
///   D²_{k+1} = (1 − μη_k) D²_k + 2η²_k (B²_k + 2σ²) + 2η_k B_k D_k
///
/// together with the step and error-bound sequences each lemma assumes.
struct BoundInstance {
    struct ConstantStep {
        double eta;
    };
    /// η_k = 2μ / (μ²k + 8L²)
    struct TheoremStep {};

    struct NoError {};
    struct ConstantError {
        double B;
    };
    /// B²_k = (A + B log(k + 8κ²)) / (k + 8κ²)
    struct LogOverKError {
        double A;
        double B;
    };
    /// B²_k = A ρ^k with ρ = 1 − μη/2
    struct GeometricError {
        double A;
    };

    using StepRule = std::variant<ConstantStep, TheoremStep>;
    using ErrorRule = std::variant<NoError, ConstantError, LogOverKError, GeometricError>;

    double mu = 1.0;
    double L = 1.0;
    double sigma = 0.0;
    double D0 = 0.0;
    StepRule step = TheoremStep{};
    ErrorRule error = NoError{};
    /// Only used by the general noise-ball bound.
    double hessian_lipschitz = 0.0;
    Index param_dim = 1;

    [[nodiscard]] double kappa() const noexcept { return L / mu; }
    [[nodiscard]] double shift() const noexcept { return 8.0 * kappa() * kappa(); }

    [[nodiscard]] double eta(std::size_t k) const
    {
        if (const auto* c = std::get_if<ConstantStep>(&step)) {
            return c->eta;
        }
        return 2.0 * mu / (mu * mu * static_cast<double>(k) + 8.0 * L * L);
    }

    /// ρ = 1 − μη/2 for constant steps.
    [[nodiscard]] double rho() const
    {
        const auto* c = std::get_if<ConstantStep>(&step);
        if (c == nullptr) {
            throw ConfigError("rho is defined for constant steps only");
        }
        return 1.0 - mu * c->eta / 2.0;
    }

    [[nodiscard]] double error_sq(std::size_t k) const
    {
        const double kk = static_cast<double>(k);
        return std::visit(
            [&](const auto& e) -> double {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, NoError>) {
                    return 0.0;
                } else if constexpr (std::is_same_v<E, ConstantError>) {
                    return e.B * e.B;
                } else if constexpr (std::is_same_v<E, LogOverKError>) {
                    const double t = kk + shift();
                    return (e.A + e.B * std::log(t)) / t;
                } else {
                    return e.A * std::pow(rho(), kk);
                }
            },
            error);
    }

    /// Admissibility: positive constants and η₀ ≤ μ/(4L²).
    void validate() const
    {
        if (!(mu > 0.0) || !(L >= mu) || !(sigma >= 0.0) || !(D0 >= 0.0) || !std::isfinite(L)
            || !std::isfinite(sigma) || !std::isfinite(D0)) {
            throw ConfigError("bound instance needs 0 < mu <= L, sigma >= 0, D0 >= 0");
        }
        const double eta0 = eta(0);
        if (!(eta0 > 0.0) || eta0 > mu / (4.0 * L * L) * (1.0 + 1e-12)) {
            throw ConfigError("bound instance needs 0 < eta_0 <= mu/(4 L^2)");
        }
        const bool bad_error = std::visit(
            [](const auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, ConstantError>) {
                    return !(e.B >= 0.0);
                } else if constexpr (std::is_same_v<E, LogOverKError>) {
                    return !(e.A >= 0.0) || !(e.B >= 0.0);
                } else if constexpr (std::is_same_v<E, GeometricError>) {
                    return !(e.A >= 0.0);
                } else {
                    return false;
                }
            },
            error);
        if (bad_error) {
            throw ConfigError("bound instance error parameters must be non-negative");
        }
        if (std::holds_alternative<GeometricError>(error) && !std::holds_alternative<ConstantStep>(step)) {
            throw ConfigError("geometric error bounds need a constant step");
        }
    }
};

enum class LemmaKind {
    C1Limsup,
    C2Iterates,
    C3Derivatives,
    C4Linear,
    T1General,
};

constexpr std::string_view to_string(LemmaKind kind) noexcept
{
    switch (kind) {
    case LemmaKind::C1Limsup:
        return "C1";
    case LemmaKind::C2Iterates:
        return "C2";
    case LemmaKind::C3Derivatives:
        return "C3";
    case LemmaKind::C4Linear:
        return "C4";
    case LemmaKind::T1General:
        return "T1";
    }
    return "?";
}

/// Evolves the recursion with equality from D₀² and returns D²_0 … D²_K.
[[nodiscard]] inline std::vector<double> recursion_evolve(const BoundInstance& inst, std::size_t horizon)
{
    inst.validate();
    std::vector<double> d2(horizon + 1);
    d2[0] = inst.D0 * inst.D0;
    const double noise = 2.0 * inst.sigma * inst.sigma;
    for (std::size_t k = 0; k < horizon; ++k) {
        const double eta = inst.eta(k);
        const double b2 = inst.error_sq(k);
        const double next = (1.0 - inst.mu * eta) * d2[k] + 2.0 * eta * eta * (b2 + noise)
            + 2.0 * eta * std::sqrt(b2) * std::sqrt(d2[k]);
        d2[k + 1] = std::max(next, 0.0);
    }
    return d2;
}

/// Limit of δ_k = (√(B² + 2μη(B² + 2σ²)) + B)/μ for constant η and B.
[[nodiscard]] inline double c1_delta(const BoundInstance& inst)
{
    const auto* c = std::get_if<BoundInstance::ConstantStep>(&inst.step);
    if (c == nullptr || !(std::holds_alternative<BoundInstance::NoError>(inst.error)
            || std::holds_alternative<BoundInstance::ConstantError>(inst.error))) {
        throw ConfigError("C1 needs a constant step and a constant error bound");
    }
    const double b = std::sqrt(inst.error_sq(0));
    const double s2 = inst.sigma * inst.sigma;
    return (std::sqrt(b * b + 2.0 * inst.mu * c->eta * (b * b + 2.0 * s2)) + b) / inst.mu;
}

namespace theory_detail {

    inline void require(bool ok, LemmaKind kind, const char* what)
    {
        if (!ok) {
            throw ConfigError(std::string(to_string(kind)) + ": " + what);
        }
    }

} // namespace theory_detail

/// Closed-form right-hand side of each lemma at index k, bounding D²_k.
///
///  C1: δ² + ρᵏ max(0, D₀² − δ²), the finite-horizon envelope whose limit is
///      the limsup characterization (constant η and B; ρ = 1 − μη/2)
///  C2: (8κ²D₀² + 2σ²/L² + 16σ²/μ² log(1 + k/8κ²)) / (k + 8κ²)
///  C3: 8κ²D₀²/(k + 8κ²) + (5(B + A) + 8σ²) log²(k + 8κ²) / (μ²(k + 8κ²))
///  C4: ρᵏ (D₀² + (kA/ρ)(2η² + 2η/μ))
///  T1: (4σ²η/μ)(1 + 3M(1 + 2√p(κ+1)²)/μ)², independent of k
[[nodiscard]] inline double lemma_bound(LemmaKind kind, const BoundInstance& inst, std::size_t k)
{
    using theory_detail::require;
    inst.validate();
    const double kk = static_cast<double>(k);
    const double mu = inst.mu;
    const double kappa = inst.kappa();
    const double shift = inst.shift();
    const double s2 = inst.sigma * inst.sigma;
    const double d02 = inst.D0 * inst.D0;

    switch (kind) {
    case LemmaKind::C1Limsup: {
        const double delta = c1_delta(inst);
        const double eta = std::get<BoundInstance::ConstantStep>(inst.step).eta;
        require(mu * eta <= 1.0, kind, "needs mu*eta <= 1");
        const double rho = 1.0 - mu * eta / 2.0;
        return delta * delta + std::pow(rho, kk) * std::max(0.0, d02 - delta * delta);
    }
    case LemmaKind::C2Iterates: {
        require(std::holds_alternative<BoundInstance::TheoremStep>(inst.step), kind, "needs the 2mu/(mu^2 k + 8L^2) step");
        require(std::holds_alternative<BoundInstance::NoError>(inst.error), kind, "needs B_k = 0");
        return (shift * d02 + 2.0 * s2 / (inst.L * inst.L) + 16.0 * s2 / (mu * mu) * std::log1p(kk / shift))
            / (kk + shift);
    }
    case LemmaKind::C3Derivatives: {
        require(std::holds_alternative<BoundInstance::TheoremStep>(inst.step), kind, "needs the 2mu/(mu^2 k + 8L^2) step");
        const auto* e = std::get_if<BoundInstance::LogOverKError>(&inst.error);
        require(e != nullptr, kind, "needs B_k^2 = (A + B log(k + 8 kappa^2))/(k + 8 kappa^2)");
        require(kappa >= 1.0, kind, "needs kappa >= 1");
        const double t = kk + shift;
        const double lg = std::log(t);
        return shift * d02 / t + (5.0 * (e->B + e->A) + 8.0 * s2) * lg * lg / (mu * mu * t);
    }
    case LemmaKind::C4Linear: {
        const auto* c = std::get_if<BoundInstance::ConstantStep>(&inst.step);
        require(c != nullptr, kind, "needs a constant step");
        require(c->eta < 1.0 / (2.0 * mu), kind, "needs eta < 1/(2 mu)");
        require(inst.sigma == 0.0, kind, "needs sigma = 0");
        double a = 0.0;
        if (const auto* g = std::get_if<BoundInstance::GeometricError>(&inst.error)) {
            a = g->A;
        } else {
            require(std::holds_alternative<BoundInstance::NoError>(inst.error), kind, "needs B_k^2 = A rho^k");
        }
        const double rho = inst.rho();
        const double eta = c->eta;
        return std::pow(rho, kk) * (d02 + kk * a / rho * (2.0 * eta * eta + 2.0 * eta / mu));
    }
    case LemmaKind::T1General: {
        const auto* c = std::get_if<BoundInstance::ConstantStep>(&inst.step);
        require(c != nullptr, kind, "needs the limiting (constant) step");
        const double ball = 1.0
            + 2.0 * std::sqrt(static_cast<double>(inst.param_dim)) * (kappa + 1.0) * (kappa + 1.0);
        const double factor = 1.0 + 3.0 * inst.hessian_lipschitz * ball / mu;
        return 4.0 * s2 * c->eta / mu * factor * factor;
    }
    }
    return 0.0;
}

struct DominationReport {
    bool holds = true;
    std::optional<std::size_t> first_violation;
    double max_ratio = 0.0;
};

namespace theory_detail {

    /// C4 in the variables u_k = D²_k / ρᵏ, which stay O(1) where ρᵏ
    /// underflows:
    ///   u_{k+1} = ((1 − μη) u_k + 2η²A + 2η√A √u_k) / ρ  ≤  D₀² + kA(2η² + 2η/μ)/ρ
    inline DominationReport verify_c4_scaled(const BoundInstance& inst, std::size_t horizon, double slack)
    {
        (void)lemma_bound(LemmaKind::C4Linear, inst, 0);
        const double eta = std::get<BoundInstance::ConstantStep>(inst.step).eta;
        const auto* g = std::get_if<BoundInstance::GeometricError>(&inst.error);
        const double a = g != nullptr ? g->A : 0.0;
        const double rho = inst.rho();
        const double mu = inst.mu;
        const double d02 = inst.D0 * inst.D0;
        DominationReport rep;
        double u = d02;
        for (std::size_t k = 0; k <= horizon; ++k) {
            const double kk = static_cast<double>(k);
            const double bound = d02 + kk * a / rho * (2.0 * eta * eta + 2.0 * eta / mu);
            if (bound > 0.0) {
                rep.max_ratio = std::max(rep.max_ratio, u / bound);
            } else if (u > 0.0) {
                rep.max_ratio = std::numeric_limits<double>::infinity();
            }
            if (u > bound * (1.0 + slack) && !rep.first_violation) {
                rep.holds = false;
                rep.first_violation = k;
            }
            u = std::max(((1.0 - mu * eta) * u + 2.0 * eta * eta * a + 2.0 * eta * std::sqrt(a) * std::sqrt(u)) / rho, 0.0);
        }
        return rep;
    }

} // namespace theory_detail

/// Checks recursion_evolve(inst, K)[k] ≤ lemma_bound(kind, inst, k) for all
/// k ≤ K with relative slack `slack`.
[[nodiscard]] inline DominationReport verify_domination(LemmaKind kind, const BoundInstance& inst,
    std::size_t horizon, double slack = 1e-9)
{
    if (kind == LemmaKind::T1General) {
        throw ConfigError("T1 is an asymptotic bound; use the limsup check");
    }
    if (kind == LemmaKind::C4Linear) {
        return theory_detail::verify_c4_scaled(inst, horizon, slack);
    }
    const auto d2 = recursion_evolve(inst, horizon);
    DominationReport rep;
    for (std::size_t k = 0; k <= horizon; ++k) {
        const double bound = lemma_bound(kind, inst, k);
        if (bound > 0.0) {
            rep.max_ratio = std::max(rep.max_ratio, d2[k] / bound);
        } else if (d2[k] > 0.0) {
            rep.max_ratio = std::numeric_limits<double>::infinity();
        }
        if (d2[k] > bound * (1.0 + slack) && !rep.first_violation) {
            rep.holds = false;
            rep.first_violation = k;
        }
    }
    return rep;
}

struct LimsupReport {
    double delta = 0.0;
    double tail_max = 0.0; ///< max of D_k over the last tail_fraction of the run
    bool holds = false;
};

/// Finite-horizon stand-in for limsup D_k ≤ δ: the tail maximum of D_k must
/// not exceed δ + tolerance.
[[nodiscard]] inline LimsupReport check_c1_limsup(const BoundInstance& inst, std::size_t horizon,
    double tail_fraction = 0.1, double tolerance = 1e-6)
{
    const auto d2 = recursion_evolve(inst, horizon);
    LimsupReport rep;
    rep.delta = c1_delta(inst);
    const auto start = static_cast<std::size_t>(std::floor(static_cast<double>(horizon) * (1.0 - tail_fraction)));
    for (std::size_t k = start; k <= horizon; ++k) {
        rep.tail_max = std::max(rep.tail_max, std::sqrt(d2[k]));
    }
    rep.holds = rep.tail_max <= rep.delta + tolerance;
    return rep;
}

struct EnvelopePoint {
    std::size_t k = 0; ///< the error e_{k+1} produced by the step from k
    double realized = 0.0;
    double envelope = 0.0;
};

/// Realized error term of the rewritten derivative recursion,
///   e_{k+1} = (H(x*) − H(x_k)) D_k + (Hθ(x*) − Hθ(x_k))   (sample ξ_{k+1}),
/// against its envelope M‖x_k − x*‖(1 + 2√p(κ+1)²). Needs consecutive
/// snapshots (stride 1).
[[nodiscard]] inline std::vector<EnvelopePoint> error_envelope(const Model& model, const Vector& theta,
    const SolutionOracle& oracle, const Trajectory& traj)
{
    if (!oracle.constants.M) {
        throw UnsupportedModelError("error envelope needs a Hessian Lipschitz constant");
    }
    const double M = *oracle.constants.M;
    const double kappa = oracle.kappa();
    const double ball = 1.0
        + 2.0 * std::sqrt(static_cast<double>(model.param_dim())) * (kappa + 1.0) * (kappa + 1.0);
    const SampleStream stream(traj.seed, static_cast<std::uint64_t>(model.num_samples()));
    std::vector<EnvelopePoint> out;
    if (traj.states.size() < 2) {
        return out;
    }
    out.reserve(traj.states.size() - 1);
    for (std::size_t i = 0; i + 1 < traj.states.size(); ++i) {
        const JointState& s = traj.states[i];
        if (traj.states[i + 1].k != s.k + 1) {
            throw ShapeError("error_envelope needs a stride-1 trajectory");
        }
        const auto xi = static_cast<Index>(stream.at(traj.stream_offset + s.k));
        const auto at_star = model.evaluate_sample(oracle.x_star, theta, xi);
        const auto at_k = model.evaluate_sample(s.x, theta, xi);
        const Matrix e = (at_star.hess_xx - at_k.hess_xx) * s.D + (at_star.hess_xtheta - at_k.hess_xtheta);
        out.push_back({s.k, e.norm(), M * (s.x - oracle.x_star).norm() * ball});
    }
    return out;
}

} // namespace piggyback
