#pragma once

#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace piggyback {

struct ProblemConstants {
    double mu = 0.0;
    double L = 0.0;
    double kappa = 1.0;
    double sigma2_grad = 0.0; ///< E‖∇ₓf(x*,θ;ξ)‖²
    double sigma2_jac = 0.0; ///< E‖∇²ₓₓf(x*,θ;ξ) D* + ∇²ₓθf(x*,θ;ξ)‖²_F
    double sigma2 = 0.0; ///< max of the two
    std::optional<double> M; ///< Hessian Lipschitz constant in x; empty for nonsmooth families
};

struct SolutionOracle {
    Vector x_star;
    Matrix D_star;
    ProblemConstants constants;
    /// ‖∇ₓF(x*,θ)‖; for hinge, the stationarity residual of the KKT subgradient.
    double grad_norm = 0.0;
    /// ‖∇²ₓₓF D* + ∇²ₓθF‖_F; for hinge, the residual of the differentiated KKT system.
    double ift_residual = 0.0;
    int iterations = 0;
    std::string method;

    [[nodiscard]] double mu() const noexcept { return constants.mu; }
    [[nodiscard]] double L() const noexcept { return constants.L; }
    [[nodiscard]] double kappa() const noexcept { return constants.kappa; }
};

struct SolveOptions {
    double tol = 1e-12;
    int max_newton = 200;
    int max_gradient_steps = 200000;
    int max_dual_sweeps = 2000000;
};

namespace oracle_detail {

    // sup |σ''| = √3/18; sup |d/du(−σ(−u) + u σ'(u))| = 1/2 at u = 0.
    inline constexpr double kSigmoidSecondSup = 0.096225044864937627;
    inline constexpr double kLogisticCrossSlopeSup = 0.5;

    inline Eigen::LLT<Matrix> spd_factor(const Matrix& h)
    {
        Eigen::LLT<Matrix> llt(h);
        if (llt.info() != Eigen::Success) {
            throw RankError("oracle: Hessian is not positive definite");
        }
        return llt;
    }

    inline double line_search(const Model& model, const Vector& theta, const Vector& x, const Vector& dir,
        const Vector& grad, Vector& out)
    {
        const double f0 = model.full_value(x, theta);
        const double slope = grad.dot(dir);
        double t = 1.0;
        for (int i = 0; i < 80; ++i) {
            out = x + t * dir;
            const double f = model.full_value(out, theta);
            // below ~eps·|F| the objective cannot resolve the decrease; accept
            if (f <= f0 + 1e-4 * t * slope || -slope * t < 1e-15 * (1.0 + std::abs(f0))) {
                return t;
            }
            t *= 0.5;
        }
        out = x;
        return 0.0;
    }

    /// Damped Newton on a C¹ objective, with gradient-descent fallback.
    inline Vector minimize_smooth(const Model& model, const Vector& theta, const SolveOptions& opts,
        int& iterations, std::string& method)
    {
        Vector x = Vector::Zero(model.dim());
        Vector trial(model.dim());
        method = "newton";
        for (iterations = 0; iterations < opts.max_newton; ++iterations) {
            const Vector g = model.full_gradient(x, theta);
            if (g.norm() <= opts.tol) {
                return x;
            }
            const Matrix h = model.evaluate_full(x, theta).hess_xx;
            const Vector dir = -spd_factor(h).solve(g);
            if (line_search(model, theta, x, dir, g, trial) == 0.0) {
                break;
            }
            x = trial;
        }
        if (model.full_gradient(x, theta).norm() <= opts.tol) {
            return x;
        }
        method = "gradient-descent";
        for (int it = 0; it < opts.max_gradient_steps; ++it, ++iterations) {
            const Vector g = model.full_gradient(x, theta);
            if (g.norm() <= opts.tol) {
                return x;
            }
            const Vector dir = -g;
            if (line_search(model, theta, x, dir, g, trial) == 0.0) {
                break;
            }
            x = trial;
        }
        throw OracleError("oracle: minimizer did not reach the gradient tolerance");
    }

    struct HingeSolution {
        Vector x;
        Vector alpha;
        int sweeps = 0;
    };

    /// Dual coordinate ascent for λ‖x‖² + (1/m) Σ max(0, 1 − z_ξᵀx), z_ξ = θ_ξ a_ξ,
    /// followed by an exact solve on the identified support set.
    inline HingeSolution solve_hinge(const Model& model, const Vector& theta, const SolveOptions& opts)
    {
        const Index m = model.num_samples();
        const Index d = model.dim();
        const double cap = 1.0 / (2.0 * model.reg() * static_cast<double>(m));
        Matrix z(d, m);
        for (Index i = 0; i < m; ++i) {
            z.col(i) = theta[i] * model.sample_vector(i);
        }
        const Vector q = z.colwise().squaredNorm();
        HingeSolution sol{Vector::Zero(d), Vector::Zero(m), 0};
        for (; sol.sweeps < opts.max_dual_sweeps; ++sol.sweeps) {
            double violation = 0.0;
            for (Index i = 0; i < m; ++i) {
                if (q[i] == 0.0) {
                    sol.alpha[i] = cap;
                    continue;
                }
                const double g = 1.0 - z.col(i).dot(sol.x);
                const double a_old = sol.alpha[i];
                const double pg = a_old <= 0.0 ? std::max(g, 0.0) : (a_old >= cap ? std::max(-g, 0.0) : std::abs(g));
                violation = std::max(violation, pg);
                const double a_new = std::clamp(a_old + g / q[i], 0.0, cap);
                if (a_new != a_old) {
                    sol.x += (a_new - a_old) * z.col(i);
                    sol.alpha[i] = a_new;
                }
            }
            if (violation <= 1e-13) {
                break;
            }
        }

        // exact polish: x = cap·Σ_I z + Σ_S α z with z_Sᵀx = 1
        const double tol = 1e-9 * cap;
        std::vector<Index> support;
        Vector bound_sum = Vector::Zero(d);
        for (Index i = 0; i < m; ++i) {
            if (sol.alpha[i] >= cap - tol) {
                bound_sum += z.col(i);
            } else if (sol.alpha[i] > tol) {
                support.push_back(i);
            }
        }
        const auto s = static_cast<Index>(support.size());
        Vector x = cap * bound_sum;
        Vector alpha_s;
        if (s > 0) {
            Matrix zs(d, s);
            for (Index j = 0; j < s; ++j) {
                zs.col(j) = z.col(support[j]);
            }
            Eigen::ColPivHouseholderQR<Matrix> qr(zs.transpose() * zs);
            if (qr.rank() < s) {
                return sol;
            }
            alpha_s = qr.solve(Vector::Ones(s) - zs.transpose() * x);
            x += zs * alpha_s;
        }
        for (Index j = 0; j < s; ++j) {
            if (alpha_s[j] < -tol || alpha_s[j] > cap + tol) {
                return sol;
            }
        }
        HingeSolution polished{x, sol.alpha, sol.sweeps};
        for (Index i = 0; i < m; ++i) {
            polished.alpha[i] = sol.alpha[i] >= cap - tol ? cap : 0.0;
        }
        for (Index j = 0; j < s; ++j) {
            polished.alpha[support[j]] = alpha_s[j];
        }
        return polished;
    }

    /// Subgradient weights β_ξ ∈ [0,1] consistent with each margin.
    inline Vector hinge_weights(const Model& model, const Vector& theta, const Vector& x, const Vector& alpha)
    {
        const double cap = 1.0 / (2.0 * model.reg() * static_cast<double>(model.num_samples()));
        Vector beta(model.num_samples());
        for (Index i = 0; i < model.num_samples(); ++i) {
            const double margin = theta[i] * model.sample_vector(i).dot(x);
            if (margin < 1.0 - 1e-9) {
                beta[i] = 1.0;
            } else if (margin > 1.0 + 1e-9) {
                beta[i] = 0.0;
            } else {
                beta[i] = std::clamp(alpha[i] / cap, 0.0, 1.0);
            }
        }
        return beta;
    }

} // namespace oracle_detail

/// Problem constants at (x*, D*): μ, L from the per-family analytic bounds,
/// the two variance-control moments as exact finite-sum averages, and M.
inline ProblemConstants estimate_constants(const Model& model, const Vector& theta, const Vector& x_star,
    const Matrix& D_star)
{
    ProblemConstants c;
    const Index m = model.num_samples();
    const double two_reg = 2.0 * model.reg();
    double max_sq = 0.0;
    double max_logistic = 0.0;
    double max_hinge = 0.0;
    double max_m = 0.0;
    for (Index i = 0; i < m; ++i) {
        const double sq = model.sample_vector(i).squaredNorm();
        const double label = model.param_dim() == m ? std::abs(theta[i]) : 0.0;
        max_sq = std::max(max_sq, sq);
        max_logistic = std::max(max_logistic, label * label * sq / 4.0);
        max_hinge = std::max(max_hinge, label * label * sq);
        max_m = std::max(max_m,
            std::max(oracle_detail::kSigmoidSecondSup * label * label * label * sq * std::sqrt(sq),
                oracle_detail::kLogisticCrossSlopeSup * label * sq));
    }

    switch (model.kind()) {
    case ModelKind::OlsStandard:
    case ModelKind::OlsSimpleInterp:
    case ModelKind::OlsDoubleInterp: {
        const Matrix a = model.data();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(a.transpose() * a / static_cast<double>(m),
            Eigen::EigenvaluesOnly);
        c.mu = eig.eigenvalues().minCoeff();
        c.L = max_sq;
        c.M = 0.0;
        break;
    }
    case ModelKind::Ridge:
        c.mu = two_reg;
        c.L = max_sq + two_reg;
        c.M = 0.0;
        break;
    case ModelKind::Logistic:
        c.mu = two_reg;
        c.L = max_logistic + two_reg;
        c.M = max_m;
        break;
    case ModelKind::Huber:
        c.mu = two_reg;
        c.L = max_sq + two_reg;
        break;
    case ModelKind::Hinge:
        // the hinge gradient is not Lipschitz; θ²‖a‖² + 2λ is the curvature
        // scale used only to pick step sizes
        c.mu = two_reg;
        c.L = max_hinge + two_reg;
        break;
    }
    if (!(c.mu > 0.0)) {
        throw RankError("oracle: objective is not strongly convex");
    }
    c.L = std::max(c.L, c.mu);
    c.kappa = c.L / c.mu;

    for (Index i = 0; i < m; ++i) {
        const auto s = model.evaluate_sample(x_star, theta, i);
        c.sigma2_grad += s.grad_x.squaredNorm();
        c.sigma2_jac += (s.hess_xx * D_star + s.hess_xtheta).squaredNorm();
    }
    c.sigma2_grad /= static_cast<double>(m);
    c.sigma2_jac /= static_cast<double>(m);
    c.sigma2 = std::max(c.sigma2_grad, c.sigma2_jac);
    return c;
}

/// Exact minimizer x*(θ), solution Jacobian ∂θx*(θ) from the implicit
/// system ∇²ₓₓF D = −∇²ₓθF, and the problem constants.
inline SolutionOracle solve(const Model& model, const Vector& theta, const SolveOptions& opts = {})
{
    model.validate(Vector::Zero(model.dim()), theta, 0);
    SolutionOracle out;
    const Index d = model.dim();
    const Index m = model.num_samples();
    const Matrix a = model.data();

    if (model.kind() == ModelKind::Hinge) {
        const auto sol = oracle_detail::solve_hinge(model, theta, opts);
        out.x_star = sol.x;
        out.iterations = sol.sweeps;
        out.method = "dual-coordinate-ascent";
        const Vector beta = oracle_detail::hinge_weights(model, theta, sol.x, sol.alpha);
        const double two_reg_m = 2.0 * model.reg() * static_cast<double>(m);

        Matrix z(d, m);
        for (Index i = 0; i < m; ++i) {
            z.col(i) = theta[i] * model.sample_vector(i);
        }
        out.grad_norm = (2.0 * model.reg() * sol.x - z * beta / static_cast<double>(m)).norm();

        // differentiate 2λm x = Σ_I z + Σ_S β z and z_Sᵀx = 1 in θ
        std::vector<Index> support;
        Matrix r = Matrix::Zero(d, m);
        for (Index i = 0; i < m; ++i) {
            if (beta[i] > 0.0 && beta[i] < 1.0) {
                support.push_back(i);
            }
            r.col(i) = beta[i] * model.sample_vector(i);
        }
        const auto s = static_cast<Index>(support.size());
        if (s == 0) {
            out.D_star = r / two_reg_m;
            out.ift_residual = 0.0;
        } else {
            Matrix zs(d, s);
            Matrix cm = Matrix::Zero(s, m);
            for (Index j = 0; j < s; ++j) {
                zs.col(j) = z.col(support[j]);
                cm(j, support[j]) = model.sample_vector(support[j]).dot(sol.x);
            }
            const Matrix gram = zs.transpose() * zs;
            Eigen::ColPivHouseholderQR<Matrix> qr(gram);
            if (qr.rank() < s) {
                throw RankError("oracle: hinge support vectors are linearly dependent");
            }
            const Matrix dbeta = qr.solve(-two_reg_m * cm - zs.transpose() * r);
            out.D_star = (r + zs * dbeta) / two_reg_m;
            const double res_stat = (two_reg_m * out.D_star - r - zs * dbeta).norm();
            const double res_margin = (zs.transpose() * out.D_star + cm).norm();
            out.ift_residual = std::max(res_stat, res_margin) / static_cast<double>(m);
        }
        out.constants = estimate_constants(model, theta, out.x_star, out.D_star);
        return out;
    }

    if (model.kind() == ModelKind::OlsDoubleInterp) {
        // b(θ) = Aθ lies in the range of A, so x* = θ and D* = I exactly
        out.x_star = theta;
        out.method = "closed-form";
    } else if (is_quadratic(model.kind())) {
        Matrix h = a.transpose() * a / static_cast<double>(m);
        h.diagonal().array() += 2.0 * model.reg();
        out.x_star = oracle_detail::spd_factor(h).solve(a.transpose() * theta / static_cast<double>(m));
        out.method = "closed-form";
    } else {
        out.x_star = oracle_detail::minimize_smooth(model, theta, opts, out.iterations, out.method);
    }

    const auto full = model.evaluate_full(out.x_star, theta);
    if (model.kind() == ModelKind::OlsDoubleInterp) {
        out.D_star = Matrix::Identity(d, d);
    } else {
        out.D_star = -oracle_detail::spd_factor(full.hess_xx).solve(full.hess_xtheta);
    }
    out.grad_norm = full.grad_x.norm();
    out.ift_residual = (full.hess_xx * out.D_star + full.hess_xtheta).norm();
    out.constants = estimate_constants(model, theta, out.x_star, out.D_star);
    return out;
}

} // namespace piggyback
