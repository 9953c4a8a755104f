#pragma once

#include "piggyback/engine.hpp"
#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/model.hpp"
#include "piggyback/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace piggyback {

struct ErrorCurve {
    std::vector<std::size_t> ks;
    std::vector<double> subopt; ///< F(x_k,θ) − F(x*,θ)
    std::vector<double> jac_err; ///< ‖∂θx_k − ∂θx*‖_F
    std::vector<double> iter_err_sq; ///< ‖x_k − x*‖²
};

/// Snapshot observer that accumulates an ErrorCurve without keeping states.
class CurveRecorder {
public:
    CurveRecorder(const Model& model, const Vector& theta, const SolutionOracle& oracle)
        : model_(&model)
        , theta_(&theta)
        , oracle_(&oracle)
        , f_star_(model.full_value(oracle.x_star, theta))
    {
    }

    void operator()(const JointState& s)
    {
        curve_.ks.push_back(s.k);
        curve_.subopt.push_back(model_->full_value(s.x, *theta_) - f_star_);
        curve_.jac_err.push_back((s.D - oracle_->D_star).norm());
        curve_.iter_err_sq.push_back((s.x - oracle_->x_star).squaredNorm());
    }

    [[nodiscard]] const ErrorCurve& curve() const noexcept { return curve_; }
    [[nodiscard]] ErrorCurve take() && { return std::move(curve_); }

private:
    const Model* model_;
    const Vector* theta_;
    const SolutionOracle* oracle_;
    double f_star_;
    ErrorCurve curve_;
};

[[nodiscard]] inline ErrorCurve evaluate_curve(const Trajectory& traj, const Model& model, const Vector& theta,
    const SolutionOracle& oracle)
{
    CurveRecorder rec(model, theta, oracle);
    for (const auto& s : traj.states) {
        rec(s);
    }
    return std::move(rec).take();
}

struct AggregateCurve {
    std::vector<std::size_t> ks;
    std::vector<double> subopt_mean, subopt_se;
    std::vector<double> jac_err_mean, jac_err_se;
    std::vector<double> jac_err_sq_mean, jac_err_sq_se;
    std::vector<double> iter_err_sq_mean, iter_err_sq_se;
    std::size_t replications = 0;
};

namespace metrics_detail {

    /// Pointwise mean and standard error (sample variance / √R; 0 for R = 1).
    template <typename Get>
    void mean_se(std::span<const ErrorCurve> curves, std::size_t n, Get get, std::vector<double>& mean,
        std::vector<double>& se)
    {
        const auto r = static_cast<double>(curves.size());
        mean.assign(n, 0.0);
        se.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (const auto& c : curves) {
                sum += get(c, i);
            }
            const double mu = sum / r;
            mean[i] = mu;
            if (curves.size() > 1) {
                double ss = 0.0;
                for (const auto& c : curves) {
                    const double dv = get(c, i) - mu;
                    ss += dv * dv;
                }
                se[i] = std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
            }
        }
    }

} // namespace metrics_detail

/// Monte Carlo estimates over replications. The Jacobian error is averaged
/// both as a norm (figures) and squared (mean squared error).
[[nodiscard]] inline AggregateCurve aggregate(std::span<const ErrorCurve> curves)
{
    if (curves.empty()) {
        throw ShapeError("aggregate: no curves");
    }
    const auto& ks = curves.front().ks;
    for (const auto& c : curves) {
        if (c.ks != ks || c.subopt.size() != ks.size() || c.jac_err.size() != ks.size()
            || c.iter_err_sq.size() != ks.size()) {
            throw ShapeError("aggregate: curves have mismatched snapshot indices");
        }
    }
    AggregateCurve out;
    out.ks = ks;
    out.replications = curves.size();
    const std::size_t n = ks.size();
    using metrics_detail::mean_se;
    mean_se(curves, n, [](const ErrorCurve& c, std::size_t i) { return c.subopt[i]; }, out.subopt_mean, out.subopt_se);
    mean_se(curves, n, [](const ErrorCurve& c, std::size_t i) { return c.jac_err[i]; }, out.jac_err_mean, out.jac_err_se);
    mean_se(curves, n, [](const ErrorCurve& c, std::size_t i) { return c.jac_err[i] * c.jac_err[i]; },
        out.jac_err_sq_mean, out.jac_err_sq_se);
    mean_se(curves, n, [](const ErrorCurve& c, std::size_t i) { return c.iter_err_sq[i]; }, out.iter_err_sq_mean,
        out.iter_err_sq_se);
    return out;
}

/// Mean of the last `fraction` of the values (at least one value).
[[nodiscard]] inline double tail_mean(std::span<const double> values, double fraction)
{
    if (values.empty()) {
        return 0.0;
    }
    auto count = static_cast<std::size_t>(std::ceil(static_cast<double>(values.size()) * fraction));
    count = std::clamp<std::size_t>(count, 1, values.size());
    double sum = 0.0;
    for (std::size_t i = values.size() - count; i < values.size(); ++i) {
        sum += values[i];
    }
    return sum / static_cast<double>(count);
}

struct FitReport {
    bool defined = false;
    double slope = 0.0;
    double intercept = 0.0;
    /// log2k-over-k statistic: sup and median over the tail, and its trend
    /// (least-squares slope against log(k + 8κ²), relative to the median).
    double sup = 0.0;
    double median = 0.0;
    double trend = 0.0;
    std::size_t points = 0;
    std::string reason;
};

namespace metrics_detail {

    inline FitReport least_squares(const std::vector<double>& t, const std::vector<double>& y)
    {
        FitReport r;
        r.points = t.size();
        if (t.size() < 2) {
            r.reason = "fewer than two usable points";
            return r;
        }
        const auto n = static_cast<double>(t.size());
        double mt = 0.0;
        double my = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            mt += t[i];
            my += y[i];
        }
        mt /= n;
        my /= n;
        double stt = 0.0;
        double sty = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            stt += (t[i] - mt) * (t[i] - mt);
            sty += (t[i] - mt) * (y[i] - my);
        }
        if (stt == 0.0) {
            r.reason = "degenerate abscissa";
            return r;
        }
        r.defined = true;
        r.slope = sty / stt;
        r.intercept = my - r.slope * mt;
        return r;
    }

    inline double median(std::vector<double> v)
    {
        const std::size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        double med = v[mid];
        if (v.size() % 2 == 0) {
            med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
        }
        return med;
    }

} // namespace metrics_detail

/// Log-log slope of tail-averaged MSE against the constant step size.
[[nodiscard]] inline FitReport fit_noise_ball(std::span<const double> etas, std::span<const double> mse)
{
    if (etas.size() != mse.size()) {
        throw ShapeError("fit_noise_ball: etas and mse differ in length");
    }
    std::vector<double> t;
    std::vector<double> y;
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (etas[i] > 0.0 && mse[i] > 0.0 && std::isfinite(mse[i])) {
            t.push_back(std::log(etas[i]));
            y.push_back(std::log(mse[i]));
        }
    }
    auto r = metrics_detail::least_squares(t, y);
    if (!r.defined && r.reason.empty()) {
        r.reason = "degenerate curve";
    }
    return r;
}

/// Statistic MSE_k (k + 8κ²) / log²(k + 8κ²) over the tail of the curve.
[[nodiscard]] inline FitReport fit_log_squared_over_k(std::span<const std::size_t> ks, std::span<const double> mse,
    double kappa, double tail_fraction = 0.5)
{
    if (ks.size() != mse.size()) {
        throw ShapeError("fit_log_squared_over_k: ks and mse differ in length");
    }
    FitReport r;
    const double shift = 8.0 * kappa * kappa;
    const auto start = static_cast<std::size_t>(std::floor(static_cast<double>(ks.size()) * (1.0 - tail_fraction)));
    std::vector<double> stat;
    std::vector<double> logt;
    for (std::size_t i = start; i < ks.size(); ++i) {
        const double t = static_cast<double>(ks[i]) + shift;
        const double lg = std::log(t);
        stat.push_back(mse[i] * t / (lg * lg));
        logt.push_back(lg);
    }
    r.points = stat.size();
    if (stat.empty() || std::all_of(stat.begin(), stat.end(), [](double v) { return v == 0.0; })) {
        r.reason = "degenerate curve";
        return r;
    }
    r.sup = *std::max_element(stat.begin(), stat.end());
    r.median = metrics_detail::median(stat);
    const auto ls = metrics_detail::least_squares(logt, stat);
    r.defined = r.median > 0.0;
    r.trend = ls.defined && r.median > 0.0 ? ls.slope / r.median : 0.0;
    if (!r.defined) {
        r.reason = "zero median";
    }
    return r;
}

/// Least-squares slope of log MSE against k (log of the per-step rate),
/// over positive values in [begin_fraction, end_fraction) of the curve.
[[nodiscard]] inline FitReport fit_geometric(std::span<const std::size_t> ks, std::span<const double> mse,
    double begin_fraction = 0.0, double end_fraction = 1.0)
{
    if (ks.size() != mse.size()) {
        throw ShapeError("fit_geometric: ks and mse differ in length");
    }
    const auto n = static_cast<double>(ks.size());
    const auto lo = static_cast<std::size_t>(std::floor(n * begin_fraction));
    const auto hi = std::min(ks.size(), static_cast<std::size_t>(std::ceil(n * end_fraction)));
    std::vector<double> t;
    std::vector<double> y;
    for (std::size_t i = lo; i < hi; ++i) {
        if (mse[i] > 0.0 && std::isfinite(mse[i])) {
            t.push_back(static_cast<double>(ks[i]));
            y.push_back(std::log(mse[i]));
        }
    }
    auto r = metrics_detail::least_squares(t, y);
    if (t.empty()) {
        r.reason = "degenerate curve";
    }
    return r;
}

} // namespace piggyback
