#include "piggyback.hpp"
#include "piggyback/harness/config.hpp"
#include "piggyback/harness/experiment.hpp"
#include "piggyback/harness/fdcheck.hpp"
#include "piggyback/harness/lemmas.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

using namespace piggyback;
using namespace piggyback::harness;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

struct Problem {
    Model model;
    Vector theta;
    SolutionOracle oracle;
};

Problem build(const ExperimentConfig& cfg)
{
    Model model = Model::generate(cfg.model);
    Vector theta = generate_theta(model, cfg.seed);
    SolutionOracle oracle = solve(model, theta);
    return {std::move(model), std::move(theta), std::move(oracle)};
}

// D-iterates against plain SGD on the matrix quadratic
//   g(D; ξ) = ½ tr(Dᵀ a aᵀ D) − tr(Dᵀ a e_ξᵀ),
// written directly from the data rows.
Outcome quadratic_equivalence()
{
    const auto p = build(preset_config("fig1-constant"));
    const double eta = p.oracle.mu() / (4.0 * p.oracle.L() * p.oracle.L());
    const Matrix a = p.model.data();
    const std::uint64_t seed = replication_seed(0, 0);
    SampleStream joint_stream(seed, static_cast<std::uint64_t>(a.rows()));
    SampleStream plain_stream(seed, static_cast<std::uint64_t>(a.rows()));

    JointState s{0, Vector::Zero(a.cols()), Matrix::Zero(a.cols(), a.rows())};
    Matrix D = s.D;
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        s = joint_step(p.model, s, p.theta, eta, static_cast<Index>(joint_stream.next_index()));
        const auto xi = static_cast<Index>(plain_stream.next_index());
        const Vector row = a.row(xi).transpose();
        Matrix grad = row * (row.transpose() * D);
        grad.col(xi) -= row;
        D -= eta * grad;
        worst = std::max(worst, (s.D - D).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-10, fmt("max abs difference %.3e over 10000 steps", worst)};
}

Outcome path_finite_differences()
{
    double ols = 0.0;
    for (auto preset : {"fig1-constant", "fig1-simple-interp", "fig1-double-interp"}) {
        ols = std::max(ols, run_fd_validation(preset_config(preset), 1e-5, 1000).max_rel_error);
    }
    const double logistic = run_fd_validation(preset_config("fig2-logistic"), 1e-5, 1000).max_rel_error;
    return {ols <= 1e-9 && logistic <= 1e-4, fmt("OLS max rel %.3e, logistic max rel %.3e", ols, logistic)};
}

Outcome ift_residuals()
{
    double grad = 0.0;
    double ift = 0.0;
    for (auto preset : kPresetNames) {
        const auto p = build(preset_config(preset));
        grad = std::max(grad, p.oracle.grad_norm);
        ift = std::max(ift, p.oracle.ift_residual);
    }
    return {grad <= 1e-10 && ift <= 1e-10, fmt("max gradient norm %.3e, max IFT residual %.3e", grad, ift)};
}

Outcome noise_ball()
{
    const auto res = run_experiment(preset_config("fig2-ridge"));
    const double slope = res.regime.details.value("slope", 0.0);
    return {res.exit_code == kExitOk && res.regime.pass && slope >= 0.7 && slope <= 1.3,
        fmt("log-log slope %.4f", slope)};
}

Outcome sublinear()
{
    auto cfg = preset_config("fig2-ridge");
    cfg.preset = "custom";
    cfg.step = StepKind::TheoremDecay;
    cfg.step_scales = {1.0};
    const auto res = run_experiment(cfg);
    if (res.exit_code == kExitFailure) {
        return {false, res.failure};
    }
    const auto& curve = res.runs.front().curve;
    const auto fit = fit_log_squared_over_k(curve.ks, curve.jac_err_sq_mean, res.oracle->kappa());
    return {fit.defined && fit.sup <= 3.0 * fit.median,
        fmt("tail sup %.4g, median %.4g, ratio %.3f", fit.sup, fit.median, fit.sup / fit.median)};
}

Outcome preset_regime(const char* preset)
{
    const auto res = run_experiment(preset_config(preset));
    if (res.exit_code == kExitFailure) {
        return {false, res.failure};
    }
    return {res.regime.pass, res.regime.details.dump()};
}

Outcome lemma_suite()
{
    LemmaSuiteOptions opts;
    const auto rep = run_lemma_suite(opts);
    std::size_t held = 0;
    for (const auto& line : rep.lines) {
        held += nlohmann::json::parse(line).at("holds").get<bool>() ? 1 : 0;
    }
    return {rep.all_hold && rep.lines.size() == 4 * opts.instances,
        fmt("%zu of %zu checks hold", held, rep.lines.size())};
}

Outcome derivative_bound()
{
    double worst = 0.0;
    for (auto preset : {"fig2-ridge", "fig2-logistic"}) {
        const auto p = build(preset_config(preset));
        const double eta = p.oracle.mu() / (p.oracle.L() * p.oracle.L());
        const double bound = derivative_norm_bound(0.0, p.oracle.kappa(), p.model.param_dim());
        const Vector x0 = Vector::Zero(p.model.dim());
        const Matrix D0 = Matrix::Zero(p.model.dim(), p.model.param_dim());
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SampleStream stream(replication_seed(seed, 0), static_cast<std::uint64_t>(p.model.num_samples()));
            run_observed(p.model, p.theta, x0, D0, StepSchedule::constant(eta), stream, 10000, 1,
                [&](const JointState& s) { worst = std::max(worst, s.D.norm() / bound); });
        }
    }
    return {worst <= 1.0, fmt("max ||D_k||_F / bound %.3e", worst)};
}

Outcome envelope()
{
    const auto p = build(preset_config("fig2-logistic"));
    const double eta = p.oracle.mu() / (4.0 * p.oracle.L() * p.oracle.L());
    SampleStream stream(replication_seed(0, 0), static_cast<std::uint64_t>(p.model.num_samples()));
    const auto traj = run(p.model, p.theta, Vector::Zero(p.model.dim()), StepSchedule::constant(eta), stream, 10000);
    const auto points = error_envelope(p.model, p.theta, p.oracle, traj);
    double worst = 0.0;
    bool ok = points.size() == 10000;
    for (const auto& pt : points) {
        ok = ok && pt.realized <= pt.envelope;
        if (pt.envelope > 0.0) {
            worst = std::max(worst, pt.realized / pt.envelope);
        }
    }
    return {ok, fmt("max realized / envelope %.3e over %zu steps", worst, points.size())};
}

Outcome determinism()
{
    std::size_t files = 0;
    for (auto preset : {"fig1-decreasing", "fig2-svm"}) {
        const auto cfg = preset_config(preset);
        const auto a = run_experiment(cfg);
        const auto b = run_experiment(cfg);
        if (a.runs.size() != b.runs.size() || a.runs.empty()) {
            return {false, std::string(preset) + ": run counts differ"};
        }
        for (std::size_t i = 0; i < a.runs.size(); ++i) {
            if (render_csv(a.config, a.runs[i]) != render_csv(b.config, b.runs[i])) {
                return {false, a.runs[i].file_name + " differs between reruns"};
            }
            ++files;
        }
    }
    return {true, fmt("%zu CSV files byte-identical", files)};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"quadratic equivalence", quadratic_equivalence},
        {"path finite differences", path_finite_differences},
        {"IFT residual", ift_residuals},
        {"noise-ball scaling", noise_ball},
        {"sublinear regime", sublinear},
        {"double interpolation", [] { return preset_regime("fig1-double-interp"); }},
        {"simple interpolation", [] { return preset_regime("fig1-simple-interp"); }},
        {"lemma domination suite", lemma_suite},
        {"derivative boundedness", derivative_bound},
        {"error envelope", envelope},
        {"determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %2zu %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
            out.detail.c_str(), secs);
        std::fflush(stdout);
        failures += out.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
