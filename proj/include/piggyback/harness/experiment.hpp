#pragma once

#include "piggyback/engine.hpp"
#include "piggyback/errors.hpp"
#include "piggyback/harness/config.hpp"
#include "piggyback/harness/io.hpp"
#include "piggyback/metrics.hpp"
#include "piggyback/model.hpp"
#include "piggyback/oracle.hpp"
#include "piggyback/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace piggyback::harness {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitRegime = 2,
    kExitFailure = 3,
};

/// Aggregated output for one step size (or the single decaying schedule).
struct StepRun {
    std::string file_name;
    std::string schedule_id;
    double eta = 0.0; ///< constant step, or η₀ for a decaying schedule
    AggregateCurve curve;
    double tail_subopt = 0.0;
    double tail_jac_mse = 0.0;
    double tail_iter_mse = 0.0;
};

struct RegimeCheck {
    std::string name = "none";
    bool pass = true;
    nlohmann::json details = nlohmann::json::object();
};

struct ExperimentResult {
    ExperimentConfig config;
    std::optional<SolutionOracle> oracle;
    double eta0 = 0.0;
    std::vector<StepRun> runs;
    RegimeCheck regime;
    std::string failure; ///< oracle or overflow message; empty on success
    int exit_code = kExitOk;
};

namespace experiment_detail {

    inline unsigned worker_count(unsigned requested, std::size_t jobs)
    {
        unsigned n = requested != 0 ? requested : std::max(1U, std::thread::hardware_concurrency());
        return static_cast<unsigned>(std::min<std::size_t>(n, jobs));
    }

    /// Runs job(r) for r in [0, count) on a small pool. The first failure in
    /// index order is rethrown after all workers finish.
    template <typename Job>
    void parallel_for(std::size_t count, unsigned threads, Job&& job)
    {
        std::vector<std::exception_ptr> errors(count);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t r = next++; r < count; r = next++) {
                try {
                    job(r);
                } catch (...) {
                    errors[r] = std::current_exception();
                }
            }
        };
        {
            std::vector<std::jthread> pool;
            const unsigned n = worker_count(threads, count);
            for (unsigned t = 1; t < n; ++t) {
                pool.emplace_back(worker);
            }
            worker();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }

    inline double last(const std::vector<double>& v) { return v.empty() ? 0.0 : v.back(); }

    inline RegimeCheck noise_ball_check(const std::vector<StepRun>& runs)
    {
        RegimeCheck rc;
        rc.name = "noise-ball-vs-eta";
        std::vector<double> etas;
        std::vector<double> mse;
        for (const auto& r : runs) {
            etas.push_back(r.eta);
            mse.push_back(r.tail_jac_mse);
        }
        const auto fit = fit_noise_ball(etas, mse);
        rc.pass = fit.defined && fit.slope >= 0.7 && fit.slope <= 1.3;
        rc.details = {{"slope", fit.slope}, {"defined", fit.defined}, {"range", {0.7, 1.3}}};
        if (!fit.reason.empty()) {
            rc.details["reason"] = fit.reason;
        }
        return rc;
    }

    inline RegimeCheck sublinear_check(const StepRun& run, double kappa)
    {
        RegimeCheck rc;
        rc.name = "log2k-over-k";
        const auto fit = fit_log_squared_over_k(run.curve.ks, run.curve.jac_err_sq_mean, kappa, 0.5);
        rc.pass = fit.defined && fit.sup <= 3.0 * fit.median;
        rc.details = {{"sup", fit.sup}, {"median", fit.median}, {"trend", fit.trend}, {"max_ratio", 3.0}};
        if (!fit.reason.empty()) {
            rc.details["reason"] = fit.reason;
        }
        return rc;
    }

    inline RegimeCheck double_interp_check(const StepRun& run, const SolutionOracle& oracle)
    {
        RegimeCheck rc;
        rc.name = "double-interpolation";
        const auto& c = run.curve;
        const double final_subopt = last(c.subopt_mean);
        const double final_jac = last(c.jac_err_sq_mean);
        const auto fit_sub = fit_geometric(c.ks, c.subopt_mean, 0.0, 0.5);
        const auto fit_jac = fit_geometric(c.ks, c.jac_err_sq_mean, 0.0, 0.5);
        rc.pass = oracle.constants.sigma2 == 0.0 && final_subopt <= 1e-10 && final_jac <= 1e-10 && fit_sub.defined
            && fit_sub.slope < 0.0 && fit_jac.defined && fit_jac.slope < 0.0;
        rc.details = {
            {"sigma2", oracle.constants.sigma2},
            {"final_subopt", final_subopt},
            {"final_jac_mse", final_jac},
            {"subopt_log_slope", fit_sub.slope},
            {"jac_mse_log_slope", fit_jac.slope},
        };
        return rc;
    }

    inline RegimeCheck simple_interp_check(const StepRun& run)
    {
        RegimeCheck rc;
        rc.name = "simple-interpolation";
        const double final_subopt = last(run.curve.subopt_mean);
        rc.pass = final_subopt <= 1e-10 && run.tail_jac_mse > 1e3 * run.tail_iter_mse;
        rc.details = {
            {"final_subopt", final_subopt},
            {"tail_jac_mse", run.tail_jac_mse},
            {"tail_iter_mse", run.tail_iter_mse},
        };
        return rc;
    }

    inline RegimeCheck regime_check(const ExperimentConfig& cfg, const std::vector<StepRun>& runs,
        const SolutionOracle& oracle)
    {
        const auto& p = cfg.preset;
        if (p == "fig1-constant" || p == "fig2-ridge" || p == "fig2-logistic" || p == "fig2-huber") {
            return noise_ball_check(runs);
        }
        if (p == "fig1-decreasing") {
            return sublinear_check(runs.front(), oracle.kappa());
        }
        if (p == "fig1-double-interp") {
            return double_interp_check(runs.front(), oracle);
        }
        if (p == "fig1-simple-interp") {
            return simple_interp_check(runs.front());
        }
        RegimeCheck rc;
        if (p == "fig2-svm") {
            // nonsmooth loss: no rate is claimed, only a finite run
            rc.name = "finite-only";
        }
        return rc;
    }

} // namespace experiment_detail

/// Runs every replication for every step size and evaluates the preset's
/// regime check. Oracle and overflow failures are reported in the result.
[[nodiscard]] inline ExperimentResult run_experiment(const ExperimentConfig& cfg, unsigned threads = 0)
{
    validate(cfg);
    ExperimentResult res;
    res.config = cfg;
    try {
        const Model model = Model::generate(cfg.model);
        const Vector theta = generate_theta(model, cfg.seed);
        res.oracle = solve(model, theta);
        const SolutionOracle& oracle = *res.oracle;
        res.eta0 = oracle.mu() / (4.0 * oracle.L() * oracle.L());

        std::vector<StepSchedule> schedules;
        if (cfg.step == StepKind::TheoremDecay) {
            schedules.push_back(StepSchedule::theorem_decay(oracle.mu(), oracle.L()));
        } else {
            for (double s : cfg.step_scales) {
                schedules.push_back(StepSchedule::constant(s * res.eta0));
            }
        }

        const Vector x0 = Vector::Zero(model.dim());
        const Matrix D0 = Matrix::Zero(model.dim(), model.param_dim());
        const auto m = static_cast<std::uint64_t>(model.num_samples());
        for (std::size_t i = 0; i < schedules.size(); ++i) {
            const auto& schedule = schedules[i];
            std::vector<ErrorCurve> curves(cfg.replications);
            experiment_detail::parallel_for(cfg.replications, threads, [&](std::size_t r) {
                SampleStream stream(replication_seed(cfg.seed, r), m);
                CurveRecorder rec(model, theta, oracle);
                run_observed(model, theta, x0, D0, schedule, stream, cfg.num_iters, cfg.stride, rec);
                curves[r] = std::move(rec).take();
            });
            StepRun run;
            run.file_name = cfg.preset + "_step" + std::to_string(i) + ".csv";
            run.schedule_id = schedule.id();
            run.eta = schedule(0);
            run.curve = aggregate(curves);
            run.tail_subopt = tail_mean(run.curve.subopt_mean, cfg.tail_fraction);
            run.tail_jac_mse = tail_mean(run.curve.jac_err_sq_mean, cfg.tail_fraction);
            run.tail_iter_mse = tail_mean(run.curve.iter_err_sq_mean, cfg.tail_fraction);
            res.runs.push_back(std::move(run));
        }
        res.regime = experiment_detail::regime_check(cfg, res.runs, oracle);
        res.exit_code = res.regime.pass ? kExitOk : kExitRegime;
    } catch (const OverflowError& e) {
        res.failure = e.what();
        res.exit_code = kExitFailure;
    } catch (const OracleError& e) {
        res.failure = e.what();
        res.exit_code = kExitFailure;
    }
    return res;
}

/// Header block shared by every output file.
[[nodiscard]] inline std::string header_block(const ExperimentConfig& cfg)
{
    std::string h;
    h += "# version: " + std::string(kVersion) + "\n";
    h += "# config: " + dump_json(to_json(cfg)) + "\n";
    h += "# seed: " + std::to_string(cfg.seed) + "\n";
    return h;
}

[[nodiscard]] inline std::string render_csv(const ExperimentConfig& cfg, const StepRun& run)
{
    std::string out = header_block(cfg);
    out += "# schedule: " + run.schedule_id + "\n";
    out += "# eta: " + format_double(run.eta) + "\n";
    out += "# replications: " + std::to_string(run.curve.replications) + "\n";
    out += "k,subopt_mean,subopt_se,jacerr_mean,jacerr_se,jacerr_sq_mean,jacerr_sq_se\n";
    const auto& c = run.curve;
    for (std::size_t i = 0; i < c.ks.size(); ++i) {
        out += std::to_string(c.ks[i]);
        for (double v : {c.subopt_mean[i], c.subopt_se[i], c.jac_err_mean[i], c.jac_err_se[i], c.jac_err_sq_mean[i],
                 c.jac_err_sq_se[i]}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

[[nodiscard]] inline nlohmann::json constants_json(const SolutionOracle& oracle)
{
    const auto& c = oracle.constants;
    nlohmann::json j = {
        {"mu", c.mu},
        {"L", c.L},
        {"kappa", c.kappa},
        {"sigma2_grad", c.sigma2_grad},
        {"sigma2_jac", c.sigma2_jac},
        {"sigma2", c.sigma2},
        {"grad_norm", oracle.grad_norm},
        {"ift_residual", oracle.ift_residual},
        {"method", oracle.method},
    };
    j["M"] = c.M ? nlohmann::json(*c.M) : nlohmann::json(nullptr);
    return j;
}

/// Constants plus x* and D* (row-major nested arrays).
[[nodiscard]] inline nlohmann::json oracle_json(const SolutionOracle& oracle)
{
    auto j = constants_json(oracle);
    j["x_star"] = std::vector<double>(oracle.x_star.data(), oracle.x_star.data() + oracle.x_star.size());
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < oracle.D_star.rows(); ++i) {
        const Vector row = oracle.D_star.row(i).transpose();
        rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["D_star"] = rows;
    return j;
}

[[nodiscard]] inline nlohmann::json summary_json(const ExperimentResult& res)
{
    const auto& cfg = res.config;
    nlohmann::json j;
    j["version"] = std::string(kVersion);
    j["config"] = to_json(cfg);
    j["seed"] = cfg.seed;
    std::vector<std::uint64_t> seeds;
    for (std::size_t r = 0; r < cfg.replications; ++r) {
        seeds.push_back(replication_seed(cfg.seed, r));
    }
    j["replication_seeds"] = seeds;
    j["oracle"] = res.oracle ? constants_json(*res.oracle) : nlohmann::json(nullptr);
    j["eta0"] = res.eta0;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : res.runs) {
        runs.push_back({
            {"file", r.file_name},
            {"schedule", r.schedule_id},
            {"eta", r.eta},
            {"tail_subopt", r.tail_subopt},
            {"tail_jac_mse", r.tail_jac_mse},
            {"tail_iter_mse", r.tail_iter_mse},
            {"final_subopt", experiment_detail::last(r.curve.subopt_mean)},
            {"final_jac_mse", experiment_detail::last(r.curve.jac_err_sq_mean)},
        });
    }
    j["runs"] = runs;
    j["regime"] = {{"name", res.regime.name}, {"pass", res.regime.pass}, {"details", res.regime.details}};
    j["failure"] = res.failure.empty() ? nlohmann::json(nullptr) : nlohmann::json(res.failure);
    j["exit_code"] = res.exit_code;
    return j;
}

/// Writes one CSV per step size and <preset>_summary.json into out_dir.
inline void write_outputs(const ExperimentResult& res, const std::filesystem::path& out_dir)
{
    for (const auto& run : res.runs) {
        write_file(out_dir / run.file_name, render_csv(res.config, run));
    }
    // the summary records version, config and seed as fields
    write_file(out_dir / (res.config.preset + "_summary.json"), dump_json(summary_json(res)) + "\n");
}

} // namespace piggyback::harness
