#pragma once

#include "piggyback/engine.hpp"
#include "piggyback/errors.hpp"
#include "piggyback/harness/config.hpp"
#include "piggyback/model.hpp"
#include "piggyback/oracle.hpp"
#include "piggyback/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace piggyback::harness {

struct FdReport {
    std::string preset;
    double h = 0.0;
    std::size_t num_iters = 0;
    double eta = 0.0;
    /// ‖FD column j − D column j‖ / ‖D‖_F for each parameter coordinate j.
    std::vector<double> column_errors;
    double max_rel_error = 0.0;
    double frobenius_rel_error = 0.0; ///< ‖FD − D‖_F / ‖D‖_F
};

/// Forward Jacobian after num_iters steps at η₀ = μ/(4L²) against
/// common-random-number central differences of the SGD path.
[[nodiscard]] inline FdReport run_fd_validation(const ExperimentConfig& cfg, double h, std::size_t num_iters)
{
    if (!is_smooth(cfg.model.kind)) {
        throw UnsupportedModelError("finite-difference validation needs a smooth model");
    }
    const Model model = Model::generate(cfg.model);
    const Vector theta = generate_theta(model, cfg.seed);
    const auto oracle = solve(model, theta);
    const double eta = oracle.mu() / (4.0 * oracle.L() * oracle.L());
    const auto schedule = StepSchedule::constant(eta);
    const std::uint64_t seed = replication_seed(cfg.seed, 0);
    const Vector x0 = Vector::Zero(model.dim());

    SampleStream stream(seed, static_cast<std::uint64_t>(model.num_samples()));
    const auto traj = run(model, theta, x0, schedule, stream, num_iters, num_iters);
    const Matrix& D = traj.states.back().D;
    const Matrix fd = jacobian_by_path_fd(model, theta, x0, schedule, seed, num_iters, h);

    FdReport rep;
    rep.preset = cfg.preset;
    rep.h = h;
    rep.num_iters = num_iters;
    rep.eta = eta;
    const double scale = D.norm() > 0.0 ? D.norm() : 1.0;
    for (Index j = 0; j < D.cols(); ++j) {
        rep.column_errors.push_back((fd.col(j) - D.col(j)).norm() / scale);
    }
    rep.max_rel_error = *std::max_element(rep.column_errors.begin(), rep.column_errors.end());
    rep.frobenius_rel_error = (fd - D).norm() / scale;
    return rep;
}

[[nodiscard]] inline nlohmann::json to_json(const FdReport& rep)
{
    return {
        {"preset", rep.preset},
        {"h", rep.h},
        {"num_iters", rep.num_iters},
        {"eta", rep.eta},
        {"max_rel_error", rep.max_rel_error},
        {"frobenius_rel_error", rep.frobenius_rel_error},
        {"column_errors", rep.column_errors},
    };
}

} // namespace piggyback::harness
