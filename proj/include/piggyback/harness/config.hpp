#pragma once

#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/model.hpp"
#include "piggyback/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace piggyback::harness {

enum class StepKind {
    Constant, ///< η = scale · η₀ for each listed scale
    TheoremDecay, ///< η_k = 2/(μ(k + 8κ²)) with oracle μ, L
};

/// How θ is drawn for a model family.
enum class ThetaMode {
    Standard, ///< θ ~ N(0, I_m)
    SimpleInterp, ///< θ = Aζ, ζ ~ N(0, I_d)
    DoubleInterp, ///< θ ~ N(0, I_d)
};

struct ExperimentConfig {
    std::string preset = "custom";
    ModelSpec model;
    StepKind step = StepKind::Constant;
    /// Multiples of the base step η₀ = μ/(4L²); one output file per entry.
    std::vector<double> step_scales{1.0};
    std::size_t num_iters = 100000;
    std::size_t stride = 100;
    std::size_t replications = 20;
    std::uint64_t seed = 0;
    /// Fraction of snapshots averaged for tail statistics.
    double tail_fraction = 0.2;
};

inline constexpr std::array<std::string_view, 9> kPresetNames{
    "fig1-constant",
    "fig1-decreasing",
    "fig1-double-interp",
    "fig1-simple-interp",
    "fig2-ridge",
    "fig2-logistic",
    "fig2-huber",
    "fig2-svm",
    "custom",
};

constexpr ThetaMode theta_mode(ModelKind kind) noexcept
{
    switch (kind) {
    case ModelKind::OlsSimpleInterp:
        return ThetaMode::SimpleInterp;
    case ModelKind::OlsDoubleInterp:
        return ThetaMode::DoubleInterp;
    default:
        return ThetaMode::Standard;
    }
}

constexpr std::string_view to_string(StepKind kind) noexcept
{
    return kind == StepKind::Constant ? "constant" : "theorem-decay";
}

inline StepKind parse_step_kind(std::string_view name)
{
    if (name == "constant") {
        return StepKind::Constant;
    }
    if (name == "theorem-decay") {
        return StepKind::TheoremDecay;
    }
    throw ConfigError("unknown step schedule: " + std::string(name));
}

/// Built-in configuration for a preset name. OLS presets use λ = 0.
[[nodiscard]] inline ExperimentConfig preset_config(std::string_view name)
{
    if (std::find(kPresetNames.begin(), kPresetNames.end(), name) == kPresetNames.end()) {
        throw ConfigError("unknown preset: " + std::string(name));
    }
    ExperimentConfig cfg;
    cfg.preset = std::string(name);
    const std::vector<double> sweep{1.0, 0.25, 0.0625, 0.015625};
    auto ols = [&cfg](ModelKind kind) {
        cfg.model.kind = kind;
        cfg.model.reg = 0.0;
    };
    if (name == "fig1-constant") {
        ols(ModelKind::OlsStandard);
        cfg.step_scales = sweep;
        // μ = 1/m: the η₀/64 run needs ~10⁶ steps to reach its noise ball
        cfg.num_iters = 2000000;
        cfg.stride = 1000;
    } else if (name == "fig1-decreasing") {
        ols(ModelKind::OlsStandard);
        cfg.step = StepKind::TheoremDecay;
    } else if (name == "fig1-double-interp") {
        ols(ModelKind::OlsDoubleInterp);
    } else if (name == "fig1-simple-interp") {
        ols(ModelKind::OlsSimpleInterp);
    } else if (name == "fig2-ridge") {
        cfg.model.kind = ModelKind::Ridge;
        cfg.step_scales = sweep;
    } else if (name == "fig2-logistic") {
        cfg.model.kind = ModelKind::Logistic;
        cfg.step_scales = sweep;
    } else if (name == "fig2-huber") {
        cfg.model.kind = ModelKind::Huber;
        cfg.step_scales = sweep;
    } else if (name == "fig2-svm") {
        cfg.model.kind = ModelKind::Hinge;
        cfg.step_scales = sweep;
    }
    return cfg;
}

/// Checks ranges and that a named preset's model family and schedule type
/// were not overridden.
inline void validate(const ExperimentConfig& cfg)
{
    const auto reference = preset_config(cfg.preset);
    if (cfg.preset != "custom") {
        if (cfg.model.kind != reference.model.kind) {
            throw ConfigError("preset " + cfg.preset + " requires model kind "
                + std::string(to_string(reference.model.kind)));
        }
        if (cfg.step != reference.step) {
            throw ConfigError("preset " + cfg.preset + " requires a "
                + std::string(to_string(reference.step)) + " schedule");
        }
    }
    if (cfg.model.d < 1 || cfg.model.m < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (cfg.num_iters < 1 || cfg.stride < 1 || cfg.replications < 1) {
        throw ConfigError("num_iters, stride and replications must be at least 1");
    }
    if (cfg.step == StepKind::Constant) {
        if (cfg.step_scales.empty()) {
            throw ConfigError("constant schedule needs at least one step scale");
        }
        for (double s : cfg.step_scales) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw ConfigError("step scales must be positive and finite");
            }
        }
    }
    if (!(cfg.tail_fraction > 0.0 && cfg.tail_fraction <= 1.0)) {
        throw ConfigError("tail_fraction must lie in (0, 1]");
    }
}

[[nodiscard]] inline nlohmann::json to_json(const ModelSpec& spec)
{
    return {
        {"kind", std::string(to_string(spec.kind))},
        {"d", spec.d},
        {"m", spec.m},
        {"seed", spec.seed},
        {"reg", spec.reg},
        {"huber_delta", spec.huber_delta},
    };
}

[[nodiscard]] inline nlohmann::json to_json(const ExperimentConfig& cfg)
{
    return {
        {"preset", cfg.preset},
        {"model", to_json(cfg.model)},
        {"schedule", {{"kind", std::string(to_string(cfg.step))}, {"scales", cfg.step_scales}}},
        {"num_iters", cfg.num_iters},
        {"stride", cfg.stride},
        {"replications", cfg.replications},
        {"seed", cfg.seed},
        {"tail_fraction", cfg.tail_fraction},
    };
}

namespace config_detail {

    template <typename T>
    void read(const nlohmann::json& j, const char* key, T& out)
    {
        if (j.contains(key)) {
            try {
                out = j.at(key).get<T>();
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("config field '") + key + "': " + e.what());
            }
        }
    }

} // namespace config_detail

/// Starts from the named preset (default "custom") and overlays the given
/// fields. Unknown keys are rejected.
[[nodiscard]] inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
    using config_detail::read;
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        static constexpr std::array<std::string_view, 8> known{
            "preset", "model", "schedule", "num_iters", "stride", "replications", "seed", "tail_fraction"};
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown config field: " + key);
        }
    }
    std::string preset = "custom";
    read(j, "preset", preset);
    auto cfg = preset_config(preset);
    if (j.contains("model")) {
        const auto& mj = j.at("model");
        if (!mj.is_object()) {
            throw ConfigError("config field 'model' must be an object");
        }
        std::string kind(to_string(cfg.model.kind));
        read(mj, "kind", kind);
        cfg.model.kind = parse_model_kind(kind);
        if (preset == "custom" && is_least_squares(cfg.model.kind) && !mj.contains("reg")) {
            cfg.model.reg = 0.0;
        }
        read(mj, "d", cfg.model.d);
        read(mj, "m", cfg.model.m);
        read(mj, "seed", cfg.model.seed);
        read(mj, "reg", cfg.model.reg);
        read(mj, "huber_delta", cfg.model.huber_delta);
    }
    if (j.contains("schedule")) {
        const auto& sj = j.at("schedule");
        std::string kind(to_string(cfg.step));
        read(sj, "kind", kind);
        cfg.step = parse_step_kind(kind);
        read(sj, "scales", cfg.step_scales);
    }
    read(j, "num_iters", cfg.num_iters);
    read(j, "stride", cfg.stride);
    read(j, "replications", cfg.replications);
    read(j, "seed", cfg.seed);
    read(j, "tail_fraction", cfg.tail_fraction);
    validate(cfg);
    return cfg;
}

/// θ for the model family, drawn from derive_seed(seed, "theta").
[[nodiscard]] inline Vector generate_theta(const Model& model, std::uint64_t seed)
{
    SplitMix64 rng(derive_seed(seed, "theta"));
    switch (theta_mode(model.kind())) {
    case ThetaMode::SimpleInterp: {
        Vector zeta(model.dim());
        for (Index i = 0; i < zeta.size(); ++i) {
            zeta[i] = rng.normal();
        }
        return model.data() * zeta;
    }
    case ThetaMode::Standard:
    case ThetaMode::DoubleInterp:
        break;
    }
    Vector theta(model.param_dim());
    for (Index i = 0; i < theta.size(); ++i) {
        theta[i] = rng.normal();
    }
    return theta;
}

/// Stream seed of replication r.
[[nodiscard]] constexpr std::uint64_t replication_seed(std::uint64_t seed, std::size_t r) noexcept
{
    return derive_seed(derive_seed(seed, "replication"), static_cast<std::uint64_t>(r));
}

} // namespace piggyback::harness
