#pragma once

#include "piggyback/harness/io.hpp"
#include "piggyback/random.hpp"
#include "piggyback/theory.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace piggyback::harness {

struct LemmaSuiteOptions {
    std::uint64_t seed = 0;
    std::size_t instances = 100; ///< per lemma
    std::size_t horizon = 100000; ///< domination horizon
    std::size_t limsup_horizon = 1000000; ///< C1 limsup run length
    double slack = 1e-9;
    double limsup_tolerance = 1e-6;
};

struct LemmaSuiteReport {
    std::vector<std::string> lines; ///< one JSON object per instance
    bool all_hold = true;

    [[nodiscard]] std::string text() const
    {
        std::string out;
        for (const auto& l : lines) {
            out += l;
            out += '\n';
        }
        return out;
    }
};

/// Random admissible instance for a lemma: μ ∈ [1e-2, 1], κ ∈ [1, 100]
/// (κ ∈ [1, 10] for C1 so the limsup run settles), σ, D₀ ∈ [0, 10],
/// error parameters in [1e-3, 10], constant steps in [0.05, 1]·μ/(4L²)
/// ([0.5, 1]·μ/(4L²) for C1).
[[nodiscard]] inline BoundInstance random_instance(LemmaKind kind, SplitMix64& rng)
{
    BoundInstance inst;
    const bool c1 = kind == LemmaKind::C1Limsup;
    inst.mu = std::pow(10.0, rng.uniform(-2.0, 0.0));
    inst.L = inst.mu * std::pow(10.0, rng.uniform(0.0, c1 ? 1.0 : 2.0));
    inst.sigma = rng.uniform(0.0, 10.0);
    inst.D0 = rng.uniform(0.0, 10.0);
    const double eta_max = inst.mu / (4.0 * inst.L * inst.L);
    auto log_param = [&rng] { return std::pow(10.0, rng.uniform(-3.0, 1.0)); };
    switch (kind) {
    case LemmaKind::C1Limsup:
        inst.step = BoundInstance::ConstantStep{rng.uniform(0.5, 1.0) * eta_max};
        inst.error = BoundInstance::ConstantError{log_param()};
        break;
    case LemmaKind::C2Iterates:
        inst.step = BoundInstance::TheoremStep{};
        inst.error = BoundInstance::NoError{};
        break;
    case LemmaKind::C3Derivatives: {
        inst.step = BoundInstance::TheoremStep{};
        const double a = log_param();
        inst.error = BoundInstance::LogOverKError{a, log_param()};
        break;
    }
    case LemmaKind::C4Linear:
        inst.step = BoundInstance::ConstantStep{rng.uniform(0.05, 1.0) * eta_max};
        inst.sigma = 0.0;
        inst.error = BoundInstance::GeometricError{log_param()};
        break;
    case LemmaKind::T1General:
        throw ConfigError("T1 has no randomized domination check");
    }
    return inst;
}

namespace lemma_detail {

    inline nlohmann::json instance_json(const BoundInstance& inst)
    {
        nlohmann::json j = {{"mu", inst.mu}, {"L", inst.L}, {"sigma", inst.sigma}, {"D0", inst.D0}};
        if (const auto* c = std::get_if<BoundInstance::ConstantStep>(&inst.step)) {
            j["eta"] = c->eta;
        } else {
            j["eta"] = "theorem-decay";
        }
        std::visit(
            [&j](const auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, BoundInstance::ConstantError>) {
                    j["B"] = e.B;
                } else if constexpr (std::is_same_v<E, BoundInstance::LogOverKError>) {
                    j["A"] = e.A;
                    j["B"] = e.B;
                } else if constexpr (std::is_same_v<E, BoundInstance::GeometricError>) {
                    j["A"] = e.A;
                }
            },
            inst.error);
        return j;
    }

} // namespace lemma_detail

/// Randomized domination checks for C1–C4, one JSON line per instance.
/// C1 additionally checks the tail of a limsup_horizon run against δ.
[[nodiscard]] inline LemmaSuiteReport run_lemma_suite(const LemmaSuiteOptions& opts)
{
    LemmaSuiteReport rep;
    constexpr std::array kinds{
        LemmaKind::C1Limsup, LemmaKind::C2Iterates, LemmaKind::C3Derivatives, LemmaKind::C4Linear};
    for (const LemmaKind kind : kinds) {
        SplitMix64 rng(derive_seed(opts.seed, to_string(kind)));
        for (std::size_t i = 0; i < opts.instances; ++i) {
            const auto inst = random_instance(kind, rng);
            const auto dom = verify_domination(kind, inst, opts.horizon, opts.slack);
            nlohmann::json j = {
                {"lemma", std::string(to_string(kind))},
                {"instance", i},
                {"params", lemma_detail::instance_json(inst)},
                {"horizon", opts.horizon},
                {"max_ratio", dom.max_ratio},
            };
            j["first_violation"] = dom.first_violation ? nlohmann::json(*dom.first_violation) : nlohmann::json(nullptr);
            bool holds = dom.holds;
            if (kind == LemmaKind::C1Limsup) {
                const auto ls = check_c1_limsup(inst, opts.limsup_horizon, 0.1, opts.limsup_tolerance);
                j["delta"] = ls.delta;
                j["tail_max"] = ls.tail_max;
                j["limsup_horizon"] = opts.limsup_horizon;
                holds = holds && ls.holds;
            }
            j["holds"] = holds;
            rep.all_hold = rep.all_hold && holds;
            rep.lines.push_back(dump_json(j));
        }
    }
    return rep;
}

} // namespace piggyback::harness
