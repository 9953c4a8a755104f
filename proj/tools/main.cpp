#include "piggyback/harness/config.hpp"
#include "piggyback/harness/experiment.hpp"
#include "piggyback/harness/fdcheck.hpp"
#include "piggyback/harness/io.hpp"
#include "piggyback/harness/lemmas.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

namespace ph = piggyback::harness;

namespace {

ph::ExperimentConfig load_config(const std::string& preset, const std::string& config_path)
{
    if (!config_path.empty()) {
        auto j = nlohmann::json::parse(ph::read_file(config_path));
        if (!preset.empty()) {
            j["preset"] = preset;
        }
        return ph::config_from_json(j);
    }
    return ph::preset_config(preset.empty() ? "custom" : preset);
}

void apply_seed(ph::ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed)
{
    if (seed) {
        cfg.seed = *seed;
        cfg.model.seed = *seed;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Forward differentiation of SGD: experiments, bound checks, finite-difference validation"};
    app.require_subcommand(1);

    std::string preset;
    std::string config_path;
    std::string out_dir = "results";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iters;
    std::optional<std::size_t> reps;
    std::optional<std::size_t> stride;
    unsigned threads = 0;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment preset and write CSV and summary JSON");
    run_cmd->add_option("--preset", preset, "Preset name");
    run_cmd->add_option("--config", config_path, "JSON config file");
    run_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
    run_cmd->add_option("--seed", seed, "Seed for data, theta and replications");
    run_cmd->add_option("--iters", iters, "Number of SGD steps");
    run_cmd->add_option("--reps", reps, "Number of replications");
    run_cmd->add_option("--stride", stride, "Snapshot stride");
    run_cmd->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

    std::size_t n = 100;
    std::size_t horizon = 100000;
    std::uint64_t lemma_seed = 0;
    std::string lemma_out;
    auto* lemmas_cmd = app.add_subcommand("lemmas", "Randomized domination checks of the bound recursions");
    lemmas_cmd->add_option("--n", n, "Instances per lemma")->capture_default_str();
    lemmas_cmd->add_option("--horizon", horizon, "Recursion horizon")->capture_default_str();
    lemmas_cmd->add_option("--seed", lemma_seed, "Seed")->capture_default_str();
    lemmas_cmd->add_option("--out", lemma_out, "JSON-lines output file (default: stdout)");

    std::string fd_preset = "fig2-logistic";
    double h = 1e-5;
    std::size_t fd_iters = 1000;
    std::optional<std::uint64_t> fd_seed;
    auto* fd_cmd = app.add_subcommand("fdcheck", "Compare forward Jacobians with path finite differences");
    fd_cmd->add_option("--preset", fd_preset, "Preset name")->capture_default_str();
    fd_cmd->set_help_flag("--help", "Print this help message and exit");
    fd_cmd->add_option("--h", h, "Finite-difference step")->capture_default_str();
    fd_cmd->add_option("--seed", fd_seed, "Seed");
    fd_cmd->add_option("--iters", fd_iters, "Number of SGD steps")->capture_default_str();

    std::string oracle_preset = "fig2-ridge";
    std::optional<std::uint64_t> oracle_seed;
    auto* oracle_cmd = app.add_subcommand("oracle", "Print the solution oracle (x*, D*, constants) as JSON");
    oracle_cmd->add_option("--preset", oracle_preset, "Preset name")->capture_default_str();
    oracle_cmd->add_option("--seed", oracle_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ph::kExitOk : ph::kExitUsage;
    }

    try {
        if (*run_cmd) {
            auto cfg = load_config(preset, config_path);
            apply_seed(cfg, seed);
            if (iters) {
                cfg.num_iters = *iters;
            }
            if (reps) {
                cfg.replications = *reps;
            }
            if (stride) {
                cfg.stride = *stride;
            }
            ph::validate(cfg);
            const auto res = ph::run_experiment(cfg, threads);
            ph::write_outputs(res, out_dir);
            std::cout << ph::dump_json(ph::summary_json(res)) << '\n';
            if (!res.failure.empty()) {
                std::cerr << "failure: " << res.failure << '\n';
            } else if (!res.regime.pass) {
                std::cerr << "regime check '" << res.regime.name << "' failed\n";
            }
            return res.exit_code;
        }
        if (*lemmas_cmd) {
            ph::LemmaSuiteOptions opts;
            opts.seed = lemma_seed;
            opts.instances = n;
            opts.horizon = horizon;
            const auto rep = ph::run_lemma_suite(opts);
            if (lemma_out.empty()) {
                std::cout << rep.text();
            } else {
                ph::write_file(lemma_out, rep.text());
            }
            return rep.all_hold ? ph::kExitOk : ph::kExitRegime;
        }
        if (*fd_cmd) {
            auto cfg = ph::preset_config(fd_preset);
            apply_seed(cfg, fd_seed);
            std::cout << ph::dump_json(ph::to_json(ph::run_fd_validation(cfg, h, fd_iters))) << '\n';
            return ph::kExitOk;
        }
        if (*oracle_cmd) {
            auto cfg = ph::preset_config(oracle_preset);
            apply_seed(cfg, oracle_seed);
            const auto model = piggyback::Model::generate(cfg.model);
            const auto theta = ph::generate_theta(model, cfg.seed);
            std::cout << ph::dump_json(ph::oracle_json(piggyback::solve(model, theta))) << '\n';
            return ph::kExitOk;
        }
    } catch (const piggyback::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ph::kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ph::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ph::kExitFailure;
    }
    return ph::kExitOk;
}
