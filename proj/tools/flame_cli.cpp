#include <CLI11.hpp>
#include <iostream>

#include "flame/error.hpp"
#include "flame/experiment.hpp"

namespace fx = flame::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Federated multi-modal RF fingerprinting simulator"};
    app.set_version_flag("--version", fx::version());
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::size_t threads = 1;
    std::uint64_t seed_override = 0;
    std::string model_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory, overrides output_dir");
        sub->add_option("--threads", threads, "worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", seed_override, "replace the seed list with this single seed");
    };
    auto* gen = app.add_subcommand("gen-data", "generate and write the synthetic dataset");
    auto* run = app.add_subcommand("run", "train, evaluate, and write metrics and models");
    auto* bound = app.add_subcommand("verify-bound", "Monte Carlo check of the convergence bound on a quadratic");
    auto* pers = app.add_subcommand("personalize", "fine-tune a trained global model on each AP");
    for (auto* sub : {gen, run, bound, pers}) add_common(sub);
    pers->add_option("--model", model_path, "global model file (default <out>/model_<seed>.bin)");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = fx::parse_config(config_path);
        fx::CommandOptions options;
        options.threads = threads;
        if (!out_dir.empty()) options.out = out_dir;
        if (app.get_subcommands().front()->count("--seed-override") > 0) options.seed_override = seed_override;
        if (!model_path.empty()) options.model = model_path;

        if (gen->parsed()) return fx::cmd_gen_data(cfg, options);
        if (run->parsed()) return fx::cmd_run(cfg, options);
        if (bound->parsed()) return fx::cmd_verify_bound(cfg, options);
        return fx::cmd_personalize(cfg, options);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
