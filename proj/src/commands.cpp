#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "flame/error.hpp"
#include "flame/experiment.hpp"
#include "flame/random.hpp"

namespace flame::experiment {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kEstimateStream = 0x65737469ULL;

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

std::filesystem::path model_path(const std::filesystem::path& dir, std::uint64_t seed) {
    return dir / ("model_" + std::to_string(seed) + ".bin");
}

// Manifest beside the outputs; rewritten when the command finishes or fails.
class Manifest {
public:
    Manifest(std::string command, const ExperimentConfig& cfg, std::filesystem::path dir)
        : dir_(std::move(dir)) {
        doc_["tool"] = "flame";
        doc_["version"] = version();
        doc_["command"] = std::move(command);
        doc_["config"] = nlohmann::json::parse(config_to_json(cfg));
        doc_["seeds"] = cfg.training.seeds;
        doc_["outputs"] = nlohmann::json::array();
        doc_["status"] = "running";
        flush();
    }

    nlohmann::json& doc() { return doc_; }
    void output(const std::filesystem::path& p) {
        doc_["outputs"].push_back(p.filename().string());
        flush();
    }
    void finish(const std::string& status) {
        doc_["status"] = status;
        flush();
    }
    void fail(const std::exception& e) {
        doc_["status"] = doc_["outputs"].empty() ? "failed" : "failed_partial_outputs";
        doc_["error"] = e.what();
        flush();
    }

private:
    void flush() const { write_text(dir_ / "manifest.json", doc_.dump(2) + "\n"); }

    std::filesystem::path dir_;
    nlohmann::json doc_;
};

template <class Body>
int with_manifest(const std::string& command, const ExperimentConfig& cfg, Body&& body) {
    std::filesystem::create_directories(cfg.output_dir);
    Manifest manifest(command, cfg, cfg.output_dir);
    try {
        const int status = body(manifest);
        manifest.finish(status == 0 ? "complete" : "complete_with_failures");
        return status;
    } catch (const std::exception& e) {
        manifest.fail(e);
        throw;
    }
}

}  // namespace

std::string version() {
#ifdef FLAME_VERSION
    return FLAME_VERSION;
#else
    return "unknown";
#endif
}

federation::SignalDataset load_dataset(const ExperimentConfig& cfg) {
    const auto& d = cfg.dataset;
    if (!d.path) return federation::SignalDataset::from_file(rf::generate_dataset(d.generation()));
    const auto file = rf::read_dataset(*d.path);
    if (file.transmitter_count != static_cast<std::size_t>(d.transmitters)) {
        throw ConfigError("dataset.transmitters", "does not match the dataset file (" +
                                                      std::to_string(file.transmitter_count) + ")");
    }
    if (file.window_length != static_cast<std::size_t>(d.length)) {
        throw ConfigError("dataset.length",
                          "does not match the dataset file (" + std::to_string(file.window_length) + ")");
    }
    return federation::SignalDataset::from_file(file);
}

learner::ModelSpec model_spec(const ExperimentConfig& cfg) {
    learner::ModelSpec spec;
    spec.kind = cfg.model.kind;
    spec.input = {static_cast<std::size_t>(cfg.dataset.length), 2, cfg.training.modalities.size()};
    spec.classes = static_cast<std::size_t>(cfg.dataset.transmitters);
    spec.resnet = cfg.model.widths;
    spec.l2_coeff = cfg.model.l2_coeff;
    spec.validate();
    return spec;
}

PreparedRun prepare_run(const ExperimentConfig& cfg, const federation::SignalDataset& data, std::uint64_t seed) {
    const auto split = federation::split_train_test(data.labels, cfg.dataset.test_fraction, seed);
    auto partition = cfg.partition.mode == PartitionMode::Iid
                         ? federation::partition_iid(data.labels, split.train, cfg.partition.aps, seed)
                         : federation::partition_noniid(data.labels, split.train, cfg.partition.aps,
                                                        cfg.partition.labels_per_ap, cfg.overlap_pairs(), seed);
    const auto spec = model_spec(cfg);
    federation::RfFederation fed(data, std::move(partition), split.test, spec, cfg.training.modalities);
    return {seed, std::move(fed), learner::init_params(spec, derive_seed({seed, kInitStream}))};
}

std::optional<std::pair<analysis::AssumptionEstimates, std::vector<double>>> rf_bound_trace(
    const ExperimentConfig& cfg, const PreparedRun& run) {
    const auto& spec = run.federation.spec();
    if (spec.kind != learner::ModelKind::SoftmaxLinear || !(spec.l2_coeff > 0.0)) return std::nullopt;
    const auto locals = run.federation.local_objectives();
    const auto w = run.w0.values();
    analysis::AssumptionEstimates est;
    est.mu = spec.l2_coeff;
    est.modalities = run.federation.selection().size();
    for (std::size_t n = 0; n < locals.size(); ++n) {
        const auto b = std::min(cfg.training.batch_size, locals[n]->example_count());
        est.sigma2_hat += analysis::estimate_sigma2(*locals[n], w, b, 16, derive_seed({run.seed, kEstimateStream, n}));
    }
    est.sigma2_hat /= static_cast<double>(locals.size());
    est.zeta2_hat = analysis::estimate_zeta2(locals, w);
    const GlobalObjective global(locals);
    analysis::SmoothnessOptions opts;
    opts.pair_trials = 4;
    opts.refinements = 10;
    est.L_hat = std::max(analysis::estimate_smoothness(global, w, opts, derive_seed({run.seed, kEstimateStream})),
                         est.mu);
    analysis::BoundConstants c;
    c.eta = cfg.training.eta;
    c.local_steps = cfg.training.local_steps;
    c.mu = est.mu;
    c.modalities = est.modalities;
    c.L = est.L_hat;
    c.sigma2 = est.sigma2_hat;
    c.zeta2 = est.zeta2_hat;
    c.aps = locals.size();
    if (!(c.contraction() < 1.0)) return std::nullopt;
    const double gap0 = global.evaluate(w, {});
    return std::make_pair(est, analysis::bound_trace(gap0, c, cfg.training.rounds));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads) {
    cfg.validate();
    const auto data = load_dataset(cfg);
    ExperimentResult result;
    result.spec = model_spec(cfg);
    for (auto seed : cfg.training.seeds) {
        const auto run = prepare_run(cfg, data, seed);
        const auto tcfg = cfg.training_config(seed, threads);
        SeedRun out;
        out.seed = seed;
        if (cfg.analysis.bound_trace) {
            if (auto b = rf_bound_trace(cfg, run)) {
                out.estimates = b->first;
                out.bound = std::move(b->second);
            }
        }
        out.training = federation::run_training(run.federation, run.w0, tcfg);
        if (cfg.personalization.enabled) {
            out.personalized = federation::personalize(run.federation, out.training.params,
                                                       cfg.personalization.fine_tune_steps, tcfg);
        }
        result.runs.push_back(std::move(out));
    }
    return result;
}

std::string metrics_csv(const ExperimentResult& result, std::size_t aps) {
    std::string s = "run_id,round,global_loss,global_acc";
    for (std::size_t n = 0; n < aps; ++n) s += ",ap" + std::to_string(n) + "_loss";
    s += ",bound\n";
    for (const auto& run : result.runs) {
        for (const auto& m : run.training.metrics) {
            s += std::to_string(run.seed) + "," + std::to_string(m.round) + "," + num(m.global_loss) + "," +
                 num(m.global_accuracy);
            for (double l : m.ap_losses) s += "," + num(l);
            s += ",";
            if (m.round < run.bound.size()) s += num(run.bound[m.round]);
            s += "\n";
        }
    }
    return s;
}

std::string personalization_csv(const ExperimentResult& result) {
    std::string s = "run_id,ap,test_size,before_acc,after_acc\n";
    for (const auto& run : result.runs) {
        for (std::size_t n = 0; n < run.personalized.size(); ++n) {
            const auto& p = run.personalized[n];
            s += std::to_string(run.seed) + "," + std::to_string(n) + "," + std::to_string(p.test_size) + "," +
                 num(p.before_accuracy) + "," + num(p.after_accuracy) + "\n";
        }
    }
    return s;
}

std::string bound_csv(const analysis::BoundVerification& v) {
    std::string s = "round,mean_gap,std_error,bound,violation\n";
    for (const auto& r : v.rows) {
        s += std::to_string(r.round) + "," + num(r.mean_gap) + "," + num(r.std_error) + "," + num(r.bound) + "," +
             (r.violation ? "1" : "0") + "\n";
    }
    return s;
}

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CommandOptions& options) {
    if (options.out) cfg.output_dir = *options.out;
    if (options.seed_override) {
        cfg.training.seeds = {*options.seed_override};
        if (cfg.analysis.quadratic) cfg.analysis.quadratic->seed = *options.seed_override;
    }
    cfg.validate();
    return cfg;
}

int cmd_gen_data(const ExperimentConfig& config, const CommandOptions& options) {
    const auto cfg = apply_overrides(config, options);
    return with_manifest("gen-data", cfg, [&](Manifest& manifest) {
        const auto path = cfg.dataset.path.value_or(cfg.output_dir / "dataset.flrf");
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        rf::write_dataset(rf::generate_dataset(cfg.dataset.generation()), path);
        manifest.output(path);
        std::cout << "wrote " << path.string() << "\n";
        return 0;
    });
}

int cmd_run(const ExperimentConfig& config, const CommandOptions& options) {
    const auto cfg = apply_overrides(config, options);
    return with_manifest("run", cfg, [&](Manifest& manifest) {
        const auto result = run_experiment(cfg, options.threads);
        const auto metrics = cfg.output_dir / "metrics.csv";
        write_text(metrics, metrics_csv(result, cfg.partition.aps));
        manifest.output(metrics);
        nlohmann::json estimates = nlohmann::json::object();
        for (const auto& run : result.runs) {
            const auto path = model_path(cfg.output_dir, run.seed);
            write_model({result.spec, cfg.training.modalities, run.seed, run.training.params}, path);
            manifest.output(path);
            if (run.estimates) {
                const auto& e = *run.estimates;
                estimates[std::to_string(run.seed)] = {{"L_hat_lower_bound", e.L_hat},
                                                       {"mu", e.mu},
                                                       {"sigma2_hat", e.sigma2_hat},
                                                       {"zeta2_hat", e.zeta2_hat},
                                                       {"modalities", e.modalities}};
            }
            const auto& last = run.training.metrics.back();
            std::cout << "seed " << run.seed << ": round " << last.round << " global_acc " << num(last.global_accuracy)
                      << " global_loss " << num(last.global_loss) << "\n";
        }
        if (!estimates.empty()) manifest.doc()["assumption_estimates"] = estimates;
        if (cfg.personalization.enabled) {
            const auto path = cfg.output_dir / "personalization.csv";
            write_text(path, personalization_csv(result));
            manifest.output(path);
        }
        return 0;
    });
}

analysis::BoundVerification run_quadratic(const QuadraticSection& q, std::size_t threads) {
    federation::TrainingConfig tcfg;
    tcfg.rounds = q.rounds;
    tcfg.local_steps = q.local_steps;
    tcfg.batch_size = q.batch_size;
    tcfg.eta = q.eta;
    tcfg.seed = q.seed;
    tcfg.threads = threads;
    const auto problem = analysis::make_quadratic_problem(q.problem_seed, q.problem);
    return analysis::verify_bound(problem, tcfg, q.seeds);
}

int cmd_verify_bound(const ExperimentConfig& config, const CommandOptions& options) {
    const auto cfg = apply_overrides(config, options);
    if (!cfg.analysis.quadratic) throw ConfigError("analysis.quadratic", "required by verify-bound");
    const auto& q = *cfg.analysis.quadratic;
    // Fail before touching the output directory when the bound cannot apply.
    analysis::BoundConstants pre;
    pre.eta = q.eta;
    pre.local_steps = q.local_steps;
    pre.mu = q.problem.mu;
    pre.modalities = q.problem.modalities;
    pre.validate();
    return with_manifest("verify-bound", cfg, [&](Manifest& manifest) {
        const auto v = run_quadratic(q, options.threads);
        const auto trace = cfg.output_dir / "bound_trace.csv";
        write_text(trace, bound_csv(v));
        manifest.output(trace);
        const auto& c = v.constants;
        manifest.doc()["bound_summary"] = {{"violations", v.violations},
                                           {"rounds_checked", v.rows.size()},
                                           {"violation_fraction", v.violation_fraction},
                                           {"L", c.L},
                                           {"mu", c.mu},
                                           {"sigma2", c.sigma2},
                                           {"zeta2", c.zeta2},
                                           {"contraction", c.contraction()}};
        std::cout << "violations " << v.violations << " of " << v.rows.size() << " rounds (fraction "
                  << num(v.violation_fraction) << ")\n";
        return v.violation_fraction <= 0.01 ? 0 : 3;
    });
}

int cmd_personalize(const ExperimentConfig& config, const CommandOptions& options) {
    const auto cfg = apply_overrides(config, options);
    const auto path = options.model.value_or(model_path(cfg.output_dir, cfg.training.seeds.front()));
    if (!std::filesystem::exists(path)) throw Error("missing model file " + path.string());
    const auto model = read_model(path);
    if (!(model.spec == model_spec(cfg)) || !(model.modalities == cfg.training.modalities)) {
        throw ConfigError("model", "model file " + path.string() + " was trained with a different model or modality set");
    }
    return with_manifest("personalize", cfg, [&](Manifest& manifest) {
        const auto data = load_dataset(cfg);
        const auto run = prepare_run(cfg, data, model.seed);
        ExperimentResult result;
        result.spec = model.spec;
        SeedRun out;
        out.seed = model.seed;
        out.personalized = federation::personalize(run.federation, model.params, cfg.personalization.fine_tune_steps,
                                                   cfg.training_config(model.seed, options.threads));
        result.runs.push_back(std::move(out));
        const auto table = cfg.output_dir / "personalization.csv";
        write_text(table, personalization_csv(result));
        manifest.output(table);
        std::cout << "ap  test_size  before_acc  after_acc\n";
        for (std::size_t n = 0; n < result.runs[0].personalized.size(); ++n) {
            const auto& p = result.runs[0].personalized[n];
            char line[128];
            std::snprintf(line, sizeof line, "%-3zu %-10zu %-11.6f %.6f\n", n, p.test_size, p.before_accuracy,
                          p.after_accuracy);
            std::cout << line;
        }
        return 0;
    });
}

}  // namespace flame::experiment
