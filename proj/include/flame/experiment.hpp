#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flame/analysis.hpp"
#include "flame/federation.hpp"
#include "flame/learner.hpp"
#include "flame/modality.hpp"
#include "flame/rf_signal.hpp"

namespace flame::experiment {

enum class PartitionMode { Iid, NonIid };

struct DatasetSection {
    int transmitters = 16;
    int per_tx_count = 200;
    int length = 64;
    double snr_db = 10.0;
    std::uint64_t seed = 7;
    // When set, records are read from this file instead of being generated.
    std::optional<std::filesystem::path> path;
    double test_fraction = 0.25;
    rf::SymbolSource symbols = rf::SymbolSource::Preamble;

    rf::GenerationParams generation() const;
};

struct PartitionSection {
    PartitionMode mode = PartitionMode::NonIid;
    std::size_t aps = 4;
    std::size_t labels_per_ap = 5;
    // Defaults to aps * labels_per_ap - transmitters.
    std::optional<std::size_t> overlap_pairs;
};

struct ModelSection {
    learner::ModelKind kind = learner::ModelKind::SoftmaxLinear;
    learner::ResnetWidths widths;
    double l2_coeff = 1e-3;
};

struct TrainingSection {
    std::size_t rounds = 100;
    std::size_t local_steps = 20;
    std::size_t batch_size = 32;
    double eta = 0.01;
    modality::ModalitySet modalities = modality::ModalitySet::all();
    std::size_t eval_stride = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
};

struct QuadraticSection {
    analysis::QuadraticOptions problem;
    std::uint64_t problem_seed = 1;
    std::size_t local_steps = 5;
    std::size_t batch_size = 8;
    double eta = 0.04;
    std::size_t rounds = 50;
    std::size_t seeds = 200;
    std::uint64_t seed = 1;
};

struct AnalysisSection {
    bool bound_trace = false;
    std::optional<QuadraticSection> quadratic;
};

struct PersonalizationSection {
    bool enabled = false;
    std::optional<std::size_t> fine_tune_steps;
};

struct ExperimentConfig {
    DatasetSection dataset;
    PartitionSection partition;
    ModelSection model;
    TrainingSection training;
    AnalysisSection analysis;
    PersonalizationSection personalization;
    std::filesystem::path output_dir = "out";

    void validate() const;
    std::size_t overlap_pairs() const;
    federation::TrainingConfig training_config(std::uint64_t seed, std::size_t threads) const;
};

// Throws ConfigError naming the dotted key for unknown keys, wrong types and
// invalid values.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);
// Every field, defaults included, as pretty-printed JSON.
std::string config_to_json(const ExperimentConfig& cfg);

struct PreparedRun {
    std::uint64_t seed = 0;
    federation::RfFederation federation;
    ParamVector w0;
};

federation::SignalDataset load_dataset(const ExperimentConfig& cfg);
learner::ModelSpec model_spec(const ExperimentConfig& cfg);
// Split, partition, federation and initial parameters for one seed.
PreparedRun prepare_run(const ExperimentConfig& cfg, const federation::SignalDataset& data, std::uint64_t seed);

struct SeedRun {
    std::uint64_t seed = 0;
    federation::TrainingResult training;
    // Per-round bound values at rounds 0..T; empty when not computed.
    std::vector<double> bound;
    std::optional<analysis::AssumptionEstimates> estimates;
    std::vector<federation::PersonalizedAp> personalized;
};

struct ExperimentResult {
    learner::ModelSpec spec;
    std::vector<SeedRun> runs;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads);

// Bound values for a softmax_linear run: mu = l2 coefficient, gap0 = f(w0)
// (the objective is non-negative), sigma^2, zeta^2 and L_hat measured at w0.
// Returns nullopt when the model has no strong convexity or the bound does
// not contract.
std::optional<std::pair<analysis::AssumptionEstimates, std::vector<double>>> rf_bound_trace(
    const ExperimentConfig& cfg, const PreparedRun& run);

// Builds the configured quadratic problem and runs verify_bound on it.
analysis::BoundVerification run_quadratic(const QuadraticSection& q, std::size_t threads);

// CSV with the header run_id,round,global_loss,global_acc,ap0_loss..,bound.
std::string metrics_csv(const ExperimentResult& result, std::size_t aps);
std::string personalization_csv(const ExperimentResult& result);
std::string bound_csv(const analysis::BoundVerification& v);

// Model file: magic "FLMD", u32 version, u64 JSON length, JSON header
// (spec, modalities, seed), u64 parameter count, float64 parameters.
struct ModelFile {
    learner::ModelSpec spec;
    modality::ModalitySet modalities = modality::ModalitySet::all();
    std::uint64_t seed = 0;
    ParamVector params;
};

void write_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile read_model(const std::filesystem::path& path);

struct CommandOptions {
    std::optional<std::filesystem::path> out;
    std::size_t threads = 1;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::filesystem::path> model;
};

// Applies --out and --seed-override to a parsed config.
ExperimentConfig apply_overrides(ExperimentConfig cfg, const CommandOptions& options);

int cmd_gen_data(const ExperimentConfig& cfg, const CommandOptions& options);
int cmd_run(const ExperimentConfig& cfg, const CommandOptions& options);
int cmd_verify_bound(const ExperimentConfig& cfg, const CommandOptions& options);
int cmd_personalize(const ExperimentConfig& cfg, const CommandOptions& options);

std::string version();

}  // namespace flame::experiment
