#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "flame/learner.hpp"
#include "flame/modality.hpp"
#include "flame/objective.hpp"
#include "flame/params.hpp"
#include "flame/rf_signal.hpp"

namespace flame::federation {

// Per-AP local datasets D_n (indices into the full dataset) and label sets A_n.
struct Partition {
    std::vector<std::vector<std::size_t>> examples;
    std::vector<std::vector<int>> labels;  // sorted ascending

    std::size_t aps() const noexcept { return examples.size(); }
    // Checks index disjointness and that every A_n is the label set of D_n.
    void validate(std::span<const int> dataset_labels) const;
};

struct TrainTestSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified per label; each label keeps round(test_fraction * count) test examples.
TrainTestSplit split_train_test(std::span<const int> labels, double test_fraction, std::uint64_t seed);

// Round-robin per label after a seeded shuffle, so every AP sees every label.
// `pool` restricts the partition to a subset of dataset indices.
Partition partition_iid(std::span<const int> labels, std::span<const std::size_t> pool, std::size_t aps,
                        std::uint64_t seed);

// Label-skewed split: labels_per_ap slots per AP, exactly overlap_pairs labels
// held by two APs, none by more than two, every label covered. Shared labels
// are spread over distinct AP pairs while pairs remain unused.
Partition partition_noniid(std::span<const int> labels, std::span<const std::size_t> pool, std::size_t aps,
                           std::size_t labels_per_ap, std::size_t overlap_pairs, std::uint64_t seed);

struct TrainingConfig {
    std::size_t rounds = 100;      // T; 0 runs no rounds
    std::size_t local_steps = 20;  // J
    std::size_t batch_size = 32;   // B
    double eta = 0.01;
    std::size_t eval_stride = 1;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    void validate() const;
};

// J plain SGD steps from w_global on mini-batches of min(B, |D_n|) examples
// drawn without replacement from a shuffled epoch; a fresh shuffle starts when
// fewer than a full batch remain. The stream depends only on (seed, ap, round).
ParamVector local_train(const LocalObjective& local, const ParamVector& w_global, const TrainingConfig& cfg,
                        std::size_t ap, std::size_t round);

// Same loop with an explicit step count and generator.
ParamVector local_sgd(const LocalObjective& local, ParamVector w, std::size_t steps, std::size_t batch_size,
                      double eta, Rng& rng);

// Unweighted elementwise mean. Each coordinate is reduced over its sorted
// values, which makes the result independent of the input order and exact for
// identical inputs.
ParamVector aggregate(std::span<const ParamVector> params);

// Called after every aggregation with the round number t+1, the new global
// parameters and the local parameters it was built from.
using RoundObserver =
    std::function<void(std::size_t round, const ParamVector& global, std::span<const ParamVector> locals)>;

// Algorithm loop over generic local objectives. Returns w^(T).
ParamVector run_rounds(std::span<const LocalObjective* const> locals, ParamVector w0, const TrainingConfig& cfg,
                       const RoundObserver& observer = {});

// In-memory dataset: decoded waveforms and labels.
struct SignalDataset {
    std::vector<rf::ComplexWaveform> waveforms;
    std::vector<int> labels;
    std::size_t classes = 0;
    std::size_t window_length = 0;

    static SignalDataset from_file(const rf::DatasetFile& file);
};

// RF fingerprinting federation prepared for training: every AP's inputs are
// stacked and standardized with statistics fit on its own D_n; the global
// test set uses statistics fit on the union of all D_n.
class RfFederation {
public:
    RfFederation(const SignalDataset& data, Partition partition, std::vector<std::size_t> test_indices,
                 learner::ModelSpec spec, modality::ModalitySet selection);

    std::size_t aps() const noexcept { return locals_.size(); }
    const learner::ModelSpec& spec() const noexcept { return spec_; }
    const Partition& partition() const noexcept { return partition_; }
    const modality::ModalitySet& selection() const noexcept { return selection_; }
    const learner::LearnerObjective& local(std::size_t n) const { return locals_.at(n); }
    std::vector<const LocalObjective*> local_objectives() const;
    const learner::LearnerObjective& test_set() const noexcept { return *test_; }
    const modality::NormalizationStats& ap_stats(std::size_t n) const { return *ap_stats_.at(n); }
    const modality::NormalizationStats& global_stats() const noexcept { return *global_stats_; }

private:
    learner::ModelSpec spec_;
    modality::ModalitySet selection_;
    Partition partition_;
    std::vector<std::shared_ptr<const modality::NormalizationStats>> ap_stats_;
    std::shared_ptr<const modality::NormalizationStats> global_stats_;
    std::vector<learner::LearnerObjective> locals_;
    std::optional<learner::LearnerObjective> test_;
};

struct RoundMetrics {
    std::size_t round = 0;
    double global_loss = 0.0;
    double global_accuracy = 0.0;
    std::vector<double> ap_losses;  // local model on its own D_n, after local training
    double wall_seconds = 0.0;
};

struct TrainingResult {
    ParamVector params;
    std::vector<RoundMetrics> metrics;
};

// Evaluates on round t when t % eval_stride == 0 and always on the final round.
TrainingResult run_training(const RfFederation& fed, const ParamVector& w0, const TrainingConfig& cfg);

learner::EvalResult evaluate(const learner::ModelSpec& spec, const ParamVector& params,
                             const learner::Batch& test_set);

struct PersonalizedAp {
    ParamVector params;
    double before_accuracy = 0.0;
    double after_accuracy = 0.0;
    std::size_t test_size = 0;
};

// Default fine-tuning length: five passes over D_n at batch size B.
std::size_t default_fine_tune_steps(std::size_t local_examples, std::size_t batch_size);

// Fine-tunes w_global on each AP's D_n and scores it on the global test
// examples whose labels are in A_n. fine_tune_steps = nullopt uses the default.
std::vector<PersonalizedAp> personalize(const RfFederation& fed, const ParamVector& w_global,
                                        std::optional<std::size_t> fine_tune_steps, const TrainingConfig& cfg);

}  // namespace flame::federation
