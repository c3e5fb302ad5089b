#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "flame/error.hpp"
#include "flame/federation.hpp"
#include "flame/parallel.hpp"
#include "flame/random.hpp"

namespace flame::federation {

namespace {

constexpr std::uint64_t kLocalStream = 0x6c6f6361ULL;
constexpr std::uint64_t kPersonalStream = 0x70657273ULL;

}  // namespace

void TrainingConfig::validate() const {
    if (local_steps < 1) throw InvalidArgument("local_steps must be at least 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (!std::isfinite(eta) || eta < 0.0) throw InvalidArgument("eta must be finite and non-negative");
    if (eval_stride < 1) throw InvalidArgument("eval_stride must be at least 1");
}

ParamVector local_sgd(const LocalObjective& local, ParamVector w, std::size_t steps, std::size_t batch_size,
                      double eta, Rng& rng) {
    const std::size_t m = local.example_count();
    if (m == 0) throw InvalidArgument("local dataset is empty");
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    if (w.size() != local.dimension()) {
        throw ShapeMismatch("parameter vector does not match the local objective");
    }
    const std::size_t b = std::min(batch_size, m);
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::size_t cursor = m;  // forces a shuffle before the first step
    std::vector<std::size_t> batch(b);
    std::vector<double> grad(w.size());
    for (std::size_t step = 0; step < steps; ++step) {
        if (m - cursor < b) {
            rng.shuffle(order.begin(), order.end());
            cursor = 0;
        }
        std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(cursor), b, batch.begin());
        std::sort(batch.begin(), batch.end());
        cursor += b;
        local.evaluate_batch(batch, w.values(), grad);
        for (std::size_t i = 0; i < grad.size(); ++i) w[i] -= eta * grad[i];
    }
    return w;
}

ParamVector local_train(const LocalObjective& local, const ParamVector& w_global, const TrainingConfig& cfg,
                        std::size_t ap, std::size_t round) {
    Rng rng(derive_seed({cfg.seed, kLocalStream, ap, round}));
    return local_sgd(local, w_global, cfg.local_steps, cfg.batch_size, cfg.eta, rng);
}

ParamVector aggregate(std::span<const ParamVector> params) {
    if (params.empty()) throw InvalidArgument("nothing to aggregate");
    for (const auto& p : params) require_same_layout(params.front(), p, "aggregate");
    const std::size_t n = params.size();
    ParamVector out(params.front().layout());
    std::vector<double> column(n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t k = 0; k < n; ++k) column[k] = params[k][i];
        std::sort(column.begin(), column.end());
        const double base = column.front();
        double acc = 0.0;
        for (double v : column) acc += v - base;
        out[i] = base + acc / static_cast<double>(n);
    }
    return out;
}

ParamVector run_rounds(std::span<const LocalObjective* const> locals, ParamVector w0, const TrainingConfig& cfg,
                       const RoundObserver& observer) {
    cfg.validate();
    if (locals.empty()) throw InvalidArgument("need at least one AP");
    for (const auto* l : locals) {
        if (l->dimension() != w0.size()) throw ShapeMismatch("initial parameters do not match an AP objective");
    }
    ParamVector w = std::move(w0);
    std::vector<ParamVector> updated(locals.size());
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        parallel_for(locals.size(), cfg.threads,
                     [&](std::size_t n) { updated[n] = local_train(*locals[n], w, cfg, n, t); });
        w = aggregate(updated);
        if (observer) observer(t + 1, w, updated);
    }
    return w;
}

SignalDataset SignalDataset::from_file(const rf::DatasetFile& file) {
    file.validate();
    SignalDataset data;
    data.classes = file.transmitter_count;
    data.window_length = file.window_length;
    data.waveforms.reserve(file.records.size());
    for (std::size_t i = 0; i < file.records.size(); ++i) {
        data.waveforms.push_back(file.waveform(i));
        data.labels.push_back(file.records[i].label);
    }
    return data;
}

namespace {

learner::LearnerObjective stacked(const SignalDataset& data, std::span<const std::size_t> indices,
                                  const learner::ModelSpec& spec, const modality::ModalitySet& selection,
                                  const std::shared_ptr<const modality::NormalizationStats>& stats) {
    std::vector<modality::ModalInput> inputs;
    std::vector<int> labels;
    inputs.reserve(indices.size());
    for (auto i : indices) {
        inputs.push_back(modality::stack_modalities(data.waveforms.at(i), selection, stats));
        labels.push_back(data.labels[i]);
    }
    return learner::LearnerObjective(spec, std::move(inputs), std::move(labels));
}

std::vector<rf::ComplexWaveform> gather(const SignalDataset& data, std::span<const std::size_t> indices) {
    std::vector<rf::ComplexWaveform> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(data.waveforms.at(i));
    return out;
}

}  // namespace

RfFederation::RfFederation(const SignalDataset& data, Partition partition, std::vector<std::size_t> test_indices,
                           learner::ModelSpec spec, modality::ModalitySet selection)
    : spec_(std::move(spec)), selection_(std::move(selection)), partition_(std::move(partition)) {
    spec_.validate();
    const modality::InputShape expected{data.window_length, 2, selection_.size()};
    if (!(spec_.input == expected)) {
        throw ShapeMismatch("model input shape does not match window length and modality count");
    }
    if (spec_.classes < data.classes) throw InvalidArgument("model has fewer classes than the dataset");
    partition_.validate(data.labels);
    for (auto i : test_indices) {
        for (const auto& d : partition_.examples) {
            if (std::binary_search(d.begin(), d.end(), i)) {
                throw InvalidArgument("test example " + std::to_string(i) + " is also a training example");
            }
        }
    }

    std::vector<std::size_t> pool;
    for (std::size_t n = 0; n < partition_.aps(); ++n) {
        const auto& d = partition_.examples[n];
        pool.insert(pool.end(), d.begin(), d.end());
        auto stats = std::make_shared<const modality::NormalizationStats>(
            modality::fit_normalization(gather(data, d), selection_));
        locals_.push_back(stacked(data, d, spec_, selection_, stats));
        ap_stats_.push_back(std::move(stats));
    }
    std::sort(pool.begin(), pool.end());
    global_stats_ = std::make_shared<const modality::NormalizationStats>(
        modality::fit_normalization(gather(data, pool), selection_));
    std::sort(test_indices.begin(), test_indices.end());
    test_.emplace(stacked(data, test_indices, spec_, selection_, global_stats_));
}

std::vector<const LocalObjective*> RfFederation::local_objectives() const {
    std::vector<const LocalObjective*> out;
    for (const auto& l : locals_) out.push_back(&l);
    return out;
}

learner::EvalResult evaluate(const learner::ModelSpec& spec, const ParamVector& params,
                             const learner::Batch& test_set) {
    return learner::evaluate(spec, params, test_set);
}

TrainingResult run_training(const RfFederation& fed, const ParamVector& w0, const TrainingConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const auto test = fed.test_set().full_batch();
    TrainingResult result;
    const auto locals = fed.local_objectives();
    auto observer = [&](std::size_t round, const ParamVector& global, std::span<const ParamVector> updated) {
        if (round % cfg.eval_stride != 0 && round != cfg.rounds) return;
        RoundMetrics m;
        m.round = round;
        if (test.size() > 0) {
            const auto r = learner::evaluate(fed.spec(), global, test);
            m.global_loss = r.loss;
            m.global_accuracy = r.accuracy;
        }
        m.ap_losses.resize(updated.size());
        parallel_for(updated.size(), cfg.threads, [&](std::size_t n) {
            m.ap_losses[n] = learner::evaluate(fed.spec(), updated[n], fed.local(n).full_batch()).loss;
        });
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.metrics.push_back(std::move(m));
    };
    result.params = run_rounds(locals, w0, cfg, observer);
    return result;
}

std::size_t default_fine_tune_steps(std::size_t local_examples, std::size_t batch_size) {
    if (local_examples == 0 || batch_size == 0) throw InvalidArgument("empty local dataset or batch");
    const std::size_t b = std::min(batch_size, local_examples);
    return 5 * (local_examples / b);
}

std::vector<PersonalizedAp> personalize(const RfFederation& fed, const ParamVector& w_global,
                                        std::optional<std::size_t> fine_tune_steps, const TrainingConfig& cfg) {
    const auto& test = fed.test_set();
    std::vector<PersonalizedAp> out(fed.aps());
    std::vector<std::vector<std::size_t>> subsets(fed.aps());
    for (std::size_t n = 0; n < fed.aps(); ++n) {
        const auto& an = fed.partition().labels[n];
        for (std::size_t i = 0; i < test.example_count(); ++i) {
            if (std::binary_search(an.begin(), an.end(), test.labels()[i])) subsets[n].push_back(i);
        }
        if (subsets[n].empty()) {
            throw InvalidArgument("personalized test set is empty for AP " + std::to_string(n));
        }
    }
    parallel_for(fed.aps(), cfg.threads, [&](std::size_t n) {
        const auto& local = fed.local(n);
        const auto steps = fine_tune_steps.value_or(default_fine_tune_steps(local.example_count(), cfg.batch_size));
        Rng rng(derive_seed({cfg.seed, kPersonalStream, n}));
        const auto batch = test.batch(subsets[n]);
        auto& ap = out[n];
        ap.test_size = subsets[n].size();
        ap.before_accuracy = learner::evaluate(fed.spec(), w_global, batch).accuracy;
        ap.params = local_sgd(local, w_global, steps, cfg.batch_size, cfg.eta, rng);
        ap.after_accuracy = learner::evaluate(fed.spec(), ap.params, batch).accuracy;
    });
    return out;
}

}  // namespace flame::federation
