#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "flame/modality.hpp"
#include "flame/objective.hpp"
#include "flame/params.hpp"

namespace flame::learner {

enum class ModelKind { SoftmaxLinear, MiniResnet };

std::string_view kind_name(ModelKind k);  // "softmax_linear", "mini_resnet"
ModelKind parse_kind(std::string_view s);

// Reduced residual CNN widths. Kernels are kernel x 1 along time, same padding.
struct ResnetWidths {
    std::size_t block1 = 8;
    std::size_t block2 = 16;
    std::size_t trunk = 8;
    std::size_t hidden = 32;
    std::size_t kernel = 3;

    friend bool operator==(const ResnetWidths&, const ResnetWidths&) = default;
};

struct ModelSpec {
    ModelKind kind = ModelKind::SoftmaxLinear;
    modality::InputShape input;
    std::size_t classes = 2;
    ResnetWidths resnet;
    double l2_coeff = 0.0;

    void validate() const;
    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::shared_ptr<const ParamLayout> make_layout(const ModelSpec& spec);
std::size_t param_count(const ModelSpec& spec);

// Uniform weights scaled by layer fan-in, zero biases.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct Batch {
    std::vector<const modality::ModalInput*> inputs;
    std::vector<int> labels;

    std::size_t size() const noexcept { return inputs.size(); }
    void validate() const;
};

Batch make_batch(std::span<const modality::ModalInput> inputs, std::span<const int> labels);

std::vector<double> logits(const ModelSpec& spec, const ParamVector& params, const modality::ModalInput& input);
// Softmax class probabilities.
std::vector<double> forward(const ModelSpec& spec, const ParamVector& params, const modality::ModalInput& input);
std::vector<double> softmax(std::span<const double> logits);

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);
int predict(const ModelSpec& spec, const ParamVector& params, const modality::ModalInput& input);

struct LossAndGrad {
    double loss;
    GradVector grad;
};

// Mean cross-entropy over the batch plus (l2/2)||w||^2, and its exact gradient.
LossAndGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch);
double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Mean cross-entropy without the regularizer, plus accuracy.
struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// ReLU on/off pattern and max-pool winners for every example of the batch.
// Empty for softmax_linear. Two parameter vectors with the same signature lie
// on the same smooth piece of the loss.
std::vector<std::uint8_t> activation_signature(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Relative error |a - b| / max(|a|, |b|, floor) used by the gradient checks.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckOptions {
    double step = 1e-5;
    // 0 checks every coordinate; otherwise this many distinct coordinates are sampled.
    std::size_t sample_coords = 0;
    std::uint64_t seed = 1;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t rejected_at_kink = 0;
};

// Central differences against loss_and_grad. For mini_resnet, sampled
// coordinates whose +-step perturbation changes the activation signature are
// rejected and replaced.
GradCheckResult finite_diff_check(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                                  const GradCheckOptions& options);

// Central differences on a generic objective over the given coordinates.
GradCheckResult finite_diff_check(const Objective& objective, std::span<const double> w, double step,
                                  std::span<const std::size_t> coords);

// Local dataset of stacked inputs exposed to the federated engine.
class LearnerObjective final : public LocalObjective {
public:
    LearnerObjective(ModelSpec spec, std::vector<modality::ModalInput> inputs, std::vector<int> labels);

    std::size_t dimension() const override { return layout_->total(); }
    std::size_t example_count() const override { return inputs_.size(); }
    double evaluate_batch(std::span<const std::size_t> batch, std::span<const double> w,
                          std::span<double> grad) const override;

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::shared_ptr<const ParamLayout>& layout() const noexcept { return layout_; }
    const std::vector<modality::ModalInput>& inputs() const noexcept { return inputs_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    Batch batch(std::span<const std::size_t> indices) const;
    Batch full_batch() const;

private:
    ModelSpec spec_;
    std::shared_ptr<const ParamLayout> layout_;
    std::vector<modality::ModalInput> inputs_;
    std::vector<int> labels_;
};

}  // namespace flame::learner
