#include "flame/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flame/error.hpp"
#include "flame/random.hpp"
#include "models.hpp"

namespace flame::learner {

std::string_view kind_name(ModelKind k) {
    return k == ModelKind::SoftmaxLinear ? "softmax_linear" : "mini_resnet";
}

ModelKind parse_kind(std::string_view s) {
    if (s == "softmax_linear") return ModelKind::SoftmaxLinear;
    if (s == "mini_resnet") return ModelKind::MiniResnet;
    throw InvalidArgument("unknown model kind '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
    if (classes < 2) {
        throw InvalidArgument("model needs at least 2 classes");
    }
    if (!(l2_coeff >= 0.0) || !std::isfinite(l2_coeff)) {
        throw InvalidArgument("l2_coeff must be finite and >= 0");
    }
    if (input.length < 1 || input.width != 2 || input.channels < 1 || input.channels > modality::kModalityCount) {
        throw InvalidArgument("input shape must be l x 2 x M with M in {1,2,3}");
    }
    if (kind == ModelKind::MiniResnet) {
        const auto& r = resnet;
        if (r.block1 < 1 || r.block2 < 1 || r.trunk < 1 || r.hidden < 1) {
            throw InvalidArgument("mini_resnet widths must be >= 1");
        }
        if (r.kernel < 1 || r.kernel % 2 == 0) {
            throw InvalidArgument("mini_resnet kernel must be odd");
        }
        if (input.length < 4 || input.length % 4 != 0) {
            throw InvalidArgument("mini_resnet needs a window length divisible by 4");
        }
    }
}

std::shared_ptr<const ParamLayout> make_layout(const ModelSpec& spec) {
    spec.validate();
    auto layout = std::make_shared<ParamLayout>();
    if (spec.kind == ModelKind::SoftmaxLinear) {
        detail::softmax_linear_layout(spec, *layout);
    } else {
        detail::mini_resnet_layout(spec, *layout);
    }
    return layout;
}

std::size_t param_count(const ModelSpec& spec) { return make_layout(spec)->total(); }

namespace {

// Fan-in of a weight segment: the row length of its [out][fan_in] layout.
std::size_t fan_in(const ModelSpec& spec, const Segment& s) {
    if (spec.kind == ModelKind::SoftmaxLinear) {
        return spec.input.size();
    }
    const detail::ResnetGeometry g(spec);
    const std::string& n = s.name;
    if (n == "fc1.w") return g.flat;
    if (n == "fc2.w") return g.hidden;
    if (n == "b1.conv1.w") return g.ch0 * g.kernel;
    if (n.starts_with("b1.")) return g.ch1 * g.kernel;
    if (n == "b2.conv1.w") return g.ch1 * g.kernel;
    return g.ch2 * g.kernel;  // b2.conv2/3 and trunk
}

// Layers feeding a ReLU get the He range sqrt(6/fan_in); the rest sqrt(3/fan_in).
bool feeds_relu(const ModelSpec& spec, const std::string& name) {
    if (spec.kind == ModelKind::SoftmaxLinear) return false;
    return name.ends_with("conv2.w") || name == "trunk.w" || name == "fc1.w";
}

double log_sum_exp(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double acc = 0.0;
    for (double v : z) acc += std::exp(v - mx);
    return mx + std::log(acc);
}

struct Evaluator {
    const ModelSpec& spec;
    const ParamLayout& layout;
    std::span<const double> w;
    detail::ResnetCache cache;

    void logits(const modality::ModalInput& x, std::span<double> z) {
        if (x.shape != spec.input) {
            throw ShapeMismatch("input shape does not match model spec");
        }
        if (spec.kind == ModelKind::SoftmaxLinear) {
            detail::softmax_linear_logits(spec, w, x, z);
        } else {
            detail::mini_resnet_forward(spec, layout, w, x, cache, z);
        }
    }

    void backward(const modality::ModalInput& x, std::span<const double> dz, std::span<double> grad) {
        if (spec.kind == ModelKind::SoftmaxLinear) {
            detail::softmax_linear_backward(spec, x, dz, grad);
        } else {
            detail::mini_resnet_backward(spec, layout, w, cache, dz, grad);
        }
    }
};

void require_params(const ModelSpec& spec, const ParamLayout& layout, std::span<const double> w) {
    (void)spec;
    if (w.size() != layout.total()) {
        throw LayoutMismatch("parameter vector length does not match model spec");
    }
}

// Shared by loss_and_grad and the LocalObjective adapter.
double batch_objective(const ModelSpec& spec, const ParamLayout& layout, std::span<const double> w,
                       const Batch& batch, std::span<double> grad) {
    batch.validate();
    require_params(spec, layout, w);
    Evaluator ev{spec, layout, w, {}};
    std::vector<double> z(spec.classes), dz(spec.classes);
    const bool want_grad = !grad.empty();
    if (want_grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& x = *batch.inputs[i];
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        ev.logits(x, z);
        const double lse = log_sum_exp(z);
        total += lse - z[y];
        if (want_grad) {
            for (std::size_t k = 0; k < spec.classes; ++k) {
                dz[k] = std::exp(z[k] - lse) * inv_b;
            }
            dz[y] -= inv_b;
            ev.backward(x, dz, grad);
        }
    }
    double loss = total * inv_b;
    if (spec.l2_coeff > 0.0) {
        loss += 0.5 * spec.l2_coeff * squared_norm(w);
        if (want_grad) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                grad[j] += spec.l2_coeff * w[j];
            }
        }
    }
    return loss;
}

}  // namespace

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    auto layout = make_layout(spec);
    ParamVector p(layout);
    Rng rng(derive_seed({seed, 0x696e6974ULL}));
    for (const auto& s : layout->segments()) {
        if (s.is_bias) {
            continue;
        }
        const double gain = feeds_relu(spec, s.name) ? 6.0 : 3.0;
        const double bound = std::sqrt(gain / static_cast<double>(fan_in(spec, s)));
        for (std::size_t i = 0; i < s.size; ++i) {
            p[s.offset + i] = rng.uniform(-bound, bound);
        }
    }
    return p;
}

void Batch::validate() const {
    if (inputs.empty()) {
        throw InvalidArgument("batch must be non-empty");
    }
    if (inputs.size() != labels.size()) {
        throw InvalidArgument("batch inputs and labels differ in length");
    }
    for (const auto* x : inputs) {
        if (x == nullptr || x->shape != inputs.front()->shape) {
            throw ShapeMismatch("batch tensors must share one shape");
        }
    }
}

Batch make_batch(std::span<const modality::ModalInput> inputs, std::span<const int> labels) {
    Batch b;
    for (const auto& x : inputs) b.inputs.push_back(&x);
    b.labels.assign(labels.begin(), labels.end());
    return b;
}

std::vector<double> logits(const ModelSpec& spec, const ParamVector& params, const modality::ModalInput& input) {
    auto layout = make_layout(spec);
    require_params(spec, *layout, params.values());
    Evaluator ev{spec, *layout, params.values(), {}};
    std::vector<double> z(spec.classes);
    ev.logits(input, z);
    return z;
}

std::vector<double> softmax(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - mx);
        acc += p[k];
    }
    for (auto& v : p) v /= acc;
    return p;
}

std::vector<double> forward(const ModelSpec& spec, const ParamVector& params, const modality::ModalInput& input) {
    return softmax(logits(spec, params, input));
}

int argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[best]) best = k;
    }
    return static_cast<int>(best);
}

int predict(const ModelSpec& spec, const ParamVector& params, const modality::ModalInput& input) {
    return argmax(forward(spec, params, input));
}

LossAndGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    auto layout = make_layout(spec);
    GradVector g(params.layout() ? params.layout() : layout);
    const double l = batch_objective(spec, *layout, params.values(), batch, g.values());
    return {l, std::move(g)};
}

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    auto layout = make_layout(spec);
    return batch_objective(spec, *layout, params.values(), batch, {});
}

EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    batch.validate();
    auto layout = make_layout(spec);
    require_params(spec, *layout, params.values());
    Evaluator ev{spec, *layout, params.values(), {}};
    std::vector<double> z(spec.classes);
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ev.logits(*batch.inputs[i], z);
        total += log_sum_exp(z) - z[static_cast<std::size_t>(batch.labels[i])];
        if (argmax(softmax(z)) == batch.labels[i]) ++correct;
    }
    const double n = static_cast<double>(batch.size());
    return {total / n, static_cast<double>(correct) / n};
}

std::vector<std::uint8_t> activation_signature(const ModelSpec& spec, const ParamVector& params,
                                               const Batch& batch) {
    std::vector<std::uint8_t> sig;
    if (spec.kind == ModelKind::SoftmaxLinear) {
        return sig;
    }
    auto layout = make_layout(spec);
    Evaluator ev{spec, *layout, params.values(), {}};
    std::vector<double> z(spec.classes);
    for (const auto* x : batch.inputs) {
        ev.logits(*x, z);
        detail::mini_resnet_signature(ev.cache, sig);
    }
    return sig;
}

namespace {

double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kGradCheckFloor});
}

}  // namespace

GradCheckResult finite_diff_check(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                                  const GradCheckOptions& options) {
    if (!(options.step > 0.0)) {
        throw InvalidArgument("finite-difference step must be > 0");
    }
    const auto analytic = loss_and_grad(spec, params, batch);
    const std::size_t dim = params.size();
    const auto base_sig = activation_signature(spec, params, batch);

    std::vector<std::size_t> order(dim);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool sampled = options.sample_coords > 0 && options.sample_coords < dim;
    if (sampled) {
        Rng rng(derive_seed({options.seed, 0x66646368ULL}));
        rng.shuffle(order.begin(), order.end());
    }
    const std::size_t want = sampled ? options.sample_coords : dim;

    GradCheckResult res;
    ParamVector probe = params;
    for (std::size_t idx : order) {
        if (res.checked >= want) break;
        const double orig = probe[idx];
        probe[idx] = orig + options.step;
        const double fp = loss(spec, probe, batch);
        const bool kink_plus = !base_sig.empty() && activation_signature(spec, probe, batch) != base_sig;
        probe[idx] = orig - options.step;
        const double fm = loss(spec, probe, batch);
        const bool kink_minus = !base_sig.empty() && activation_signature(spec, probe, batch) != base_sig;
        probe[idx] = orig;
        if (kink_plus || kink_minus) {
            ++res.rejected_at_kink;
            continue;
        }
        const double fd = (fp - fm) / (2.0 * options.step);
        res.max_rel_error = std::max(res.max_rel_error, rel_error(fd, analytic.grad[idx]));
        ++res.checked;
    }
    return res;
}

GradCheckResult finite_diff_check(const Objective& objective, std::span<const double> w, double step,
                                  std::span<const std::size_t> coords) {
    if (!(step > 0.0)) {
        throw InvalidArgument("finite-difference step must be > 0");
    }
    std::vector<double> grad(objective.dimension());
    objective.evaluate(w, grad);
    std::vector<double> probe(w.begin(), w.end());
    GradCheckResult res;
    for (std::size_t idx : coords) {
        const double orig = probe[idx];
        probe[idx] = orig + step;
        const double fp = objective.evaluate(probe, {});
        probe[idx] = orig - step;
        const double fm = objective.evaluate(probe, {});
        probe[idx] = orig;
        res.max_rel_error = std::max(res.max_rel_error, rel_error((fp - fm) / (2.0 * step), grad[idx]));
        ++res.checked;
    }
    return res;
}

LearnerObjective::LearnerObjective(ModelSpec spec, std::vector<modality::ModalInput> inputs, std::vector<int> labels)
    : spec_(std::move(spec)), layout_(make_layout(spec_)), inputs_(std::move(inputs)), labels_(std::move(labels)) {
    if (inputs_.size() != labels_.size()) {
        throw InvalidArgument("inputs and labels differ in length");
    }
    for (int y : labels_) {
        if (y < 0 || static_cast<std::size_t>(y) >= spec_.classes) {
            throw InvalidArgument("label out of range for model");
        }
    }
}

Batch LearnerObjective::batch(std::span<const std::size_t> indices) const {
    Batch b;
    b.inputs.reserve(indices.size());
    b.labels.reserve(indices.size());
    for (auto i : indices) {
        b.inputs.push_back(&inputs_.at(i));
        b.labels.push_back(labels_[i]);
    }
    return b;
}

Batch LearnerObjective::full_batch() const { return make_batch(inputs_, labels_); }

double LearnerObjective::evaluate_batch(std::span<const std::size_t> indices, std::span<const double> w,
                                        std::span<double> grad) const {
    return batch_objective(spec_, *layout_, w, batch(indices), grad);
}

}  // namespace flame::learner
