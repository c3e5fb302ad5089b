#include "models.hpp"

namespace flame::learner::detail {

void softmax_linear_layout(const ModelSpec& spec, ParamLayout& layout) {
    layout.add("linear.w", spec.classes * spec.input.size());
    layout.add("linear.b", spec.classes, true);
}

void softmax_linear_logits(const ModelSpec& spec, std::span<const double> w, const modality::ModalInput& x,
                           std::span<double> z) {
    const std::size_t d = spec.input.size();
    const double* bias = w.data() + spec.classes * d;
    for (std::size_t k = 0; k < spec.classes; ++k) {
        const double* row = w.data() + k * d;
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            acc += row[i] * x.values[i];
        }
        z[k] = acc + bias[k];
    }
}

void softmax_linear_backward(const ModelSpec& spec, const modality::ModalInput& x, std::span<const double> dz,
                             std::span<double> grad) {
    const std::size_t d = spec.input.size();
    double* bias = grad.data() + spec.classes * d;
    for (std::size_t k = 0; k < spec.classes; ++k) {
        double* row = grad.data() + k * d;
        const double g = dz[k];
        for (std::size_t i = 0; i < d; ++i) {
            row[i] += g * x.values[i];
        }
        bias[k] += g;
    }
}

}  // namespace flame::learner::detail
