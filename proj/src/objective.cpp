#include "flame/objective.hpp"

#include <numeric>

#include "flame/error.hpp"

namespace flame {

FullBatchObjective::FullBatchObjective(const LocalObjective& local) : local_(local), all_(local.example_count()) {
    std::iota(all_.begin(), all_.end(), std::size_t{0});
}

double FullBatchObjective::evaluate(std::span<const double> w, std::span<double> grad) const {
    return local_.evaluate_batch(all_, w, grad);
}

GlobalObjective::GlobalObjective(std::vector<const LocalObjective*> locals) : locals_(std::move(locals)) {
    if (locals_.empty()) {
        throw InvalidArgument("global objective needs at least one local objective");
    }
}

std::size_t GlobalObjective::dimension() const { return locals_.front()->dimension(); }

double GlobalObjective::evaluate(std::span<const double> w, std::span<double> grad) const {
    const double inv_n = 1.0 / static_cast<double>(locals_.size());
    std::vector<double> local_grad(grad.empty() ? 0 : grad.size());
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    double total = 0.0;
    for (const auto* local : locals_) {
        const FullBatchObjective full(*local);
        total += full.evaluate(w, local_grad);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            grad[i] += local_grad[i];
        }
    }
    for (auto& g : grad) g *= inv_n;
    return total * inv_n;
}

}  // namespace flame
