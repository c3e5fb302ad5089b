#pragma once

#include <span>
#include <vector>

namespace flame {

// Deterministic differentiable objective over a flat parameter vector.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::size_t dimension() const = 0;
    // Returns f(w); writes the gradient into `grad` unless it is empty.
    virtual double evaluate(std::span<const double> w, std::span<double> grad) const = 0;
};

// Finite-sum objective held by one access point: f_n(w) = mean_i loss_i(w).
// Mini-batch gradients are evaluated over a set of example indices, reduced
// in the order the indices are given.
class LocalObjective {
public:
    virtual ~LocalObjective() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::size_t example_count() const = 0;
    virtual double evaluate_batch(std::span<const std::size_t> batch, std::span<const double> w,
                                  std::span<double> grad) const = 0;
};

// Full-dataset view of a LocalObjective.
class FullBatchObjective final : public Objective {
public:
    explicit FullBatchObjective(const LocalObjective& local);
    std::size_t dimension() const override { return local_.dimension(); }
    double evaluate(std::span<const double> w, std::span<double> grad) const override;

private:
    const LocalObjective& local_;
    std::vector<std::size_t> all_;
};

// f(w) = (1/N) sum_n f_n(w) with full-dataset local objectives.
class GlobalObjective final : public Objective {
public:
    explicit GlobalObjective(std::vector<const LocalObjective*> locals);
    std::size_t dimension() const override;
    double evaluate(std::span<const double> w, std::span<double> grad) const override;

private:
    std::vector<const LocalObjective*> locals_;
};

}  // namespace flame
