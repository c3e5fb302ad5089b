#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "flame/federation.hpp"
#include "flame/objective.hpp"
#include "flame/params.hpp"

namespace flame::analysis {

struct AssumptionEstimates {
    double L_hat = 0.0;  // lower bound on the smoothness constant
    double mu = 0.0;
    double sigma2_hat = 0.0;
    double zeta2_hat = 0.0;
    std::size_t modalities = 1;

    void validate() const;
};

struct Lemma1Residuals {
    double corrected = 0.0;
    double literal = 0.0;
};

// Residual of the local-gradient decomposition around the round start w^t.
// `corrected` uses the heterogeneity term grad_f_n(w^t) - grad_f(w^t);
// `literal` uses grad_f_n(w^{t,j}) - grad_f(w^t) as the third term instead.
Lemma1Residuals lemma1_residual(const GradVector& local_at_wtj, const GradVector& local_at_wt,
                                const GradVector& global_at_wt);

// Mean over trials of ||batch gradient - full gradient||^2 with batches of
// size B drawn without replacement.
double estimate_sigma2(const LocalObjective& local, std::span<const double> w, std::size_t batch_size,
                       std::size_t trials, std::uint64_t seed);

// (1/N) sum_n ||grad f_n(w) - grad f(w)||^2 with full-dataset gradients.
double estimate_zeta2(std::span<const LocalObjective* const> locals, std::span<const double> w);

struct SmoothnessOptions {
    std::size_t pair_trials = 8;
    // Secant refinements per pair: the displacement is replaced by the
    // gradient difference it produced (a power step on the Hessian).
    std::size_t refinements = 20;
    double radius = 1.0;
    double step = 1e-3;
};

// Largest observed ||grad f(w) - grad f(w')|| / ||w - w'|| over pairs that
// start at center + radius * u. Every ratio is a secant slope, so the result
// never exceeds the true L.
double estimate_smoothness(const Objective& objective, std::span<const double> center,
                           const SmoothnessOptions& options, std::uint64_t seed);

struct BoundConstants {
    double eta = 0.0;
    std::size_t local_steps = 1;  // J
    double mu = 0.0;
    std::size_t modalities = 1;  // M
    double L = 0.0;
    double sigma2 = 0.0;
    double zeta2 = 0.0;
    std::size_t aps = 1;  // N

    double contraction() const;  // eta J mu / M
    // Throws BoundInapplicable unless contraction() < 1 and constants are valid.
    void validate() const;
};

// gap (1 - eta J mu / M) + eta^2 L J^2 (sigma^2 + zeta^2) / (2 N M).
double theorem1_step_bound(double gap, const BoundConstants& c);

// Iterates theorem1_step_bound from gap0; element t is the bound after t rounds.
std::vector<double> bound_trace(double gap0, const BoundConstants& c, std::size_t rounds);

struct QuadraticOptions {
    std::size_t dim = 8;
    std::size_t aps = 4;
    std::size_t examples_per_ap = 64;
    // Mean squared norm of the per-example gradient offsets.
    double noise_scale = 1.0;
    // Mean squared norm of the per-AP linear-term offsets (exact zeta^2).
    double hetero_scale = 1.0;
    double mu = 1.0;
    double L = 10.0;
    // Offsets are divided by sqrt(M), so sigma^2 and zeta^2 scale as 1/M.
    std::size_t modalities = 1;
    // ||w0 - w*||.
    double init_distance = 1.0;
};

// f_n(w) = (1/m) sum_i [ 1/2 w^T A w - (b_n + xi_{n,i})^T w ] with a shared SPD
// matrix A whose spectrum spans [mu, L] and centered offsets xi_{n,i}.
struct QuadraticProblem {
    std::size_t dim = 0;
    std::vector<double> A;  // row-major dim x dim
    std::vector<std::vector<double>> b;        // per AP
    std::vector<std::vector<std::vector<double>>> offsets;  // per AP, per example
    std::vector<double> b_mean;
    std::vector<double> w_star;
    double f_star = 0.0;
    double L = 0.0;
    double mu = 0.0;
    double zeta2 = 0.0;
    std::vector<double> w0;
    std::size_t modalities = 1;

    std::size_t aps() const noexcept { return b.size(); }
    std::size_t examples_per_ap() const noexcept { return offsets.empty() ? 0 : offsets.front().size(); }
    std::shared_ptr<const ParamLayout> layout() const { return flat_layout(dim); }
    // Exact mini-batch gradient variance at batch size B (sampling without replacement).
    double sigma2(std::size_t batch_size) const;
    // f(w) = (1/N) sum_n f_n(w) and its gradient.
    double global_value(std::span<const double> w, std::span<double> grad = {}) const;
    // f(w) - f*, computed as 1/2 (w - w*)^T A (w - w*).
    double gap(std::span<const double> w) const;
};

QuadraticProblem make_quadratic_problem(std::uint64_t seed, const QuadraticOptions& options);

// Builds a problem from explicit parts and fills w*, f*, L, mu and zeta^2.
// `offsets` may be empty, which gives every AP one noiseless example.
QuadraticProblem make_quadratic_problem(std::size_t dim, std::vector<double> A, std::vector<std::vector<double>> b,
                                        std::vector<std::vector<std::vector<double>>> offsets,
                                        std::vector<double> w0, std::size_t modalities = 1);

class QuadraticLocalObjective final : public LocalObjective {
public:
    QuadraticLocalObjective(const QuadraticProblem& problem, std::size_t ap);
    std::size_t dimension() const override { return problem_.dim; }
    std::size_t example_count() const override { return problem_.offsets[ap_].size(); }
    double evaluate_batch(std::span<const std::size_t> batch, std::span<const double> w,
                          std::span<double> grad) const override;

private:
    const QuadraticProblem& problem_;
    std::size_t ap_;
};

struct BoundTraceRow {
    std::size_t round = 0;
    double mean_gap = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    bool violation = false;
};

struct BoundVerification {
    std::vector<BoundTraceRow> rows;  // rounds 0..T
    BoundConstants constants;
    std::size_t violations = 0;
    double violation_fraction = 0.0;
};

// Runs the federated loop on the problem for `seeds` independent replicas and
// compares the seed-mean gap with the bound trace started from the measured
// initial gap. A round is a violation when mean > bound + 3 SE.
BoundVerification verify_bound(const QuadraticProblem& problem, const federation::TrainingConfig& cfg,
                               std::size_t seeds);

// Gap after t exact gradient steps w <- w - eta (A w - b_mean), t = 0..steps.
std::vector<double> gradient_descent_gaps(const QuadraticProblem& problem, double eta, std::size_t steps);

}  // namespace flame::analysis
