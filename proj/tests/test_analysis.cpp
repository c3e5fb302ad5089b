#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flame/analysis.hpp"
#include "flame/error.hpp"
#include "flame/random.hpp"
#include "oracles.hpp"

using namespace flame;
using namespace flame::analysis;

namespace {

GradVector random_grad(const std::shared_ptr<const ParamLayout>& layout, Rng& rng, double scale) {
    GradVector g(layout);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * rng.normal();
    return g;
}

BoundConstants constants(double eta, std::size_t J, double mu, std::size_t M, double L, double s2, double z2,
                         std::size_t N) {
    BoundConstants c;
    c.eta = eta;
    c.local_steps = J;
    c.mu = mu;
    c.modalities = M;
    c.L = L;
    c.sigma2 = s2;
    c.zeta2 = z2;
    c.aps = N;
    return c;
}

federation::TrainingConfig quad_cfg(std::size_t J, std::size_t B, double eta, std::size_t T) {
    federation::TrainingConfig cfg;
    cfg.local_steps = J;
    cfg.batch_size = B;
    cfg.eta = eta;
    cfg.rounds = T;
    return cfg;
}

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

TEST(Lemma1, CorrectedFormIsAnIdentity) {
    Rng rng(1);
    auto layout = flat_layout(12);
    for (int t = 0; t < 1000; ++t) {
        const auto a = random_grad(layout, rng, 1), b = random_grad(layout, rng, 1), c = random_grad(layout, rng, 1);
        const auto r = lemma1_residual(a, b, c);
        EXPECT_LE(r.corrected, 1e-12);
        long double d = 0;
        for (std::size_t i = 0; i < 12; ++i) d += (static_cast<long double>(a[i]) - b[i]) * (a[i] - b[i]);
        EXPECT_NEAR(r.literal, static_cast<double>(std::sqrt(d)), 1e-12);
    }
}

TEST(Lemma1, PrintedFormCollapsesWithoutDrift) {
    Rng rng(2);
    auto layout = flat_layout(6);
    const auto a = random_grad(layout, rng, 1), c = random_grad(layout, rng, 1);
    EXPECT_LE(lemma1_residual(a, a, c).literal, 1e-12);
    const GradVector other(flat_layout(5));
    EXPECT_THROW(lemma1_residual(a, a, other), LayoutMismatch);
}

TEST(Theorem1, WorkedValues) {
    EXPECT_NEAR(theorem1_step_bound(1.0, constants(0.01, 10, 1.0, 1, 10, 0, 0, 4)), 0.9, 1e-15);
    EXPECT_NEAR(theorem1_step_bound(1.0, constants(0.01, 10, 1.0, 1, 10, 1, 1, 4)), 0.925, 1e-15);
    const auto tr = bound_trace(2.0, constants(0.01, 10, 1.0, 1, 10, 0, 0, 4), 3);
    ASSERT_EQ(tr.size(), 4u);
    EXPECT_EQ(tr[0], 2.0);
    EXPECT_NEAR(tr[3], 2.0 * 0.729, 1e-15);
}

TEST(Theorem1, InapplicableContraction) {
    EXPECT_THROW(theorem1_step_bound(1.0, constants(0.1, 10, 1.0, 1, 10, 0, 0, 4)), BoundInapplicable);
    EXPECT_THROW(theorem1_step_bound(1.0, constants(0.2, 10, 1.0, 1, 10, 0, 0, 4)), BoundInapplicable);
    EXPECT_NO_THROW(theorem1_step_bound(1.0, constants(0.2, 10, 1.0, 3, 10, 0, 0, 4)));
    EXPECT_THROW(theorem1_step_bound(1.0, constants(0.01, 10, -1.0, 1, 10, 0, 0, 4)), BoundInapplicable);
    EXPECT_THROW(theorem1_step_bound(1.0, constants(0.01, 10, 1.0, 1, 10, 0, 0, 0)), BoundInapplicable);
}

TEST(Theorem1, ModalityCountOrdering) {
    // Contraction is weaker with more modalities, so M does not always help:
    // with fixed sigma^2 and zeta^2 the M=3 step is smaller exactly when
    // gap < eta L J (sigma^2 + zeta^2) / (2 N mu).
    const auto c1 = constants(0.01, 10, 1.0, 1, 10, 1, 1, 4), c3 = constants(0.01, 10, 1.0, 3, 10, 1, 1, 4);
    const double threshold = 0.01 * 10 * 10 * 2 / (2 * 4 * 1.0);
    EXPECT_LT(theorem1_step_bound(0.5 * threshold, c3), theorem1_step_bound(0.5 * threshold, c1));
    EXPECT_GT(theorem1_step_bound(2.0 * threshold, c3), theorem1_step_bound(2.0 * threshold, c1));
    // Noiseless: M=3 contracts more slowly.
    EXPECT_GT(theorem1_step_bound(1.0, constants(0.01, 10, 1.0, 3, 10, 0, 0, 4)), 0.9);
    // Both terms, with sigma^2, zeta^2 scaled by 1/M and gap0 below the M=3
    // fixed point, give a pointwise smaller trace for M=3.
    const auto s1 = constants(0.04, 5, 1.0, 1, 10, 0.9, 0.6, 4), s3 = constants(0.04, 5, 1.0, 3, 10, 0.3, 0.2, 4);
    const double fixed3 = s3.eta * s3.L * 5 * (s3.sigma2 + s3.zeta2) / (2 * 4 * s3.mu);
    const auto t1 = bound_trace(0.9 * fixed3, s1, 200), t3 = bound_trace(0.9 * fixed3, s3, 200);
    for (std::size_t t = 1; t < t1.size(); ++t) EXPECT_LT(t3[t], t1[t]) << t;
}

TEST(Quadratic, ScalarExample) {
    const auto p = make_quadratic_problem(1, {2.0}, {{2.0}}, {}, {});
    EXPECT_EQ(p.w_star[0], 1.0);
    EXPECT_EQ(p.f_star, -1.0);
    EXPECT_EQ(p.L, 2.0);
    EXPECT_EQ(p.mu, 2.0);
    EXPECT_EQ(p.zeta2, 0.0);
    const std::vector<double> w{3.0};
    EXPECT_EQ(p.gap(w), 4.0);
    EXPECT_EQ(p.global_value(w), 2.0 * 9.0 / 2.0 - 6.0);
}

TEST(Quadratic, RejectsInvalidParts) {
    EXPECT_THROW(make_quadratic_problem(2, {1, 0.5, 0.4, 1}, {{0, 0}}, {}, {}), InvalidArgument);
    EXPECT_THROW(make_quadratic_problem(2, {1, 0, 0, -1}, {{0, 0}}, {}, {}), InvalidArgument);
    EXPECT_THROW(make_quadratic_problem(2, {1, 0, 0, 1}, {{0}}, {}, {}), ShapeMismatch);
    QuadraticOptions o;
    o.mu = 2;
    o.L = 1;
    EXPECT_THROW(make_quadratic_problem(1, o), InvalidArgument);
}

TEST(Quadratic, SpectrumOptimumAndExactConstants) {
    QuadraticOptions o;
    o.dim = 8;
    o.mu = 0.5;
    o.L = 7.0;
    const auto p = make_quadratic_problem(11, o);
    const auto ev = oracle::jacobi_eigenvalues(p.A, p.dim);
    EXPECT_NEAR(ev.front(), 0.5, 1e-10);
    EXPECT_NEAR(ev.back(), 7.0, 1e-10);
    for (double e : ev) {
        EXPECT_GE(e, p.mu - 1e-10);
        EXPECT_LE(e, p.L + 1e-10);
    }
    std::vector<double> g(p.dim);
    p.global_value(p.w_star, g);
    EXPECT_LE(norm(g), 1e-10);
    EXPECT_NEAR(p.zeta2, o.hetero_scale, 1e-12);
    // w0 sits at the requested distance from the optimum.
    double d2 = 0;
    for (std::size_t i = 0; i < p.dim; ++i) d2 += (p.w0[i] - p.w_star[i]) * (p.w0[i] - p.w_star[i]);
    EXPECT_NEAR(std::sqrt(d2), o.init_distance, 1e-12);
    // Gap equals f(w) - f*.
    EXPECT_NEAR(p.gap(p.w0), p.global_value(p.w0) - p.f_star, 1e-12);
    // Determinism.
    const auto q = make_quadratic_problem(11, o);
    EXPECT_EQ(p.A, q.A);
    EXPECT_EQ(p.offsets, q.offsets);
}

TEST(Quadratic, GradientMatchesFiniteDifferences) {
    QuadraticOptions o;
    o.aps = 2;
    o.examples_per_ap = 6;
    const auto p = make_quadratic_problem(5, o);
    const QuadraticLocalObjective local(p, 1);
    const FullBatchObjective full(local);
    const auto coords = iota(p.dim);
    Rng rng(4);
    std::vector<double> w(p.dim);
    for (auto& v : w) v = rng.normal();
    EXPECT_LE(learner::finite_diff_check(full, w, 1e-4, coords).max_rel_error, 1e-9);
}

TEST(Quadratic, SigmaSquaredMatchesExhaustiveEnumeration) {
    QuadraticOptions o;
    o.aps = 2;
    o.examples_per_ap = 5;
    o.noise_scale = 2.0;
    const auto p = make_quadratic_problem(6, o);
    const QuadraticLocalObjective local(p, 0);
    const std::vector<double> w(p.dim, 0.3);
    std::vector<double> full(p.dim), g(p.dim);
    local.evaluate_batch(iota(5), w, full);
    for (std::size_t B = 1; B <= 5; ++B) {
        // Average over every size-B subset.
        long double total = 0;
        std::size_t count = 0;
        for (unsigned mask = 0; mask < 32; ++mask) {
            if (static_cast<std::size_t>(__builtin_popcount(mask)) != B) continue;
            std::vector<std::size_t> batch;
            for (std::size_t i = 0; i < 5; ++i) {
                if (mask & (1u << i)) batch.push_back(i);
            }
            local.evaluate_batch(batch, w, g);
            for (std::size_t k = 0; k < p.dim; ++k) total += (g[k] - full[k]) * (g[k] - full[k]);
            ++count;
        }
        EXPECT_NEAR(p.sigma2(B), static_cast<double>(total / count), 1e-12) << B;
    }
    EXPECT_EQ(p.sigma2(5), 0.0);
}

TEST(Quadratic, ModalityScalingDividesNoiseAndHeterogeneity) {
    QuadraticOptions o;
    const auto p1 = make_quadratic_problem(7, o);
    o.modalities = 3;
    const auto p3 = make_quadratic_problem(7, o);
    EXPECT_NEAR(p3.sigma2(8), p1.sigma2(8) / 3, 1e-12);
    EXPECT_NEAR(p3.zeta2, p1.zeta2 / 3, 1e-12);
    EXPECT_EQ(p3.modalities, 3u);
}

TEST(Sigma2, FullBatchIsZeroAndTwoExampleEnumeration) {
    QuadraticOptions o;
    o.aps = 1;
    o.examples_per_ap = 8;
    const auto p = make_quadratic_problem(2, o);
    const QuadraticLocalObjective local(p, 0);
    EXPECT_EQ(estimate_sigma2(local, p.w0, 8, 4, 1), 0.0);
    EXPECT_THROW(estimate_sigma2(local, p.w0, 9, 4, 1), InvalidArgument);
    EXPECT_THROW(estimate_sigma2(local, p.w0, 2, 1, 1), InvalidArgument);

    // Two-example linear classifier: either size-1 batch deviates from the
    // mean by half the gradient difference.
    learner::ModelSpec spec;
    spec.input = {2, 2, 1};
    spec.classes = 3;
    modality::ModalInput a, b;
    for (auto* x : {&a, &b}) {
        x->shape = spec.input;
        x->selection = {modality::Modality::IQ};
        x->stats = std::make_shared<modality::NormalizationStats>();
    }
    a.values = {1, -2, 0.5, 3};
    b.values = {-1, 0.25, 2, -0.5};
    const learner::LearnerObjective obj(spec, {a, b}, {0, 2});
    const auto w = learner::init_params(spec, 3);
    std::vector<double> g0(obj.dimension()), g1(obj.dimension());
    const std::vector<std::size_t> i0{0}, i1{1};
    obj.evaluate_batch(i0, w.values(), g0);
    obj.evaluate_batch(i1, w.values(), g1);
    long double expected = 0;
    for (std::size_t k = 0; k < g0.size(); ++k) expected += (g0[k] - g1[k]) * (g0[k] - g1[k]) / 4.0L;
    EXPECT_NEAR(estimate_sigma2(obj, w.values(), 1, 7, 5), static_cast<double>(expected), 1e-12);
}

namespace {

// f(w) = 1/2 w^T diag(a) w - b^T w with a single example.
class DiagQuadratic final : public LocalObjective {
public:
    DiagQuadratic(std::vector<double> a, std::vector<double> b) : a_(std::move(a)), b_(std::move(b)) {}
    std::size_t dimension() const override { return a_.size(); }
    std::size_t example_count() const override { return 1; }
    double evaluate_batch(std::span<const std::size_t>, std::span<const double> w,
                          std::span<double> grad) const override {
        double f = 0;
        for (std::size_t i = 0; i < a_.size(); ++i) {
            f += 0.5 * a_[i] * w[i] * w[i] - b_[i] * w[i];
            if (!grad.empty()) grad[i] = a_[i] * w[i] - b_[i];
        }
        return f;
    }

private:
    std::vector<double> a_, b_;
};

}  // namespace

TEST(Zeta2, ClosedFormForTwoQuadratics) {
    const DiagQuadratic f1({1, 2}, {1, 0}), f2({3, 2}, {0, 4});
    const std::vector<const LocalObjective*> locals{&f1, &f2};
    const std::vector<double> w{0.5, -1};
    // Gradients (a_n w - b_n): (-0.5, -2) and (1.5, -6); each deviates from
    // the mean by (+-1, +-2), so zeta^2 = 5.
    EXPECT_NEAR(estimate_zeta2(locals, w), 5.0, 1e-12);
    const std::vector<const LocalObjective*> same{&f1, &f1, &f1};
    EXPECT_EQ(estimate_zeta2(same, w), 0.0);
}

TEST(Zeta2, QuadraticHarnessValueIsExactEverywhere) {
    QuadraticOptions o;
    o.hetero_scale = 2.5;
    const auto p = make_quadratic_problem(8, o);
    std::vector<QuadraticLocalObjective> objs;
    for (std::size_t n = 0; n < p.aps(); ++n) objs.emplace_back(p, n);
    std::vector<const LocalObjective*> locals;
    for (auto& x : objs) locals.push_back(&x);
    Rng rng(3);
    for (int t = 0; t < 5; ++t) {
        std::vector<double> w(p.dim);
        for (auto& v : w) v = 4 * rng.normal();
        EXPECT_NEAR(estimate_zeta2(locals, w), 2.5, 1e-9);
    }
}

TEST(Smoothness, LowerBoundConvergingToLargestEigenvalue) {
    QuadraticOptions o;
    o.aps = 1;
    o.mu = 1;
    o.L = 6;
    const auto p = make_quadratic_problem(9, o);
    const QuadraticLocalObjective local(p, 0);
    const FullBatchObjective f(local);
    SmoothnessOptions opt;
    opt.refinements = 0;
    opt.pair_trials = 3;
    const double rough = estimate_smoothness(f, p.w_star, opt, 1);
    opt.refinements = 200;
    const double sharp = estimate_smoothness(f, p.w_star, opt, 1);
    EXPECT_LE(rough, 6.0 * (1 + 1e-9));
    EXPECT_LE(sharp, 6.0 * (1 + 1e-9));
    EXPECT_GE(sharp, rough);
    EXPECT_NEAR(sharp, 6.0, 1e-3);
}

namespace {

class Scaled final : public Objective {
public:
    Scaled(const Objective& f, double c) : f_(f), c_(c) {}
    std::size_t dimension() const override { return f_.dimension(); }
    double evaluate(std::span<const double> w, std::span<double> grad) const override {
        const double v = f_.evaluate(w, grad);
        for (auto& g : grad) g *= c_;
        return c_ * v;
    }

private:
    const Objective& f_;
    double c_;
};

}  // namespace

TEST(Smoothness, ScalesLinearly) {
    const auto p = make_quadratic_problem(10, QuadraticOptions{});
    const QuadraticLocalObjective local(p, 0);
    const FullBatchObjective f(local);
    const Scaled g(f, 4.0);
    const SmoothnessOptions opt;
    const double a = estimate_smoothness(f, p.w0, opt, 2), b = estimate_smoothness(g, p.w0, opt, 2);
    EXPECT_NEAR(b, 4.0 * a, 1e-9 * b);
}

TEST(VerifyBound, NoiselessSingleApMatchesExactGradientDescent) {
    QuadraticOptions o;
    o.aps = 1;
    o.noise_scale = 0;
    o.hetero_scale = 0;
    o.examples_per_ap = 4;
    o.init_distance = 3;
    const auto p = make_quadratic_problem(12, o);
    const auto v = verify_bound(p, quad_cfg(1, 4, 0.05, 80), 3);
    std::vector<double> e0(p.dim);
    for (std::size_t i = 0; i < p.dim; ++i) e0[i] = p.w0[i] - p.w_star[i];
    const auto ref = oracle::gd_gaps(p.A, e0, 0.05, 80);
    const auto gd = gradient_descent_gaps(p, 0.05, 80);
    ASSERT_EQ(v.rows.size(), 81u);
    for (std::size_t t = 0; t <= 80; ++t) {
        EXPECT_NEAR(v.rows[t].mean_gap, ref[t], 1e-9) << t;
        EXPECT_NEAR(gd[t], ref[t], 1e-9) << t;
        // Replicas are identical; only the rounding of the mean remains.
        EXPECT_LE(v.rows[t].std_error, 1e-14 * (1 + ref[t]));
        EXPECT_LE(v.rows[t].mean_gap, v.rows[t].bound * (1 + 1e-12) + 1e-15);
    }
    EXPECT_EQ(v.violations, 0u);
}

TEST(VerifyBound, StochasticHarnessHasNoViolations) {
    QuadraticOptions o;
    o.init_distance = 2;
    const auto p = make_quadratic_problem(13, o);
    const auto v = verify_bound(p, quad_cfg(5, 8, 0.04, 30), 60);
    EXPECT_EQ(v.violations, 0u);
    EXPECT_NEAR(v.constants.sigma2, o.noise_scale * 56.0 / (8.0 * 63.0), 1e-12);
    EXPECT_GT(v.rows.back().std_error, 0.0);
    EXPECT_LT(v.rows.back().mean_gap, v.rows.front().mean_gap);
    // Identical configuration reproduces bit-identical rows, threads included.
    auto cfg = quad_cfg(5, 8, 0.04, 30);
    cfg.threads = 3;
    const auto w = verify_bound(p, cfg, 60);
    for (std::size_t t = 0; t < v.rows.size(); ++t) EXPECT_EQ(v.rows[t].mean_gap, w.rows[t].mean_gap);
}

TEST(VerifyBound, RejectsInapplicableConstants) {
    const auto p = make_quadratic_problem(14, QuadraticOptions{});
    EXPECT_THROW(verify_bound(p, quad_cfg(5, 8, 0.3, 3), 2), BoundInapplicable);
}

TEST(Estimates, Validation) {
    AssumptionEstimates e{1.0, 2.0, 0.1, 0.1, 1};
    EXPECT_THROW(e.validate(), InvalidArgument);
    e.L_hat = 3.0;
    EXPECT_NO_THROW(e.validate());
    e.sigma2_hat = -1;
    EXPECT_THROW(e.validate(), InvalidArgument);
}
