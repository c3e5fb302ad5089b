#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "flame/error.hpp"
#include "flame/learner.hpp"
#include "flame/random.hpp"
#include "oracles.hpp"

using namespace flame;
using namespace flame::learner;
using modality::InputShape;
using modality::ModalInput;
using modality::Modality;

namespace {

ModelSpec softmax_spec(std::size_t len, std::size_t channels, std::size_t classes, double l2 = 0.0) {
    ModelSpec s;
    s.kind = ModelKind::SoftmaxLinear;
    s.input = {len, 2, channels};
    s.classes = classes;
    s.l2_coeff = l2;
    return s;
}

ModelSpec resnet_spec(std::size_t len, std::size_t channels, std::size_t classes) {
    ModelSpec s;
    s.kind = ModelKind::MiniResnet;
    s.input = {len, 2, channels};
    s.classes = classes;
    s.resnet = {3, 4, 2, 5, 3};
    s.l2_coeff = 1e-3;
    return s;
}

ModalInput random_input(const InputShape& shape, Rng& rng) {
    ModalInput x;
    x.shape = shape;
    const std::vector<Modality> order{Modality::IQ, Modality::DFT, Modality::AmpPhase};
    x.selection.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(shape.channels));
    x.stats = std::make_shared<modality::NormalizationStats>();
    x.values.resize(shape.size());
    for (auto& v : x.values) v = rng.normal();
    return x;
}

struct Data {
    std::vector<ModalInput> inputs;
    std::vector<int> labels;
    Batch batch() const { return make_batch(inputs, labels); }
};

Data make_data(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Data d;
    for (std::size_t i = 0; i < n; ++i) {
        d.inputs.push_back(random_input(spec.input, rng));
        d.labels.push_back(static_cast<int>(i % spec.classes));
    }
    return d;
}

ParamVector random_params(const ModelSpec& spec, std::uint64_t seed, double scale) {
    ParamVector p(make_layout(spec));
    Rng rng(seed);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = scale * rng.normal();
    return p;
}

oracle::ResnetDims dims(const ModelSpec& s) {
    return {s.input.length, s.input.channels, s.resnet.block1, s.resnet.block2, s.resnet.trunk,
            s.resnet.hidden, s.classes,       s.resnet.kernel};
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Model, SoftmaxParameterCount) {
    EXPECT_EQ(param_count(softmax_spec(4, 1, 3)), 4u * 2u * 1u * 3u + 3u);
}

TEST(Model, ResnetParameterCount) {
    const auto s = resnet_spec(16, 2, 4);
    // 3 + 3 convs of kernel 3, trunk conv, fc1 over trunk * 4 * 2, fc2.
    const std::size_t expected = (3 * 2 * 3 + 3) + 2 * (3 * 3 * 3 + 3) + (4 * 3 * 3 + 4) + 2 * (4 * 4 * 3 + 4) +
                                 (2 * 4 * 3 + 2) + (5 * (2 * 4 * 2) + 5) + (4 * 5 + 4);
    EXPECT_EQ(param_count(s), expected);
}

TEST(Model, SpecValidation) {
    auto s = softmax_spec(4, 1, 1);
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = resnet_spec(10, 1, 3);
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = resnet_spec(16, 1, 3);
    s.resnet.kernel = 2;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = softmax_spec(4, 4, 3);
    EXPECT_THROW(s.validate(), InvalidArgument);
    EXPECT_EQ(parse_kind("mini_resnet"), ModelKind::MiniResnet);
    EXPECT_EQ(kind_name(ModelKind::SoftmaxLinear), "softmax_linear");
    EXPECT_THROW(parse_kind("mlp"), Error);
}

TEST(Model, InitIsDeterministicWithZeroBiasesAndFanInBounds) {
    for (const auto& spec : {softmax_spec(8, 3, 5), resnet_spec(16, 3, 5)}) {
        const auto a = init_params(spec, 9), b = init_params(spec, 9), c = init_params(spec, 10);
        EXPECT_EQ(a, b);
        EXPECT_NE(a, c);
        for (const auto& seg : a.layout()->segments()) {
            const auto v = a.segment(seg.name);
            if (seg.is_bias) {
                for (double x : v) EXPECT_EQ(x, 0.0);
            } else {
                double mx = 0;
                for (double x : v) mx = std::max(mx, std::abs(x));
                EXPECT_GT(mx, 0.0) << seg.name;
                EXPECT_LE(mx, std::sqrt(6.0)) << seg.name;
            }
        }
    }
}

TEST(Forward, ZeroParamsGiveUniformOutputAndLn4Loss) {
    for (const auto& spec : {softmax_spec(8, 2, 4), resnet_spec(16, 2, 4)}) {
        const ParamVector zero(make_layout(spec));
        const auto d = make_data(spec, 6, 3);
        const auto p = forward(spec, zero, d.inputs[0]);
        ASSERT_EQ(p.size(), 4u);
        for (double x : p) EXPECT_DOUBLE_EQ(x, 0.25);
        EXPECT_DOUBLE_EQ(loss(spec, zero, d.batch()), std::log(4.0));
    }
}

TEST(Forward, ProbabilitiesArePositiveAndSumToOne) {
    const auto spec = resnet_spec(16, 3, 5);
    const auto d = make_data(spec, 5, 4);
    const auto w = random_params(spec, 5, 0.5);
    for (const auto& x : d.inputs) {
        const auto p = forward(spec, w, x);
        double s = 0;
        for (double v : p) {
            EXPECT_GT(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Forward, ShapeMismatchThrows) {
    const auto spec = softmax_spec(8, 2, 3);
    Rng rng(1);
    const auto x = random_input({8, 2, 1}, rng);
    EXPECT_THROW(forward(spec, init_params(spec, 1), x), Error);
    const auto other = init_params(softmax_spec(8, 1, 3), 1);
    const auto ok = random_input({8, 2, 2}, rng);
    EXPECT_THROW(forward(spec, other, ok), Error);
}

TEST(Forward, ResnetMatchesNaiveTranscription) {
    const auto spec = resnet_spec(16, 3, 4);
    const auto d = make_data(spec, 4, 8);
    const auto w = random_params(spec, 12, 0.5);
    for (const auto& x : d.inputs) {
        const auto got = logits(spec, w, x);
        const auto ref = oracle::resnet_logits(dims(spec), to_vec(w.values()), x.values);
        ASSERT_EQ(got.size(), ref.size());
        for (std::size_t k = 0; k < got.size(); ++k) {
            EXPECT_NEAR(got[k], static_cast<double>(ref[k]), 1e-10 * (1 + std::abs(static_cast<double>(ref[k]))));
        }
    }
}

TEST(Forward, SoftmaxLinearMatchesDotProducts) {
    const auto spec = softmax_spec(4, 2, 3);
    const auto d = make_data(spec, 1, 2);
    const auto w = random_params(spec, 3, 1.0);
    const auto z = logits(spec, w, d.inputs[0]);
    const std::size_t dim = spec.input.size();
    for (std::size_t k = 0; k < 3; ++k) {
        long double acc = w[3 * dim + k];
        for (std::size_t i = 0; i < dim; ++i) acc += static_cast<long double>(w[k * dim + i]) * d.inputs[0].values[i];
        EXPECT_NEAR(z[k], static_cast<double>(acc), 1e-13);
    }
}

TEST(Forward, ZeroedSkipResidualIgnoresMiddleConvolution) {
    // With conv3 of both blocks zeroed each block reduces to relu(conv1(x)),
    // so the middle convolution cannot influence the prediction.
    const auto spec = resnet_spec(16, 2, 3);
    const auto d = make_data(spec, 3, 21);
    auto w = random_params(spec, 22, 0.7);
    for (const char* name : {"b1.conv3.w", "b1.conv3.b", "b2.conv3.w", "b2.conv3.b"}) {
        for (auto& v : w.segment(name)) v = 0;
    }
    auto w2 = w;
    Rng rng(23);
    for (const char* name : {"b1.conv2.w", "b1.conv2.b", "b2.conv2.w", "b2.conv2.b"}) {
        for (auto& v : w2.segment(name)) v = rng.normal();
    }
    for (const auto& x : d.inputs) {
        EXPECT_EQ(logits(spec, w, x), logits(spec, w2, x));
        // The oracle with the skip path as the only route agrees.
        const auto ref = oracle::resnet_logits(dims(spec), to_vec(w2.values()), x.values);
        const auto got = logits(spec, w2, x);
        for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], static_cast<double>(ref[k]), 1e-10);
    }
}

TEST(Predict, ArgmaxAndTieBreak) {
    const std::vector<double> a{0.1, 0.7, 0.2}, tie{0.5, 0.5}, tri{0.3, 0.3, 0.3};
    EXPECT_EQ(argmax(a), 1);
    EXPECT_EQ(argmax(tie), 0);
    EXPECT_EQ(argmax(tri), 0);
}

TEST(Predict, SoftmaxIsShiftInvariantAndStable) {
    const std::vector<double> z{1.0, 2.0, 3.0}, zs{1001.0, 1002.0, 1003.0};
    const auto p = softmax(z), q = softmax(zs);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], q[k], 1e-15);
    const std::vector<double> big{1e308, -1e308};
    const auto r = softmax(big);
    EXPECT_EQ(r[0], 1.0);
    EXPECT_EQ(r[1], 0.0);
}

TEST(Loss, SaturatedCorrectPredictionApproachesZero) {
    const auto spec = softmax_spec(1, 1, 2);
    ModalInput x;
    x.shape = spec.input;
    x.selection = {Modality::IQ};
    x.stats = std::make_shared<modality::NormalizationStats>();
    x.values = {1.0, 0.0};
    std::vector<ModalInput> xs{x};
    std::vector<int> ys{0};
    const auto b = make_batch(xs, ys);
    double prev = 1.0;
    for (double s : {5.0, 20.0, 40.0}) {
        ParamVector w(make_layout(spec));
        w[0] = s;  // class 0 weight on the first input value
        const double l = loss(spec, w, b);
        // At s = 40 the softplus tail is below one ulp of the logit, so 0 is exact.
        EXPECT_GE(l, 0.0);
        EXPECT_LT(l, prev);
        if (s < 30) EXPECT_GT(l, 0.0);
        prev = l;
    }
    EXPECT_LT(prev, 1e-16);
}

TEST(Loss, RegularizerAddsHalfL2Norm) {
    const auto s0 = softmax_spec(4, 1, 3, 0.0), s1 = softmax_spec(4, 1, 3, 0.3);
    const auto d = make_data(s0, 6, 1);
    const auto w = random_params(s0, 2, 1.0);
    EXPECT_NEAR(loss(s1, w, d.batch()) - loss(s0, w, d.batch()), 0.15 * squared_norm(w.values()), 1e-12);
    EXPECT_NEAR(evaluate(s1, w, d.batch()).loss, loss(s0, w, d.batch()), 1e-12);
}

TEST(Loss, EmptyBatchThrows) {
    Batch b;
    EXPECT_THROW(b.validate(), InvalidArgument);
}

namespace {

// Central differences computed here, independent of finite_diff_check.
double max_fd_error(const ModelSpec& spec, const ParamVector& w, const Batch& b, double step,
                    const std::vector<std::size_t>& coords) {
    const auto g = loss_and_grad(spec, w, b).grad;
    double worst = 0;
    for (auto i : coords) {
        auto wp = w, wm = w;
        wp[i] += step;
        wm[i] -= step;
        const double fd = (loss(spec, wp, b) - loss(spec, wm, b)) / (2 * step);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), kGradCheckFloor}));
    }
    return worst;
}

}  // namespace

TEST(Gradient, SoftmaxMatchesFiniteDifferences) {
    const auto spec = softmax_spec(8, 3, 4, 1e-2);
    const auto d = make_data(spec, 10, 31);
    const auto w = random_params(spec, 32, 0.3);
    std::vector<std::size_t> all(w.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    EXPECT_LE(max_fd_error(spec, w, d.batch(), 1e-5, all), 1e-6);
    const auto r = finite_diff_check(spec, w, d.batch(), {});
    EXPECT_EQ(r.checked, w.size());
    EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(Gradient, ResnetMatchesFiniteDifferencesOnSmoothPieces) {
    const auto spec = resnet_spec(16, 3, 4);
    const auto d = make_data(spec, 4, 41);
    const auto w = init_params(spec, 42);
    GradCheckOptions opt;
    opt.sample_coords = 250;
    const auto r = finite_diff_check(spec, w, d.batch(), opt);
    EXPECT_GE(r.checked, 200u);
    EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST(Gradient, SignatureIsEmptyForLinearModel) {
    const auto spec = softmax_spec(4, 1, 3);
    const auto d = make_data(spec, 3, 1);
    EXPECT_TRUE(activation_signature(spec, init_params(spec, 1), d.batch()).empty());
    const auto rs = resnet_spec(16, 1, 3);
    const auto rd = make_data(rs, 3, 1);
    EXPECT_FALSE(activation_signature(rs, init_params(rs, 1), rd.batch()).empty());
}

TEST(Sgd, StepArithmetic) {
    auto layout = flat_layout(1);
    const ParamVector w(layout, {1.0});
    const GradVector g(layout, {2.0}), zero(layout, {0.0});
    EXPECT_EQ(sgd_step(w, g, 0.5)[0], 0.0);
    EXPECT_EQ(sgd_step(w, zero, 0.5), w);
    ParamVector v = w;
    for (int i = 0; i < 3; ++i) v = sgd_step(v, GradVector(layout, {v[0]}), 0.1);
    EXPECT_NEAR(v[0], 0.729, 1e-15);
    const GradVector wrong(flat_layout(2), {1.0, 1.0});
    EXPECT_THROW(sgd_step(w, wrong, 0.1), LayoutMismatch);
}

TEST(Convexity, SoftmaxLossIsConvexAndRegularizedGradientStronglyMonotone) {
    const double l2 = 0.05;
    const auto spec = softmax_spec(4, 2, 3, l2);
    const auto d = make_data(spec, 12, 51);
    const auto b = d.batch();
    for (std::uint64_t t = 0; t < 20; ++t) {
        const auto u = random_params(spec, 100 + t, 1.0), v = random_params(spec, 200 + t, 1.0);
        ParamVector mid(u.layout());
        for (std::size_t i = 0; i < u.size(); ++i) mid[i] = 0.5 * (u[i] + v[i]);
        EXPECT_LE(loss(spec, mid, b), 0.5 * (loss(spec, u, b) + loss(spec, v, b)) + 1e-12);
        const auto gu = loss_and_grad(spec, u, b).grad, gv = loss_and_grad(spec, v, b).grad;
        double inner = 0, dist = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            inner += (gu[i] - gv[i]) * (u[i] - v[i]);
            dist += (u[i] - v[i]) * (u[i] - v[i]);
        }
        EXPECT_GE(inner, l2 * dist * (1 - 1e-9));
    }
}

TEST(Evaluate, UniformPredictorAndPerfectClassifier) {
    const auto spec = softmax_spec(2, 1, 4);
    const auto d = make_data(spec, 16, 61);  // labels 0..3 balanced
    const ParamVector zero(make_layout(spec));
    EXPECT_EQ(evaluate(spec, zero, d.batch()).accuracy, 0.25);
    EXPECT_NEAR(evaluate(spec, zero, d.batch()).loss, std::log(4.0), 1e-15);

    // Bias-only classifier that always predicts label 2, on an all-2 set.
    std::vector<int> twos(d.labels.size(), 2);
    ParamVector w(make_layout(spec));
    w.segment("linear.b")[2] = 10.0;
    EXPECT_EQ(evaluate(spec, w, make_batch(d.inputs, twos)).accuracy, 1.0);
}

TEST(LearnerObjective, BatchEvaluationMatchesLoss) {
    const auto spec = softmax_spec(4, 1, 3, 0.01);
    auto d = make_data(spec, 9, 71);
    const LearnerObjective obj(spec, d.inputs, d.labels);
    const auto w = random_params(spec, 72, 0.5);
    std::vector<std::size_t> idx{4, 1, 7};
    std::vector<double> grad(obj.dimension());
    const double f = obj.evaluate_batch(idx, w.values(), grad);
    const auto ref = loss_and_grad(spec, w, obj.batch(idx));
    EXPECT_EQ(f, ref.loss);
    EXPECT_EQ(grad, to_vec(ref.grad.values()));
    EXPECT_EQ(obj.full_batch().size(), 9u);
}
