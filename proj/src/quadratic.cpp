#include <Eigen/Dense>
#include <cmath>

#include "flame/analysis.hpp"
#include "flame/error.hpp"
#include "flame/random.hpp"

namespace flame::analysis {

namespace {

constexpr std::uint64_t kQuadraticStream = 0x71756164ULL;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

Matrix as_matrix(std::size_t dim, const std::vector<double>& a) {
    Matrix m(dim, dim);
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < dim; ++c) m(r, c) = a[r * dim + c];
    }
    return m;
}

// Rescales centered rows so their mean squared norm equals `target`.
void center_and_scale(std::vector<std::vector<double>>& rows, double target) {
    if (rows.empty()) return;
    const std::size_t dim = rows.front().size();
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::size_t k = 0; k < dim; ++k) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r[k];
        mean *= inv_n;
        for (auto& r : rows) r[k] -= mean;
    }
    double msq = 0.0;
    for (const auto& r : rows) msq += squared_norm(r);
    msq *= inv_n;
    const double scale = msq > 0.0 ? std::sqrt(target / msq) : 0.0;
    for (auto& r : rows) {
        for (auto& v : r) v *= scale;
    }
}

}  // namespace

QuadraticProblem make_quadratic_problem(std::size_t dim, std::vector<double> A, std::vector<std::vector<double>> b,
                                        std::vector<std::vector<std::vector<double>>> offsets,
                                        std::vector<double> w0, std::size_t modalities) {
    if (dim < 1) throw InvalidArgument("quadratic dimension must be at least 1");
    if (A.size() != dim * dim) throw ShapeMismatch("A must be dim x dim");
    if (b.empty()) throw InvalidArgument("quadratic problem needs at least one AP");
    if (modalities < 1) throw InvalidArgument("modality count must be at least 1");
    for (const auto& bn : b) {
        if (bn.size() != dim) throw ShapeMismatch("b_n has the wrong dimension");
    }
    if (offsets.empty()) offsets.assign(b.size(), {std::vector<double>(dim, 0.0)});
    if (offsets.size() != b.size()) throw ShapeMismatch("offsets must list every AP");
    for (const auto& ap : offsets) {
        if (ap.empty() || ap.size() != offsets.front().size()) {
            throw ShapeMismatch("every AP needs the same non-zero example count");
        }
        for (const auto& xi : ap) {
            if (xi.size() != dim) throw ShapeMismatch("offset has the wrong dimension");
        }
    }
    if (w0.empty()) w0.assign(dim, 0.0);
    if (w0.size() != dim) throw ShapeMismatch("w0 has the wrong dimension");

    const Matrix a = as_matrix(dim, A);
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 0.0) throw InvalidArgument("A must be symmetric");
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    const Vector lambda = eig.eigenvalues();
    if (!(lambda.minCoeff() > 0.0)) throw InvalidArgument("A must be positive definite");

    QuadraticProblem p;
    p.dim = dim;
    p.A = std::move(A);
    p.b = std::move(b);
    p.offsets = std::move(offsets);
    p.w0 = std::move(w0);
    p.modalities = modalities;
    p.mu = lambda.minCoeff();
    p.L = lambda.maxCoeff();

    const double inv_n = 1.0 / static_cast<double>(p.aps());
    p.b_mean.assign(dim, 0.0);
    for (const auto& bn : p.b) {
        for (std::size_t k = 0; k < dim; ++k) p.b_mean[k] += bn[k];
    }
    for (auto& v : p.b_mean) v *= inv_n;
    for (const auto& bn : p.b) {
        for (std::size_t k = 0; k < dim; ++k) p.zeta2 += (bn[k] - p.b_mean[k]) * (bn[k] - p.b_mean[k]);
    }
    p.zeta2 *= inv_n;

    Vector bm(dim);
    for (std::size_t k = 0; k < dim; ++k) bm[k] = p.b_mean[k];
    Vector ws = a.ldlt().solve(bm);
    // One refinement step pulls the residual down to rounding level.
    ws += a.ldlt().solve(bm - a * ws);
    p.w_star.assign(ws.data(), ws.data() + dim);
    p.f_star = -0.5 * bm.dot(ws);
    return p;
}

QuadraticProblem make_quadratic_problem(std::uint64_t seed, const QuadraticOptions& o) {
    if (o.dim < 1 || o.aps < 1 || o.examples_per_ap < 1) {
        throw InvalidArgument("dim, aps and examples_per_ap must be at least 1");
    }
    if (!(o.mu > 0.0) || !(o.L >= o.mu) || !std::isfinite(o.L)) {
        throw InvalidArgument("need 0 < mu <= L");
    }
    if (!(o.noise_scale >= 0.0) || !(o.hetero_scale >= 0.0) || !(o.init_distance >= 0.0)) {
        throw InvalidArgument("noise_scale, hetero_scale and init_distance must be non-negative");
    }
    if (o.modalities < 1) throw InvalidArgument("modality count must be at least 1");
    Rng rng(derive_seed({seed, kQuadraticStream}));
    const std::size_t d = o.dim;

    Matrix g(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) g(r, c) = rng.normal();
    }
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector lambda(d);
    for (std::size_t k = 0; k < d; ++k) lambda[k] = rng.uniform(o.mu, o.L);
    lambda[0] = o.mu;
    if (d > 1) lambda[d - 1] = o.L;
    Matrix a = q * lambda.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose()).eval();
    std::vector<double> A(d * d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) A[r * d + c] = a(r, c);
    }

    const double inv_m = 1.0 / static_cast<double>(o.modalities);
    std::vector<double> b_bar(d);
    for (auto& v : b_bar) v = rng.normal();
    std::vector<std::vector<double>> drift(o.aps, std::vector<double>(d));
    for (auto& row : drift) {
        for (auto& v : row) v = rng.normal();
    }
    center_and_scale(drift, o.hetero_scale * inv_m);
    std::vector<std::vector<double>> b(o.aps, b_bar);
    for (std::size_t n = 0; n < o.aps; ++n) {
        for (std::size_t k = 0; k < d; ++k) b[n][k] += drift[n][k];
    }

    std::vector<std::vector<std::vector<double>>> offsets(o.aps);
    for (auto& ap : offsets) {
        ap.assign(o.examples_per_ap, std::vector<double>(d));
        for (auto& xi : ap) {
            for (auto& v : xi) v = rng.normal();
        }
        center_and_scale(ap, o.noise_scale * inv_m);
    }

    std::vector<double> dir(d);
    for (auto& v : dir) v = rng.normal();
    const double len = norm(dir);

    auto p = make_quadratic_problem(d, std::move(A), std::move(b), std::move(offsets), {}, o.modalities);
    p.w0 = p.w_star;
    for (std::size_t k = 0; k < d; ++k) p.w0[k] += o.init_distance * dir[k] / len;
    return p;
}

double QuadraticProblem::sigma2(std::size_t batch_size) const {
    if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
    const std::size_t m = examples_per_ap();
    const std::size_t bs = std::min(batch_size, m);
    if (m <= 1 || bs == m) return 0.0;
    double total = 0.0;
    for (const auto& ap : offsets) {
        double msq = 0.0;
        for (const auto& xi : ap) msq += squared_norm(xi);
        msq /= static_cast<double>(m);
        total += msq * static_cast<double>(m - bs) / (static_cast<double>(bs) * static_cast<double>(m - 1));
    }
    return total / static_cast<double>(aps());
}

double QuadraticProblem::global_value(std::span<const double> w, std::span<double> grad) const {
    double quad = 0.0, lin = 0.0;
    for (std::size_t r = 0; r < dim; ++r) {
        double aw = 0.0;
        for (std::size_t c = 0; c < dim; ++c) aw += A[r * dim + c] * w[c];
        quad += w[r] * aw;
        lin += b_mean[r] * w[r];
        if (!grad.empty()) grad[r] = aw - b_mean[r];
    }
    return 0.5 * quad - lin;
}

double QuadraticProblem::gap(std::span<const double> w) const {
    double total = 0.0;
    for (std::size_t r = 0; r < dim; ++r) {
        double ae = 0.0;
        for (std::size_t c = 0; c < dim; ++c) ae += A[r * dim + c] * (w[c] - w_star[c]);
        total += (w[r] - w_star[r]) * ae;
    }
    return 0.5 * total;
}

QuadraticLocalObjective::QuadraticLocalObjective(const QuadraticProblem& problem, std::size_t ap)
    : problem_(problem), ap_(ap) {
    if (ap >= problem.aps()) throw InvalidArgument("AP index out of range");
}

double QuadraticLocalObjective::evaluate_batch(std::span<const std::size_t> batch, std::span<const double> w,
                                               std::span<double> grad) const {
    if (batch.empty()) throw InvalidArgument("empty batch");
    const std::size_t d = problem_.dim;
    if (w.size() != d || (!grad.empty() && grad.size() != d)) {
        throw ShapeMismatch("quadratic parameter size mismatch");
    }
    const auto& offs = problem_.offsets[ap_];
    std::vector<double> lin(problem_.b[ap_]);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<double> mean_xi(d, 0.0);
    for (auto i : batch) {
        const auto& xi = offs.at(i);
        for (std::size_t k = 0; k < d; ++k) mean_xi[k] += xi[k];
    }
    for (std::size_t k = 0; k < d; ++k) lin[k] += mean_xi[k] * inv_b;
    double quad = 0.0, lw = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        double aw = 0.0;
        for (std::size_t c = 0; c < d; ++c) aw += problem_.A[r * d + c] * w[c];
        quad += w[r] * aw;
        lw += lin[r] * w[r];
        if (!grad.empty()) grad[r] = aw - lin[r];
    }
    return 0.5 * quad - lw;
}

}  // namespace flame::analysis
