#include <algorithm>
#include <cmath>
#include <numeric>

#include "flame/analysis.hpp"
#include "flame/error.hpp"
#include "flame/parallel.hpp"
#include "flame/random.hpp"

namespace flame::analysis {

namespace {

constexpr std::uint64_t kSigmaStream = 0x7369676dULL;
constexpr std::uint64_t kSmoothStream = 0x736d6f6fULL;
constexpr std::uint64_t kReplicaStream = 0x7265706cULL;

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double len = 0.0;
    while (!(len > 0.0)) {
        for (auto& x : v) x = rng.normal();
        len = norm(v);
    }
    for (auto& x : v) x /= len;
    return v;
}

double distance_squared(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

void AssumptionEstimates::validate() const {
    for (double v : {L_hat, mu, sigma2_hat, zeta2_hat}) {
        if (!(v >= 0.0)) throw InvalidArgument("assumption estimates must be non-negative");
    }
    if (L_hat > 0.0 && mu > 0.0 && L_hat < mu) throw InvalidArgument("L_hat below mu");
    if (modalities < 1) throw InvalidArgument("modality count must be at least 1");
}

Lemma1Residuals lemma1_residual(const GradVector& local_at_wtj, const GradVector& local_at_wt,
                                const GradVector& global_at_wt) {
    require_same_layout(local_at_wtj, local_at_wt, "lemma1_residual");
    require_same_layout(local_at_wtj, global_at_wt, "lemma1_residual");
    double corrected = 0.0, literal = 0.0;
    for (std::size_t i = 0; i < local_at_wtj.size(); ++i) {
        const double gj = local_at_wtj[i], gt = local_at_wt[i], g = global_at_wt[i];
        const double drift = gj - gt;
        const double c = gj - (g + drift + (gt - g));
        const double l = gj - (g + drift + (gj - g));
        corrected += c * c;
        literal += l * l;
    }
    return {std::sqrt(corrected), std::sqrt(literal)};
}

double estimate_sigma2(const LocalObjective& local, std::span<const double> w, std::size_t batch_size,
                       std::size_t trials, std::uint64_t seed) {
    const std::size_t m = local.example_count();
    if (trials < 2) throw InvalidArgument("estimate_sigma2 needs at least two trials");
    if (batch_size < 1 || batch_size > m) throw InvalidArgument("batch size must be in [1, |dataset|]");
    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<double> full(w.size()), g(w.size());
    local.evaluate_batch(all, w, full);
    Rng rng(derive_seed({seed, kSigmaStream}));
    std::vector<std::size_t> order(all), batch(batch_size);
    double total = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        rng.shuffle(order.begin(), order.end());
        std::copy_n(order.begin(), batch_size, batch.begin());
        std::sort(batch.begin(), batch.end());
        local.evaluate_batch(batch, w, g);
        total += distance_squared(g, full);
    }
    return total / static_cast<double>(trials);
}

double estimate_zeta2(std::span<const LocalObjective* const> locals, std::span<const double> w) {
    if (locals.empty()) throw InvalidArgument("estimate_zeta2 needs at least one AP");
    const std::size_t n = locals.size();
    std::vector<std::vector<double>> grads(n, std::vector<double>(w.size()));
    std::vector<double> mean(w.size(), 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        FullBatchObjective(*locals[a]).evaluate(w, grads[a]);
        for (std::size_t i = 0; i < w.size(); ++i) mean[i] += grads[a][i];
    }
    for (auto& v : mean) v /= static_cast<double>(n);
    double total = 0.0;
    for (const auto& g : grads) total += distance_squared(g, mean);
    return total / static_cast<double>(n);
}

double estimate_smoothness(const Objective& objective, std::span<const double> center,
                           const SmoothnessOptions& options, std::uint64_t seed) {
    if (options.pair_trials < 1) throw InvalidArgument("estimate_smoothness needs at least one pair");
    if (!(options.step > 0.0) || !(options.radius >= 0.0)) {
        throw InvalidArgument("smoothness step must be > 0 and radius >= 0");
    }
    const std::size_t dim = objective.dimension();
    if (center.size() != dim) throw ShapeMismatch("center does not match objective dimension");
    Rng rng(derive_seed({seed, kSmoothStream}));
    std::vector<double> w(dim), w2(dim), g(dim), g2(dim), dg(dim);
    double best = 0.0;
    for (std::size_t p = 0; p < options.pair_trials; ++p) {
        const auto u = random_unit(dim, rng);
        auto d = random_unit(dim, rng);
        for (std::size_t i = 0; i < dim; ++i) {
            w[i] = center[i] + options.radius * u[i];
            d[i] *= options.step;
        }
        objective.evaluate(w, g);
        for (std::size_t r = 0; r <= options.refinements; ++r) {
            for (std::size_t i = 0; i < dim; ++i) w2[i] = w[i] + d[i];
            objective.evaluate(w2, g2);
            for (std::size_t i = 0; i < dim; ++i) dg[i] = g2[i] - g[i];
            const double step = std::sqrt(distance_squared(w2, w));
            const double rise = norm(dg);
            if (!(step > 0.0)) break;
            best = std::max(best, rise / step);
            if (!(rise > 0.0)) break;
            for (std::size_t i = 0; i < dim; ++i) d[i] = dg[i] * (options.step / rise);
        }
    }
    return best;
}

double BoundConstants::contraction() const {
    return eta * static_cast<double>(local_steps) * mu / static_cast<double>(modalities);
}

void BoundConstants::validate() const {
    for (double v : {eta, mu, L, sigma2, zeta2}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw BoundInapplicable(std::string("constants must be finite and non-negative"));
        }
    }
    if (modalities < 1 || aps < 1 || local_steps < 1) {
        throw BoundInapplicable(std::string("M, N and J must be at least 1"));
    }
    if (!(contraction() < 1.0)) {
        throw BoundInapplicable(contraction());
    }
}

double theorem1_step_bound(double gap, const BoundConstants& c) {
    c.validate();
    if (!(gap >= 0.0)) throw InvalidArgument("gap must be non-negative");
    const double j = static_cast<double>(c.local_steps);
    const double m = static_cast<double>(c.modalities);
    const double n = static_cast<double>(c.aps);
    return gap * (1.0 - c.contraction()) + c.eta * c.eta * c.L * j * j * (c.sigma2 + c.zeta2) / (2.0 * n * m);
}

std::vector<double> bound_trace(double gap0, const BoundConstants& c, std::size_t rounds) {
    std::vector<double> out{gap0};
    for (std::size_t t = 0; t < rounds; ++t) out.push_back(theorem1_step_bound(out.back(), c));
    return out;
}

BoundVerification verify_bound(const QuadraticProblem& problem, const federation::TrainingConfig& cfg,
                               std::size_t seeds) {
    cfg.validate();
    if (seeds < 1) throw InvalidArgument("verify_bound needs at least one seed");
    BoundVerification out;
    auto& c = out.constants;
    c.eta = cfg.eta;
    c.local_steps = cfg.local_steps;
    c.mu = problem.mu;
    c.modalities = problem.modalities;
    c.L = problem.L;
    c.sigma2 = problem.sigma2(cfg.batch_size);
    c.zeta2 = problem.zeta2;
    c.aps = problem.aps();
    c.validate();

    std::vector<QuadraticLocalObjective> objectives;
    for (std::size_t n = 0; n < problem.aps(); ++n) objectives.emplace_back(problem, n);
    std::vector<const LocalObjective*> locals;
    for (const auto& o : objectives) locals.push_back(&o);

    const std::size_t T = cfg.rounds;
    std::vector<std::vector<double>> gaps(seeds, std::vector<double>(T + 1));
    parallel_for(seeds, cfg.threads, [&](std::size_t s) {
        auto replica = cfg;
        replica.threads = 1;
        replica.seed = derive_seed({cfg.seed, kReplicaStream, s});
        auto& g = gaps[s];
        const ParamVector w0(problem.layout(), problem.w0);
        g[0] = problem.gap(w0.values());
        federation::run_rounds(locals, w0, replica,
                               [&](std::size_t round, const ParamVector& w, std::span<const ParamVector>) {
                                   g[round] = problem.gap(w.values());
                               });
    });

    const double count = static_cast<double>(seeds);
    out.rows.resize(T + 1);
    for (std::size_t t = 0; t <= T; ++t) {
        double mean = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) mean += gaps[s][t];
        mean /= count;
        double var = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) var += (gaps[s][t] - mean) * (gaps[s][t] - mean);
        var = seeds > 1 ? var / (count - 1.0) : 0.0;
        out.rows[t].round = t;
        out.rows[t].mean_gap = mean;
        out.rows[t].std_error = std::sqrt(var / count);
    }
    const auto trace = bound_trace(out.rows[0].mean_gap, c, T);
    for (std::size_t t = 0; t <= T; ++t) {
        auto& row = out.rows[t];
        row.bound = trace[t];
        row.violation = row.mean_gap > row.bound + 3.0 * row.std_error;
        out.violations += row.violation ? 1 : 0;
    }
    out.violation_fraction = static_cast<double>(out.violations) / static_cast<double>(T + 1);
    return out;
}

std::vector<double> gradient_descent_gaps(const QuadraticProblem& problem, double eta, std::size_t steps) {
    std::vector<double> w(problem.w0), g(problem.dim);
    std::vector<double> out{problem.gap(w)};
    for (std::size_t t = 0; t < steps; ++t) {
        problem.global_value(w, g);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * g[i];
        out.push_back(problem.gap(w));
    }
    return out;
}

}  // namespace flame::analysis
