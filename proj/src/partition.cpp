#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "flame/error.hpp"
#include "flame/federation.hpp"
#include "flame/random.hpp"

namespace flame::federation {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c74ULL;
constexpr std::uint64_t kIidStream = 0x69696421ULL;
constexpr std::uint64_t kNonIidStream = 0x6e6f6e69ULL;

// Pool indices grouped by label, each group ascending.
std::map<int, std::vector<std::size_t>> group_by_label(std::span<const int> labels,
                                                       std::span<const std::size_t> pool) {
    std::map<int, std::vector<std::size_t>> groups;
    for (auto i : pool) {
        if (i >= labels.size()) {
            throw InvalidArgument("pool index out of range");
        }
        groups[labels[i]].push_back(i);
    }
    for (auto& [label, idx] : groups) {
        std::sort(idx.begin(), idx.end());
        if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) {
            throw InvalidArgument("pool contains duplicate indices");
        }
    }
    return groups;
}

void finalize(Partition& p, std::span<const int> labels) {
    p.labels.assign(p.aps(), {});
    for (std::size_t n = 0; n < p.aps(); ++n) {
        auto& d = p.examples[n];
        std::sort(d.begin(), d.end());
        std::set<int> present;
        for (auto i : d) present.insert(labels[i]);
        p.labels[n].assign(present.begin(), present.end());
        if (d.empty()) {
            throw InvalidArgument("partition left AP " + std::to_string(n) + " without examples");
        }
    }
}

}  // namespace

void Partition::validate(std::span<const int> dataset_labels) const {
    if (labels.size() != examples.size()) {
        throw InvalidArgument("partition label sets and datasets disagree in AP count");
    }
    std::set<std::size_t> seen;
    for (std::size_t n = 0; n < aps(); ++n) {
        std::set<int> present;
        for (auto i : examples[n]) {
            if (!seen.insert(i).second) {
                throw InvalidArgument("example " + std::to_string(i) + " assigned to more than one AP");
            }
            present.insert(dataset_labels[i]);
        }
        if (std::vector<int>(present.begin(), present.end()) != labels[n]) {
            throw InvalidArgument("A_n does not match the labels present in D_n for AP " + std::to_string(n));
        }
    }
}

TrainTestSplit split_train_test(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("test_fraction must be in [0, 1)");
    }
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Rng rng(derive_seed({seed, kSplitStream}));
    TrainTestSplit split;
    for (auto& [label, idx] : group_by_label(labels, all)) {
        rng.shuffle(idx.begin(), idx.end());
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Partition partition_iid(std::span<const int> labels, std::span<const std::size_t> pool, std::size_t aps,
                        std::uint64_t seed) {
    if (aps < 1) {
        throw InvalidArgument("need at least one AP");
    }
    Rng rng(derive_seed({seed, kIidStream}));
    Partition p;
    p.examples.assign(aps, {});
    std::size_t cursor = 0;
    for (auto& [label, idx] : group_by_label(labels, pool)) {
        if (idx.size() < aps) {
            throw InvalidArgument("label " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                  " examples, fewer than the " + std::to_string(aps) + " APs");
        }
        rng.shuffle(idx.begin(), idx.end());
        for (auto i : idx) {
            p.examples[cursor % aps].push_back(i);
            ++cursor;
        }
    }
    finalize(p, labels);
    return p;
}

Partition partition_noniid(std::span<const int> labels, std::span<const std::size_t> pool, std::size_t aps,
                           std::size_t labels_per_ap, std::size_t overlap_pairs, std::uint64_t seed) {
    auto groups = group_by_label(labels, pool);
    const std::size_t num_labels = groups.size();
    if (aps < 1 || labels_per_ap < 1) {
        throw InvalidArgument("need at least one AP and one label per AP");
    }
    if (aps * labels_per_ap < num_labels) {
        throw InvalidArgument("infeasible partition: N * labels_per_ap < |A|");
    }
    if (aps * labels_per_ap - num_labels != overlap_pairs) {
        throw InvalidArgument("infeasible partition: overlap_pairs must equal N * labels_per_ap - |A| = " +
                              std::to_string(aps * labels_per_ap - num_labels));
    }
    if (labels_per_ap > num_labels || overlap_pairs > num_labels || (overlap_pairs > 0 && aps < 2)) {
        throw InvalidArgument("infeasible partition: too many label slots for |A| labels");
    }

    std::vector<int> order;
    for (const auto& [label, idx] : groups) order.push_back(label);
    Rng rng(derive_seed({seed, kNonIidStream}));
    rng.shuffle(order.begin(), order.end());

    std::vector<std::size_t> capacity(aps, labels_per_ap);
    std::vector<std::vector<std::size_t>> pair_use(aps, std::vector<std::size_t>(aps, 0));
    std::map<int, std::vector<std::size_t>> owners;

    for (std::size_t s = 0; s < overlap_pairs; ++s) {
        const int label = order[s];
        std::size_t best_a = aps, best_b = aps;
        for (std::size_t a = 0; a < aps; ++a) {
            for (std::size_t b = a + 1; b < aps; ++b) {
                if (capacity[a] == 0 || capacity[b] == 0) continue;
                if (best_a == aps) {
                    best_a = a;
                    best_b = b;
                    continue;
                }
                const auto use = pair_use[a][b], best_use = pair_use[best_a][best_b];
                const auto cap = capacity[a] + capacity[b], best_cap = capacity[best_a] + capacity[best_b];
                if (use < best_use || (use == best_use && cap > best_cap)) {
                    best_a = a;
                    best_b = b;
                }
            }
        }
        if (best_a == aps) {
            throw InvalidArgument("infeasible partition: no AP pair left for a shared label");
        }
        --capacity[best_a];
        --capacity[best_b];
        ++pair_use[best_a][best_b];
        owners[label] = {best_a, best_b};
    }
    for (std::size_t s = overlap_pairs; s < order.size(); ++s) {
        const auto it = std::max_element(capacity.begin(), capacity.end());
        if (*it == 0) {
            throw InvalidArgument("infeasible partition: ran out of label slots");
        }
        --(*it);
        owners[order[s]] = {static_cast<std::size_t>(it - capacity.begin())};
    }

    Partition p;
    p.examples.assign(aps, {});
    for (auto& [label, idx] : groups) {
        const auto& own = owners.at(label);
        if (idx.size() < own.size()) {
            throw InvalidArgument("shared label " + std::to_string(label) + " needs at least two examples");
        }
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            p.examples[own[i % own.size()]].push_back(idx[i]);
        }
    }
    finalize(p, labels);
    return p;
}

}  // namespace flame::federation
