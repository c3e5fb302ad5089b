#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace flame {

// Mixes a list of integers into one 64-bit seed (splitmix64 finalizer chain).
// Used to derive independent streams like hash(master_seed, id, index).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// Seeded generator with distribution helpers whose output does not depend on
// the standard library implementation (std:: distributions are unspecified).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via the Marsaglia polar method.
    double normal();

    template <class RandomIt>
    void shuffle(RandomIt first, RandomIt last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flame
