#include "flame/fft.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace flame {

namespace {

using C = std::complex<double>;

// twiddle[m] = exp(-j 2 pi m / n), each entry evaluated directly.
std::vector<C> twiddles(std::size_t n) {
    std::vector<C> w(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        w[m] = C(std::cos(a), std::sin(a));
    }
    return w;
}

std::vector<C> fft_radix2(std::span<const C> x) {
    const std::size_t n = x.size();
    const unsigned bits = static_cast<unsigned>(std::countr_zero(n));
    std::vector<C> a(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (unsigned b = 0; b < bits; ++b) {
            r |= ((i >> b) & 1U) << (bits - 1 - b);
        }
        a[r] = x[i];
    }
    const auto w = twiddles(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const C t = w[k * stride] * a[start + k + half];
                const C u = a[start + k];
                a[start + k] = u + t;
                a[start + k + half] = u - t;
            }
        }
    }
    return a;
}

std::vector<C> dft_direct(std::span<const C> x) {
    const std::size_t n = x.size();
    const auto w = twiddles(n);
    std::vector<C> out(n);
    for (std::size_t p = 0; p < n; ++p) {
        C acc(0.0, 0.0);
        std::size_t idx = 0;
        for (std::size_t k = 0; k < n; ++k) {
            acc += x[k] * w[idx];
            idx += p;
            if (idx >= n) {
                idx -= n;
            }
        }
        out[p] = acc;
    }
    return out;
}

}  // namespace

std::vector<C> dft(std::span<const C> x) {
    if (x.empty()) {
        return {};
    }
    if (std::has_single_bit(x.size())) {
        return fft_radix2(x);
    }
    return dft_direct(x);
}

}  // namespace flame
