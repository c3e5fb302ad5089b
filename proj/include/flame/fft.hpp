#pragma once

#include <complex>
#include <span>
#include <vector>

namespace flame {

// Unnormalized forward DFT, X[p] = sum_k x[k] exp(-j 2 pi p k / n).
// Radix-2 FFT for power-of-two lengths, table-driven direct sum otherwise.
std::vector<std::complex<double>> dft(std::span<const std::complex<double>> x);

}  // namespace flame
