#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace snrilab {

// In-place iterative radix-2 FFT. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Real forward transform: returns n/2+1 bins of the length-n transform of x
// (zero-padded or truncated to n).
std::vector<std::complex<double>> rfft(const std::vector<double>& x,
                                       std::size_t n);

// Smallest power of two >= n (n >= 1).
std::size_t next_pow2(std::size_t n);

}  // namespace snrilab
