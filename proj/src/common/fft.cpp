#include "snrilab/common/fft.hpp"

#include <cmath>

#include "snrilab/common/errors.hpp"

namespace snrilab {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw InvalidParams("fft size must be a power of two, got " +
                        std::to_string(n));
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) *
                       (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& z : a) z *= inv_n;
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x,
                                       std::size_t n) {
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  const std::size_t m = std::min(n, x.size());
  for (std::size_t i = 0; i < m; ++i) buf[i] = {x[i], 0.0};
  fft_inplace(buf, false);
  buf.resize(n / 2 + 1);
  return buf;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace snrilab
