#include "parconv/fft.hpp"

#include <cmath>
#include <numbers>

#include "parconv/errors.hpp"

namespace parconv {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0) return;
  if (!is_power_of_two(static_cast<int>(n))) {
    throw InvalidConfigError("FFT length must be a power of two, got " +
                             std::to_string(n));
  }

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<double> hann_window_periodic(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
  }
  return w;
}

}  // namespace parconv
