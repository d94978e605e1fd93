#pragma once

#include <complex>
#include <vector>

namespace parconv {

/// In-place iterative radix-2 Cooley-Tukey FFT. n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x);

/// Periodic Hann window of length n: w[i] = 0.5 * (1 - cos(2*pi*i/n)).
std::vector<double> hann_window_periodic(int n);

bool is_power_of_two(int n);

}  // namespace parconv
