#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately separate from the library code paths they check: the DFT is
// the O(N^2) definition, the convolutions are direct nested loops with
// bounds checks (no padding buffer, no GEMM), and gradients come from
// central finite differences.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "parconv/tensor.hpp"

namespace oracles {

/// O(N^2) DFT: X[k] = sum_n x[n] exp(-2 pi i k n / N).
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

/// Direct stride-1 same-padding grouped convolution, six nested loops with
/// explicit bounds checks. groups = 1 gives the standard convolution,
/// k = 1 the pointwise one.
template <typename T>
parconv::TensorT<T> conv2d_loops(const parconv::TensorT<T>& x,
                                 const parconv::TensorT<T>& w,
                                 const std::vector<T>& bias, int groups) {
  const int batch = x.dim(0), m = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int nout = w.dim(0), k = w.dim(2);
  const int p = (k - 1) / 2;
  const int mg = m / groups;
  const int ng = nout / groups;

  parconv::TensorT<T> y({batch, nout, h, wd});
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < nout; ++o) {
      const int gi = o / ng;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < wd; ++j) {
          T acc = bias.empty() ? T{0} : bias[static_cast<std::size_t>(o)];
          for (int ci = 0; ci < mg; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int yy = i + ky - p;
                const int xx = j + kx - p;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                acc += w.at(o, ci, ky, kx) * x.at(n, gi * mg + ci, yy, xx);
              }
            }
          }
          y.at(n, o, i, j) = acc;
        }
      }
    }
  }
  return y;
}

/// Pointwise conv as an explicit per-pixel matrix multiply over channels.
template <typename T>
parconv::TensorT<T> pointwise_matmul(const parconv::TensorT<T>& x,
                                     const parconv::TensorT<T>& w) {
  const int batch = x.dim(0), m = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int nout = w.dim(0);
  parconv::TensorT<T> y({batch, nout, h, wd});
  for (int n = 0; n < batch; ++n) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < wd; ++j) {
        for (int o = 0; o < nout; ++o) {
          T acc{0};
          for (int c = 0; c < m; ++c) {
            acc += w.at(o, c, 0, 0) * x.at(n, c, i, j);
          }
          y.at(n, o, i, j) = acc;
        }
      }
    }
  }
  return y;
}

/// Central finite difference of scalar_fn at every element of `values`.
/// Returns d scalar_fn / d values with step h.
inline std::vector<double> finite_difference(
    std::vector<double>& values, const std::function<double()>& scalar_fn,
    double h = 1e-3) {
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double hi = scalar_fn();
    values[i] = keep - h;
    const double lo = scalar_fn();
    values[i] = keep;
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

/// Largest relative mismatch max |a-b| / max(1e-8, |a|, |b|).
inline double max_rel_error(const std::vector<double>& a,
                            const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1e-8, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace oracles
