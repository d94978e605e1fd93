#pragma once

#include <cstdint>

namespace parconv::kernels {

/// Stride-1, same-padding 2-D convolution geometry. Grouped: input and
/// output channels are split into `groups` contiguous blocks convolved
/// independently; kernel weights are laid out [out][in/groups][k][k].
struct Conv2dDims {
  int batch = 1;
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int out_channels = 0;
  int kernel = 3;  // odd
  int groups = 1;
};

/// Installs a per-thread multiply counter. While a counter is installed the
/// forward kernel takes the reference path: an explicitly zero-padded input
/// and a dense tap loop, incrementing the counter once per multiply actually
/// executed. Pass nullptr to remove.
void set_mac_counter(std::uint64_t* counter);
std::uint64_t* mac_counter();

/// RAII counting scope for instrumenting a region of forward passes.
class MacCountScope {
 public:
  MacCountScope();
  ~MacCountScope();
  MacCountScope(const MacCountScope&) = delete;
  MacCountScope& operator=(const MacCountScope&) = delete;
  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* prev_ = nullptr;
};

/// y = conv(x, w) (+ bias per output channel). Overwrites y.
template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y,
                    const Conv2dDims& d);

/// dx += dconv/dx * dy
template <typename T>
void conv2d_backward_input(const T* w, const T* dy, T* dx, const Conv2dDims& d);

/// dw += dconv/dw * dy
template <typename T>
void conv2d_backward_weights(const T* x, const T* dy, T* dw, const Conv2dDims& d);

/// db[c] += sum over batch and pixels of dy[:, c, :, :]
template <typename T>
void conv2d_backward_bias(const T* dy, T* db, int batch, int channels,
                          std::int64_t hw);

}  // namespace parconv::kernels
