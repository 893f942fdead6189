#pragma once

// Building blocks of the mask-estimation U-net: strided convolution and its
// transpose, batch normalization, PReLU and orthogonal initialization. All
// kernels are instantiated for float (production) and double (gradient
// checks).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dctse/tensor.hpp"

namespace dctse::nn {

// Geometry of one (transposed) convolution. For a regular convolution the
// kernel is laid out [out][in][kf][kt]; for a transposed one [in][out][kf][kt],
// so a conv and a tconv sharing a kernel buffer are adjoint to each other.
struct Conv2dSpec {
  std::size_t kernel_freq = 1;
  std::size_t kernel_time = 1;
  std::size_t stride_freq = 1;
  std::size_t stride_time = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t pad_freq = 0;
  std::size_t pad_time = 0;
  std::size_t out_pad_freq = 0;  // transposed only
  std::size_t out_pad_time = 0;
  bool transposed = false;

  void validate() const;
  std::size_t kernel_count() const { return in_channels * out_channels * kernel_freq * kernel_time; }
  // Output (freq, time) for an input of (h, w); throws when the kernel does
  // not fit the padded input.
  std::pair<std::size_t, std::size_t> output_size(std::size_t h, std::size_t w) const;
};

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                          std::span<const T> bias);

// Accumulates into dkernel/dbias; writes dx when non-null.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                     const Tensor4<T>& dy, std::span<T> dkernel, std::span<T> dbias, Tensor4<T>* dx);

template <typename T>
Tensor4<T> tconv2d_forward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                           std::span<const T> bias);

template <typename T>
void tconv2d_backward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                      const Tensor4<T>& dy, std::span<T> dkernel, std::span<T> dbias, Tensor4<T>* dx);

// f(x) = x for x > 0, a_c * x otherwise, with one slope per channel.
template <typename T>
Tensor4<T> prelu_forward(const Tensor4<T>& x, std::span<const T> slopes);

template <typename T>
Tensor4<T> prelu_backward(const Tensor4<T>& x, std::span<const T> slopes, const Tensor4<T>& dy,
                          std::span<T> dslopes);

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  std::vector<T> inv_std;
  Tensor4<T> normalized;  // x_hat before the affine step
};

// Per-channel statistics over (batch, freq, time). Train mode normalizes by
// the batch mean and biased variance and updates the running statistics
// (running variance uses the unbiased estimate); eval mode uses the running
// statistics.
template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, Mode mode,
                             const BatchNormOptions& opt, BatchNormCache<T>* cache);

template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor4<T>& dy,
                              std::span<T> dgamma, std::span<T> dbeta);

// Standalone batch-norm layer with its own parameters.
template <typename T>
struct BatchNormState {
  std::vector<T> gamma, beta, running_mean, running_var;
  BatchNormOptions options;
  Mode mode = Mode::train;

  explicit BatchNormState(std::size_t channels)
      : gamma(channels, T(1)), beta(channels, T(0)), running_mean(channels, T(0)), running_var(channels, T(1)) {}

  Tensor4<T> forward(const Tensor4<T>& x, BatchNormCache<T>* cache = nullptr) {
    return batchnorm_forward<T>(x, gamma, beta, running_mean, running_var, mode, options, cache);
  }
};

// Row-major rows x cols matrix with orthonormal rows (rows <= cols) or
// orthonormal columns (rows > cols); deterministic in seed.
std::vector<double> orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace dctse::nn
