#include "dctse/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "dctse/errors.hpp"

namespace dctse::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

// Sliding-window geometry of a regular convolution over a (C, H, W) image.
struct Geometry {
  std::size_t channels, h, w;  // image side
  std::size_t kf, kt, sf, st, pf, pt;
  std::size_t ho, wo;  // column side
  std::size_t rows() const { return channels * kf * kt; }
  std::size_t cols() const { return ho * wo; }
};

// Valid range of output columns [lo, hi) for kernel tap j along one axis.
std::pair<std::size_t, std::size_t> tap_range(std::size_t out, std::size_t in, std::size_t stride,
                                              std::size_t pad, std::size_t tap) {
  // index = o * stride + tap - pad must lie in [0, in).
  std::size_t lo = 0;
  if (pad > tap) lo = (pad - tap + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > tap) hi = std::min(out, (in - 1 + pad - tap) / stride + 1);
  if (hi < lo) hi = lo;
  return {std::min(lo, out), hi};
}

template <typename T>
void im2col(const T* x, const Geometry& g, T* cols) {
  const std::size_t plane = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kf; ++i) {
      const auto [h_lo, h_hi] = tap_range(g.ho, g.h, g.sf, g.pf, i);
      for (std::size_t j = 0; j < g.kt; ++j) {
        T* row = cols + ((c * g.kf + i) * g.kt + j) * plane;
        const auto [w_lo, w_hi] = tap_range(g.wo, g.w, g.st, g.pt, j);
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          T* dst = row + oh * g.wo;
          if (oh < h_lo || oh >= h_hi) {
            std::fill_n(dst, g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + (oh * g.sf + i - g.pf)) * g.w;
          std::fill(dst, dst + w_lo, T(0));
          if (g.st == 1) {
            if (w_hi > w_lo) std::memcpy(dst + w_lo, src + (w_lo + j - g.pt), (w_hi - w_lo) * sizeof(T));
          } else {
            for (std::size_t ow = w_lo; ow < w_hi; ++ow) dst[ow] = src[ow * g.st + j - g.pt];
          }
          std::fill(dst + w_hi, dst + g.wo, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back onto the image (accumulating).
template <typename T>
void col2im(const T* cols, const Geometry& g, T* x) {
  const std::size_t plane = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kf; ++i) {
      const auto [h_lo, h_hi] = tap_range(g.ho, g.h, g.sf, g.pf, i);
      for (std::size_t j = 0; j < g.kt; ++j) {
        const T* row = cols + ((c * g.kf + i) * g.kt + j) * plane;
        const auto [w_lo, w_hi] = tap_range(g.wo, g.w, g.st, g.pt, j);
        for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
          const T* src = row + oh * g.wo;
          T* dst = x + (c * g.h + (oh * g.sf + i - g.pf)) * g.w;
          if (g.st == 1) {
            T* d = dst + (j - g.pt);
            for (std::size_t ow = w_lo; ow < w_hi; ++ow) d[ow] += src[ow];
          } else {
            for (std::size_t ow = w_lo; ow < w_hi; ++ow) dst[ow * g.st + j - g.pt] += src[ow];
          }
        }
      }
    }
  }
}

void check_kernel(std::size_t got, const Conv2dSpec& spec, const char* what) {
  if (got != spec.kernel_count()) {
    std::ostringstream os;
    os << what << ": kernel has " << got << " weights, expected " << spec.kernel_count();
    throw InvalidArgument(os.str());
  }
}

template <typename T>
void check_bias(std::span<const T> bias, std::size_t channels, const char* what) {
  if (!bias.empty() && bias.size() != channels) {
    std::ostringstream os;
    os << what << ": bias has " << bias.size() << " entries, expected " << channels;
    throw InvalidArgument(os.str());
  }
}

Geometry conv_geometry(const Conv2dSpec& spec, std::size_t image_channels, std::size_t h, std::size_t w,
                       std::size_t ho, std::size_t wo) {
  return Geometry{image_channels, h, w, spec.kernel_freq, spec.kernel_time, spec.stride_freq, spec.stride_time,
                  spec.pad_freq, spec.pad_time, ho, wo};
}

}  // namespace

void Conv2dSpec::validate() const {
  if (kernel_freq == 0 || kernel_time == 0 || stride_freq == 0 || stride_time == 0)
    throw InvalidArgument("Conv2dSpec: kernels and strides must be >= 1");
  if (in_channels == 0 || out_channels == 0) throw InvalidArgument("Conv2dSpec: channel counts must be >= 1");
  if (transposed && (out_pad_freq >= stride_freq || out_pad_time >= stride_time))
    throw InvalidArgument("Conv2dSpec: output padding must be smaller than the stride");
}

std::pair<std::size_t, std::size_t> Conv2dSpec::output_size(std::size_t h, std::size_t w) const {
  validate();
  if (!transposed) {
    if (h + 2 * pad_freq < kernel_freq || w + 2 * pad_time < kernel_time) {
      std::ostringstream os;
      os << "conv2d: kernel " << kernel_freq << "x" << kernel_time << " larger than padded input "
         << h + 2 * pad_freq << "x" << w + 2 * pad_time;
      throw InvalidArgument(os.str());
    }
    return {(h + 2 * pad_freq - kernel_freq) / stride_freq + 1, (w + 2 * pad_time - kernel_time) / stride_time + 1};
  }
  if (h == 0 || w == 0) throw InvalidArgument("tconv2d: empty input");
  const auto full_h = (h - 1) * stride_freq + kernel_freq + out_pad_freq;
  const auto full_w = (w - 1) * stride_time + kernel_time + out_pad_time;
  if (full_h <= 2 * pad_freq || full_w <= 2 * pad_time) throw InvalidArgument("tconv2d: padding exceeds output");
  return {full_h - 2 * pad_freq, full_w - 2 * pad_time};
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                          std::span<const T> bias) {
  if (spec.transposed) throw InvalidArgument("conv2d_forward: spec is transposed");
  if (x.channels() != spec.in_channels) throw InvalidArgument("conv2d_forward: input channel mismatch");
  check_kernel(kernel.size(), spec, "conv2d_forward");
  check_bias(bias, spec.out_channels, "conv2d_forward");
  const auto [ho, wo] = spec.output_size(x.height(), x.width());
  const Geometry g = conv_geometry(spec, spec.in_channels, x.height(), x.width(), ho, wo);

  Tensor4<T> y(x.batch(), spec.out_channels, ho, wo);
  std::vector<T> cols(g.rows() * g.cols());
  CMapR<T> k(kernel.data(), spec.out_channels, g.rows());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    im2col(x.sample(n), g, cols.data());
    MapR<T> out(y.sample(n), spec.out_channels, g.cols());
    out.noalias() = k * CMapR<T>(cols.data(), g.rows(), g.cols());
    if (!bias.empty())
      for (std::size_t c = 0; c < spec.out_channels; ++c) out.row(c).array() += bias[c];
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                     const Tensor4<T>& dy, std::span<T> dkernel, std::span<T> dbias, Tensor4<T>* dx) {
  check_kernel(kernel.size(), spec, "conv2d_backward");
  check_kernel(dkernel.size(), spec, "conv2d_backward");
  const auto [ho, wo] = spec.output_size(x.height(), x.width());
  if (dy.batch() != x.batch() || dy.channels() != spec.out_channels || dy.height() != ho || dy.width() != wo)
    throw InvalidArgument("conv2d_backward: upstream gradient shape mismatch");
  const Geometry g = conv_geometry(spec, spec.in_channels, x.height(), x.width(), ho, wo);

  if (dx) *dx = Tensor4<T>(x.batch(), x.channels(), x.height(), x.width());
  std::vector<T> cols(g.rows() * g.cols());
  CMapR<T> k(kernel.data(), spec.out_channels, g.rows());
  MapR<T> dk(dkernel.data(), spec.out_channels, g.rows());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    CMapR<T> d(dy.sample(n), spec.out_channels, g.cols());
    im2col(x.sample(n), g, cols.data());
    dk.noalias() += d * CMapR<T>(cols.data(), g.rows(), g.cols()).transpose();
    if (!dbias.empty())
      for (std::size_t c = 0; c < spec.out_channels; ++c) {
        const T* p = dy.channel(n, c);
        T acc = 0;
        for (std::size_t i = 0; i < dy.plane(); ++i) acc += p[i];
        dbias[c] += acc;
      }
    if (dx) {
      MapR<T>(cols.data(), g.rows(), g.cols()).noalias() = k.transpose() * d;
      col2im(cols.data(), g, dx->sample(n));
    }
  }
}

template <typename T>
Tensor4<T> tconv2d_forward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                           std::span<const T> bias) {
  if (!spec.transposed) throw InvalidArgument("tconv2d_forward: spec is not transposed");
  if (x.channels() != spec.in_channels) throw InvalidArgument("tconv2d_forward: input channel mismatch");
  check_kernel(kernel.size(), spec, "tconv2d_forward");
  check_bias(bias, spec.out_channels, "tconv2d_forward");
  const auto [ho, wo] = spec.output_size(x.height(), x.width());
  // The output image plays the role of a regular conv input.
  const Geometry g = conv_geometry(spec, spec.out_channels, ho, wo, x.height(), x.width());

  Tensor4<T> y(x.batch(), spec.out_channels, ho, wo);
  std::vector<T> cols(g.rows() * g.cols());
  CMapR<T> k(kernel.data(), spec.in_channels, g.rows());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    MapR<T>(cols.data(), g.rows(), g.cols()).noalias() =
        k.transpose() * CMapR<T>(x.sample(n), spec.in_channels, g.cols());
    col2im(cols.data(), g, y.sample(n));
    if (!bias.empty())
      for (std::size_t c = 0; c < spec.out_channels; ++c) {
        T* p = y.channel(n, c);
        for (std::size_t i = 0; i < y.plane(); ++i) p[i] += bias[c];
      }
  }
  return y;
}

template <typename T>
void tconv2d_backward(const Tensor4<T>& x, const Conv2dSpec& spec, std::span<const T> kernel,
                      const Tensor4<T>& dy, std::span<T> dkernel, std::span<T> dbias, Tensor4<T>* dx) {
  check_kernel(kernel.size(), spec, "tconv2d_backward");
  check_kernel(dkernel.size(), spec, "tconv2d_backward");
  const auto [ho, wo] = spec.output_size(x.height(), x.width());
  if (dy.batch() != x.batch() || dy.channels() != spec.out_channels || dy.height() != ho || dy.width() != wo)
    throw InvalidArgument("tconv2d_backward: upstream gradient shape mismatch");
  const Geometry g = conv_geometry(spec, spec.out_channels, ho, wo, x.height(), x.width());

  if (dx) *dx = Tensor4<T>(x.batch(), x.channels(), x.height(), x.width());
  std::vector<T> cols(g.rows() * g.cols());
  CMapR<T> k(kernel.data(), spec.in_channels, g.rows());
  MapR<T> dk(dkernel.data(), spec.in_channels, g.rows());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    im2col(dy.sample(n), g, cols.data());
    CMapR<T> dcols(cols.data(), g.rows(), g.cols());
    dk.noalias() += CMapR<T>(x.sample(n), spec.in_channels, g.cols()) * dcols.transpose();
    if (dx) MapR<T>(dx->sample(n), spec.in_channels, g.cols()).noalias() = k * dcols;
    if (!dbias.empty())
      for (std::size_t c = 0; c < spec.out_channels; ++c) {
        const T* p = dy.channel(n, c);
        T acc = 0;
        for (std::size_t i = 0; i < dy.plane(); ++i) acc += p[i];
        dbias[c] += acc;
      }
  }
}

template <typename T>
Tensor4<T> prelu_forward(const Tensor4<T>& x, std::span<const T> slopes) {
  if (slopes.size() != x.channels()) throw InvalidArgument("prelu: slope count does not match channels");
  Tensor4<T> y = x;
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      T* p = y.channel(n, c);
      const T a = slopes[c];
      for (std::size_t i = 0; i < x.plane(); ++i)
        if (!(p[i] > T(0))) p[i] *= a;
    }
  return y;
}

template <typename T>
Tensor4<T> prelu_backward(const Tensor4<T>& x, std::span<const T> slopes, const Tensor4<T>& dy,
                          std::span<T> dslopes) {
  if (slopes.size() != x.channels() || dslopes.size() != x.channels())
    throw InvalidArgument("prelu: slope count does not match channels");
  if (!x.same_shape(dy)) throw InvalidArgument("prelu_backward: gradient shape mismatch");
  Tensor4<T> dx = dy;
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const T* xp = x.channel(n, c);
      T* d = dx.channel(n, c);
      const T a = slopes[c];
      double acc = 0.0;
      for (std::size_t i = 0; i < x.plane(); ++i)
        if (!(xp[i] > T(0))) {
          acc += static_cast<double>(d[i]) * xp[i];
          d[i] *= a;
        }
      dslopes[c] += static_cast<T>(acc);
    }
  return dx;
}

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, Mode mode,
                             const BatchNormOptions& opt, BatchNormCache<T>* cache) {
  const std::size_t channels = x.channels();
  if (gamma.size() != channels || beta.size() != channels || running_mean.size() != channels ||
      running_var.size() != channels)
    throw InvalidArgument("batchnorm: parameter count does not match channels");
  if (!(opt.eps > 0.0)) throw InvalidArgument("batchnorm: eps must be positive");
  const std::size_t count = x.batch() * x.plane();
  if (mode == Mode::train && count < 2)
    throw InvalidArgument("batchnorm: train mode needs more than one value per channel");

  std::vector<T> inv_std(channels);
  std::vector<T> mean(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < x.batch(); ++n) {
        const T* p = x.channel(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < x.batch(); ++n) {
        const T* p = x.channel(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = sq / static_cast<double>(count - 1);
      running_mean[c] = static_cast<T>((1.0 - opt.momentum) * running_mean[c] + opt.momentum * mu);
      running_var[c] = static_cast<T>((1.0 - opt.momentum) * running_var[c] + opt.momentum * unbiased);
    } else {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + opt.eps));
    }
  }

  Tensor4<T> y(x.batch(), channels, x.height(), x.width());
  Tensor4<T> xhat;
  if (cache) xhat = Tensor4<T>(x.batch(), channels, x.height(), x.width());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const T* p = x.channel(n, c);
      T* out = y.channel(n, c);
      T* h = cache ? xhat.channel(n, c) : nullptr;
      for (std::size_t i = 0; i < x.plane(); ++i) {
        const T v = (p[i] - mean[c]) * inv_std[c];
        if (h) h[i] = v;
        out[i] = gamma[c] * v + beta[c];
      }
    }
  if (cache) {
    cache->mode = mode;
    cache->inv_std = std::move(inv_std);
    cache->normalized = std::move(xhat);
  }
  return y;
}

template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor4<T>& dy,
                              std::span<T> dgamma, std::span<T> dbeta) {
  const auto& xhat = cache.normalized;
  if (!xhat.same_shape(dy)) throw InvalidArgument("batchnorm_backward: gradient shape mismatch");
  const std::size_t channels = dy.channels();
  const double count = static_cast<double>(dy.batch() * dy.plane());
  Tensor4<T> dx(dy.batch(), channels, dy.height(), dy.width());
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < dy.batch(); ++n) {
      const T* d = dy.channel(n, c);
      const T* h = xhat.channel(n, c);
      for (std::size_t i = 0; i < dy.plane(); ++i) {
        sum_dy += d[i];
        sum_dy_xhat += static_cast<double>(d[i]) * h[i];
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    const double g = gamma[c];
    const double s = cache.inv_std[c];
    for (std::size_t n = 0; n < dy.batch(); ++n) {
      const T* d = dy.channel(n, c);
      const T* h = xhat.channel(n, c);
      T* out = dx.channel(n, c);
      if (cache.mode == Mode::train) {
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (std::size_t i = 0; i < dy.plane(); ++i)
          out[i] = static_cast<T>(g * s * (d[i] - mean_dy - h[i] * mean_dy_xhat));
      } else {
        for (std::size_t i = 0; i < dy.plane(); ++i) out[i] = static_cast<T>(g * s * d[i]);
      }
    }
  }
  return dx;
}

std::vector<double> orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw InvalidArgument("orthogonal_init: empty shape");
  const bool wide = rows < cols;
  const std::size_t tall_rows = wide ? cols : rows;
  const std::size_t tall_cols = wide ? rows : cols;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a(tall_rows, tall_cols);
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = gauss(rng);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall_rows, tall_cols);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(tall_cols).triangularView<Eigen::Upper>();
  // Sign fix makes the distribution uniform (Haar) over orthogonal matrices.
  for (std::size_t j = 0; j < tall_cols; ++j)
    if (r(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) < 0) q.col(static_cast<Eigen::Index>(j)) *= -1.0;

  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = wide ? q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))
                               : q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

#define DCTSE_INSTANTIATE_LAYERS(T)                                                                          \
  template Tensor4<T> conv2d_forward(const Tensor4<T>&, const Conv2dSpec&, std::span<const T>,              \
                                     std::span<const T>);                                                   \
  template void conv2d_backward(const Tensor4<T>&, const Conv2dSpec&, std::span<const T>, const Tensor4<T>&, \
                                std::span<T>, std::span<T>, Tensor4<T>*);                                   \
  template Tensor4<T> tconv2d_forward(const Tensor4<T>&, const Conv2dSpec&, std::span<const T>,             \
                                      std::span<const T>);                                                  \
  template void tconv2d_backward(const Tensor4<T>&, const Conv2dSpec&, std::span<const T>, const Tensor4<T>&, \
                                 std::span<T>, std::span<T>, Tensor4<T>*);                                  \
  template Tensor4<T> prelu_forward(const Tensor4<T>&, std::span<const T>);                                 \
  template Tensor4<T> prelu_backward(const Tensor4<T>&, std::span<const T>, const Tensor4<T>&, std::span<T>); \
  template Tensor4<T> batchnorm_forward(const Tensor4<T>&, std::span<const T>, std::span<const T>,          \
                                        std::span<T>, std::span<T>, Mode, const BatchNormOptions&,          \
                                        BatchNormCache<T>*);                                                \
  template Tensor4<T> batchnorm_backward(const BatchNormCache<T>&, std::span<const T>, const Tensor4<T>&,   \
                                         std::span<T>, std::span<T>);

DCTSE_INSTANTIATE_LAYERS(float)
DCTSE_INSTANTIATE_LAYERS(double)

}  // namespace dctse::nn
