#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace dctse::nn {

enum class Mode { train, eval };

// Dense (batch, channels, freq, time) tensor, time fastest.
template <typename T>
struct Tensor4 {
  std::array<std::size_t, 4> shape{};
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : shape{n, c, h, w}, data(n * c * h * w, fill) {}

  std::size_t batch() const { return shape[0]; }
  std::size_t channels() const { return shape[1]; }
  std::size_t height() const { return shape[2]; }
  std::size_t width() const { return shape[3]; }
  std::size_t plane() const { return shape[2] * shape[3]; }
  std::size_t sample_size() const { return shape[1] * shape[2] * shape[3]; }
  std::size_t size() const { return data.size(); }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  T* sample(std::size_t n) { return data.data() + n * sample_size(); }
  const T* sample(std::size_t n) const { return data.data() + n * sample_size(); }
  T* channel(std::size_t n, std::size_t c) { return sample(n) + c * plane(); }
  const T* channel(std::size_t n, std::size_t c) const { return sample(n) + c * plane(); }

  bool same_shape(const Tensor4& o) const { return shape == o.shape; }
};

// Channel-wise concatenation [a, b] of tensors with equal batch/freq/time.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

// Inverse of concat_channels: first `first_channels` go to .first.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& x, std::size_t first_channels);

template <typename T>
bool all_finite(std::span<const T> v);

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& x) {
  Tensor4<To> out;
  out.shape = x.shape;
  out.data.assign(x.data.begin(), x.data.end());
  return out;
}

}  // namespace dctse::nn
