#include "dctse/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "dctse/errors.hpp"

namespace dctse::nn {

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width())
    throw InvalidArgument("concat_channels: batch/spatial shapes differ");
  Tensor4<T> out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
  for (std::size_t n = 0; n < a.batch(); ++n) {
    std::copy_n(a.sample(n), a.sample_size(), out.sample(n));
    std::copy_n(b.sample(n), b.sample_size(), out.sample(n) + a.sample_size());
  }
  return out;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& x, std::size_t first_channels) {
  if (first_channels > x.channels()) throw InvalidArgument("split_channels: split point past channel count");
  Tensor4<T> a(x.batch(), first_channels, x.height(), x.width());
  Tensor4<T> b(x.batch(), x.channels() - first_channels, x.height(), x.width());
  for (std::size_t n = 0; n < x.batch(); ++n) {
    std::copy_n(x.sample(n), a.sample_size(), a.sample(n));
    std::copy_n(x.sample(n) + a.sample_size(), b.sample_size(), b.sample(n));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template Tensor4<float> concat_channels(const Tensor4<float>&, const Tensor4<float>&);
template Tensor4<double> concat_channels(const Tensor4<double>&, const Tensor4<double>&);
template std::pair<Tensor4<float>, Tensor4<float>> split_channels(const Tensor4<float>&, std::size_t);
template std::pair<Tensor4<double>, Tensor4<double>> split_channels(const Tensor4<double>&, std::size_t);
template bool all_finite(std::span<const float>);
template bool all_finite(std::span<const double>);

}  // namespace dctse::nn
