#include "dctse/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "dctse/errors.hpp"

namespace dctse {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct FftPlan::Chirp {
  std::unique_ptr<FftPlan> inner;  // power-of-two plan of length >= 2N-1
  std::vector<Complex> w;          // e^{-j pi n^2 / N}
  std::vector<Complex> kernel_fft; // FFT of conj(w) wrapped to the inner length
};

FftPlan::FftPlan(std::size_t n) : n_(n), pow2_(is_power_of_two(n)) {
  if (n == 0) throw InvalidArgument("FftPlan: length must be positive");
  if (pow2_) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    bitrev_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    return;
  }

  chirp_ = std::make_unique<Chirp>();
  const std::size_t m = next_power_of_two(2 * n - 1);
  chirp_->inner = std::make_unique<FftPlan>(m);
  chirp_->w.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2N keeps the angle argument small for long transforms.
    const std::size_t k2 = (k * k) % (2 * n);
    const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_->w[k] = {std::cos(a), std::sin(a)};
  }
  chirp_->kernel_fft.assign(m, Complex{});
  chirp_->kernel_fft[0] = std::conj(chirp_->w[0]);
  for (std::size_t k = 1; k < n; ++k) {
    chirp_->kernel_fft[k] = std::conj(chirp_->w[k]);
    chirp_->kernel_fft[m - k] = std::conj(chirp_->w[k]);
  }
  chirp_->inner->forward(chirp_->kernel_fft);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

void FftPlan::forward(std::span<Complex> data) const {
  if (data.size() != n_) throw InvalidArgument("FftPlan::forward: length mismatch");
  if (pow2_)
    radix2(data, false);
  else
    bluestein(data, false);
}

void FftPlan::inverse(std::span<Complex> data) const {
  if (data.size() != n_) throw InvalidArgument("FftPlan::inverse: length mismatch");
  if (pow2_)
    radix2(data, true);
  else
    bluestein(data, true);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : data) v *= scale;
}

void FftPlan::radix2(std::span<Complex> data, bool inverse) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i)
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        Complex w = twiddle_[j * step];
        if (inverse) w = std::conj(w);
        const Complex u = data[start + j];
        const Complex v = data[start + j + half] * w;
        data[start + j] = u + v;
        data[start + j + half] = u - v;
      }
    }
  }
}

void FftPlan::bluestein(std::span<Complex> data, bool inverse) const {
  const auto& c = *chirp_;
  const std::size_t m = c.inner->size();
  std::vector<Complex> a(m, Complex{});
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex x = inverse ? std::conj(data[k]) : data[k];
    a[k] = x * c.w[k];
  }
  c.inner->forward(a);
  for (std::size_t k = 0; k < m; ++k) a[k] *= c.kernel_fft[k];
  c.inner->inverse(a);
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex y = a[k] * c.w[k];
    data[k] = inverse ? std::conj(y) : y;
  }
}

std::vector<Complex> fft(std::span<const Complex> x) {
  std::vector<Complex> out(x.begin(), x.end());
  FftPlan(out.size()).forward(out);
  return out;
}

std::vector<Complex> fft_real(std::span<const double> x) {
  std::vector<Complex> out(x.begin(), x.end());
  FftPlan(out.size()).forward(out);
  return out;
}

std::vector<Complex> ifft(std::span<const Complex> x) {
  std::vector<Complex> out(x.begin(), x.end());
  FftPlan(out.size()).inverse(out);
  return out;
}

}  // namespace dctse
