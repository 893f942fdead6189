#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace dctse {

using Complex = std::complex<double>;

// In-place complex FFT of arbitrary length. Powers of two use an iterative
// radix-2 kernel; other lengths go through Bluestein's chirp-z algorithm.
// Plans are immutable after construction and safe to share between threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;

  std::size_t size() const { return n_; }

  // Unnormalized forward transform: X(k) = sum_n x(n) e^{-j 2 pi k n / N}.
  void forward(std::span<Complex> data) const;
  // Inverse transform including the 1/N factor.
  void inverse(std::span<Complex> data) const;

 private:
  void radix2(std::span<Complex> data, bool inverse) const;
  void bluestein(std::span<Complex> data, bool inverse) const;

  std::size_t n_;
  bool pow2_;
  std::vector<std::size_t> bitrev_;
  std::vector<Complex> twiddle_;  // e^{-j 2 pi k / N}, k < N/2

  struct Chirp;
  std::unique_ptr<Chirp> chirp_;
};

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// Convenience wrappers that allocate.
std::vector<Complex> fft(std::span<const Complex> x);
std::vector<Complex> fft_real(std::span<const double> x);
std::vector<Complex> ifft(std::span<const Complex> x);

}  // namespace dctse
