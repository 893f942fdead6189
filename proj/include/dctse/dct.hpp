#pragma once

// Orthonormal DCT-II / DCT-III and the identities that tie the DCT to the
// DFT of an even-symmetric extension.
//
// Basis rows: c_k(n) = sqrt(2/N) * beta(k) * cos(pi * k * (2n + 1) / (2N)),
// beta(0) = 1/sqrt(2), beta(k) = 1 otherwise. The forward transform is
// X = W x and the inverse is x = W^T X.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dctse/fft.hpp"

namespace dctse {

using RealVector = std::vector<double>;

// beta(k) scaling of the orthonormal DCT.
double dct_beta(std::size_t k);

class DctPlan {
 public:
  explicit DctPlan(std::size_t n);

  std::size_t size() const { return n_; }

  // Row-major N x N basis; row k is c_k.
  std::span<const double> basis() const { return basis_; }
  double basis_at(std::size_t k, std::size_t n) const { return basis_[k * n_ + n]; }
  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(basis_).subspan(k * n_, n_);
  }

  // True when the O(N log N) route is used by dct_forward/dct_inverse.
  bool uses_fast_path() const { return fast_ != nullptr; }

  // Explicit routes, exposed so both can be checked against each other.
  void forward_matrix(std::span<const double> x, std::span<double> out) const;
  void inverse_matrix(std::span<const double> coeffs, std::span<double> out) const;
  void forward_fast(std::span<const double> x, std::span<double> out) const;
  void inverse_fast(std::span<const double> coeffs, std::span<double> out) const;

  // Dispatches to the fast route for large power-of-two sizes.
  void forward(std::span<const double> x, std::span<double> out) const;
  void inverse(std::span<const double> coeffs, std::span<double> out) const;

  // Sizes above this (and a power of two) get the FFT route by default.
  static constexpr std::size_t kFastThreshold = 64;

 private:
  struct FastRoute {
    FftPlan fft;
    std::vector<Complex> rotation;  // beta(k)/sqrt(2N) * e^{-j pi k / (2N)}
    explicit FastRoute(std::size_t n2) : fft(n2) {}
  };

  std::size_t n_;
  std::vector<double> basis_;
  std::shared_ptr<const FastRoute> fast_;
};

DctPlan build_dct_plan(std::size_t n);

// Process-wide plan cache; plans are immutable so sharing is safe.
std::shared_ptr<const DctPlan> cached_dct_plan(std::size_t n);

RealVector dct_forward(const DctPlan& plan, std::span<const double> x);
RealVector dct_inverse(const DctPlan& plan, std::span<const double> coeffs);

// x_es of length 2N: x followed by x reversed.
RealVector even_symmetric_extend(std::span<const double> x);

// x_e(n) = (x(n) + x((-n) mod N)) / 2 for real x.
RealVector conjugate_symmetric_part(std::span<const double> x);

// max_k |X_es(k) - sqrt(2N)/beta(k) * e^{+j pi k/(2N)} * X_c(k)| over
// k < N, where X_es is a direct O(N^2) DFT of the even extension and X_c
// comes from the basis-matrix route. When tol > 0 an error above tol throws.
double verify_dft_dct_relation(std::span<const double> x, double tol = 0.0);

// Direct O(N^2) DFT, used as an oracle independent of FftPlan.
std::vector<Complex> naive_dft(std::span<const double> x);

}  // namespace dctse
