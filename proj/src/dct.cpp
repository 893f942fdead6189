#include "dctse/dct.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "dctse/errors.hpp"

namespace dctse {

double dct_beta(std::size_t k) { return k == 0 ? 1.0 / std::numbers::sqrt2 : 1.0; }

DctPlan::DctPlan(std::size_t n) : n_(n) {
  if (n == 0) throw InvalidArgument("build_dct_plan: N must be >= 1");
  basis_.resize(n * n);
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  const double two_n = 2.0 * static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double bk = scale * dct_beta(k);
    for (std::size_t i = 0; i < n; ++i) {
      // Reduce k(2i+1) mod 4N so the cosine argument stays in [0, 2 pi).
      const std::size_t m = (k * (2 * i + 1)) % (4 * n);
      basis_[k * n + i] = bk * std::cos(std::numbers::pi * static_cast<double>(m) / two_n);
    }
  }

  if (n > kFastThreshold && is_power_of_two(n)) {
    auto route = std::make_shared<FastRoute>(2 * n);
    route->rotation.resize(n);
    const double norm = 1.0 / std::sqrt(two_n);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = -std::numbers::pi * static_cast<double>(k) / two_n;
      route->rotation[k] = dct_beta(k) * norm * Complex{std::cos(a), std::sin(a)};
    }
    fast_ = std::move(route);
  }
}

namespace {

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": length " << got << " does not match plan size " << want;
    throw InvalidArgument(os.str());
  }
}

}  // namespace

void DctPlan::forward_matrix(std::span<const double> x, std::span<double> out) const {
  check_length(x.size(), n_, "dct_forward");
  check_length(out.size(), n_, "dct_forward");
  for (std::size_t k = 0; k < n_; ++k) {
    const double* row = &basis_[k * n_];
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) acc += row[i] * x[i];
    out[k] = acc;
  }
}

void DctPlan::inverse_matrix(std::span<const double> coeffs, std::span<double> out) const {
  check_length(coeffs.size(), n_, "dct_inverse");
  check_length(out.size(), n_, "dct_inverse");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < n_; ++k) {
    const double* row = &basis_[k * n_];
    const double c = coeffs[k];
    for (std::size_t i = 0; i < n_; ++i) out[i] += row[i] * c;
  }
}

// X_c(k) = beta(k)/sqrt(2N) * Re(e^{-j pi k/(2N)} X_es(k)), where X_es is the
// 2N-point DFT of the even-symmetric extension.
void DctPlan::forward_fast(std::span<const double> x, std::span<double> out) const {
  check_length(x.size(), n_, "dct_forward");
  check_length(out.size(), n_, "dct_forward");
  if (!fast_) throw InvalidState("DctPlan: no fast route for this size");
  std::vector<Complex> buf(2 * n_);
  for (std::size_t i = 0; i < n_; ++i) {
    buf[i] = x[i];
    buf[2 * n_ - 1 - i] = x[i];
  }
  fast_->fft.forward(buf);
  for (std::size_t k = 0; k < n_; ++k) out[k] = (fast_->rotation[k] * buf[k]).real();
}

// Rebuilds the Hermitian 2N-point spectrum of x_es from X_c, inverts it and
// keeps the first N samples.
void DctPlan::inverse_fast(std::span<const double> coeffs, std::span<double> out) const {
  check_length(coeffs.size(), n_, "dct_inverse");
  check_length(out.size(), n_, "dct_inverse");
  if (!fast_) throw InvalidState("DctPlan: no fast route for this size");
  std::vector<Complex> buf(2 * n_);
  for (std::size_t k = 0; k < n_; ++k) {
    // X_es(k) = X_c(k) / rotation(k)  ==  X_c(k) * conj(rotation) / |rotation|^2
    const Complex r = fast_->rotation[k];
    buf[k] = coeffs[k] * std::conj(r) / std::norm(r);
  }
  buf[n_] = 0.0;
  for (std::size_t k = 1; k < n_; ++k) buf[2 * n_ - k] = std::conj(buf[k]);
  fast_->fft.inverse(buf);
  for (std::size_t i = 0; i < n_; ++i) out[i] = buf[i].real();
}

void DctPlan::forward(std::span<const double> x, std::span<double> out) const {
  if (fast_)
    forward_fast(x, out);
  else
    forward_matrix(x, out);
}

void DctPlan::inverse(std::span<const double> coeffs, std::span<double> out) const {
  if (fast_)
    inverse_fast(coeffs, out);
  else
    inverse_matrix(coeffs, out);
}

DctPlan build_dct_plan(std::size_t n) { return DctPlan(n); }

std::shared_ptr<const DctPlan> cached_dct_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const DctPlan>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto plan = std::make_shared<const DctPlan>(n);
  cache.emplace(n, plan);
  return plan;
}

RealVector dct_forward(const DctPlan& plan, std::span<const double> x) {
  RealVector out(plan.size());
  plan.forward(x, out);
  return out;
}

RealVector dct_inverse(const DctPlan& plan, std::span<const double> coeffs) {
  RealVector out(plan.size());
  plan.inverse(coeffs, out);
  return out;
}

RealVector even_symmetric_extend(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("even_symmetric_extend: empty input");
  const std::size_t n = x.size();
  RealVector out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i];
    out[2 * n - 1 - i] = x[i];
  }
  return out;
}

RealVector conjugate_symmetric_part(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("conjugate_symmetric_part: empty input");
  const std::size_t n = x.size();
  RealVector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (x[i] + x[(n - i) % n]);
  return out;
}

std::vector<Complex> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<Complex> table(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    table[m] = {std::cos(a), std::sin(a)};
  }
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * table[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = acc;
  }
  return out;
}

double verify_dft_dct_relation(std::span<const double> x, double tol) {
  if (x.empty()) throw InvalidArgument("verify_dft_dct_relation: empty input");
  const std::size_t n = x.size();
  const DctPlan plan(n);
  RealVector xc(n);
  plan.forward_matrix(x, xc);
  const auto xes = naive_dft(even_symmetric_extend(x));

  const double two_n = 2.0 * static_cast<double>(n);
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = std::numbers::pi * static_cast<double>(k) / two_n;
    const Complex predicted = std::sqrt(two_n) / dct_beta(k) * Complex{std::cos(a), std::sin(a)} * xc[k];
    worst = std::max(worst, std::abs(xes[k] - predicted));
  }
  if (tol > 0.0 && worst > tol) {
    std::ostringstream os;
    os << "verify_dft_dct_relation: max error " << worst << " exceeds " << tol;
    throw NumericalError(os.str());
  }
  return worst;
}

}  // namespace dctse
