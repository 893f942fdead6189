#pragma once

// Real-valued ratio mask (rIRM) on DCT spectrograms.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dctse/spectral.hpp"

namespace dctse {

struct MaskParams {
  double bound = 2.0;      // K: mask values live in [-K, K]
  double steepness = 0.5;  // C: slope of the scaled tanh
};

struct MaskSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;  // frame-major, same layout as RealSpectrogram
  double bound = 2.0;
  double steepness = 0.5;

  double at(std::size_t f, std::size_t t) const { return values[t * bins + f]; }
};

inline constexpr double kOracleEps = 1e-8;

// M = S*Y / (Y^2 + eps), clamped to [-K, K].
MaskSpectrogram oracle_rirm(const RealSpectrogram& clean, const RealSpectrogram& noisy,
                            double eps = kOracleEps, MaskParams params = {});

// K * (1 - e^{-C z}) / (1 + e^{-C z}) == K * tanh(C z / 2).
// Finite inputs stay strictly inside (-K, K); +-inf map to +-K.
template <typename T>
T scaled_tanh(T z, T bound, T steepness) {
  if (std::isinf(z)) return z > 0 ? bound : -bound;
  T y = bound * std::tanh(steepness * z / T(2));
  const T inner = std::nextafter(bound, T(0));
  if (y > inner) y = inner;
  if (y < -inner) y = -inner;
  return y;
}

std::vector<double> scaled_tanh(std::span<const double> z, double bound, double steepness);

RealSpectrogram apply_mask(const RealSpectrogram& noisy, const MaskSpectrogram& mask);

// analyze both, oracle mask, apply to the noisy spectrogram, synthesize.
Waveform oracle_enhance(const Waveform& clean, const Waveform& noisy, const FrameConfig& cfg = {},
                        MaskParams params = {});

}  // namespace dctse
