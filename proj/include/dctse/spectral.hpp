#pragma once

// Framing, per-frame DCT analysis and weighted overlap-add synthesis.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dctse/dct.hpp"

namespace dctse {

enum class WindowKind { hamming_periodic };
enum class EdgePadding { reflect, none };

struct FrameConfig {
  std::size_t window_len = 1024;
  std::size_t hop = 64;
  WindowKind window = WindowKind::hamming_periodic;
  double sample_rate = 16000.0;
  // reflect: pad window_len - hop samples on both sides before framing.
  EdgePadding padding = EdgePadding::reflect;

  void validate() const;
  std::size_t pad_amount() const {
    return padding == EdgePadding::reflect ? window_len - hop : 0;
  }
};

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  std::size_t size() const { return samples.size(); }
};

// F x T real spectrogram stored frame-major: values[t * bins + f].
struct RealSpectrogram {
  FrameConfig config;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;
  std::size_t original_length = 0;  // samples before padding
  std::size_t padded_length = 0;

  double& at(std::size_t f, std::size_t t) { return values[t * bins + f]; }
  double at(std::size_t f, std::size_t t) const { return values[t * bins + f]; }
  std::span<double> frame(std::size_t t) { return std::span<double>(values).subspan(t * bins, bins); }
  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values).subspan(t * bins, bins);
  }
  bool same_shape(const RealSpectrogram& other) const {
    return bins == other.bins && frames == other.frames;
  }
};

// Periodic Hamming: 0.54 - 0.46 cos(2 pi n / N).
std::vector<double> hamming_window(std::size_t n);

std::size_t frame_count(std::size_t padded_length, const FrameConfig& cfg);

// Applies the configured edge padding. Reflect mode mirrors about the first
// and last sample (the edge sample itself is not repeated).
std::vector<double> pad_signal(std::span<const double> x, const FrameConfig& cfg);

// Window-squared overlap sum, floored at kNormalizerFloor.
std::vector<double> wola_normalizer(std::size_t padded_length, std::size_t frames,
                                    std::span<const double> window, std::size_t hop);

inline constexpr double kNormalizerFloor = 1e-8;

// Holds the window, the DCT plan and the framing rules for one FrameConfig.
class SpectralPipeline {
 public:
  explicit SpectralPipeline(FrameConfig cfg);

  const FrameConfig& config() const { return cfg_; }
  std::span<const double> window() const { return window_; }
  const DctPlan& plan() const { return *plan_; }

  RealSpectrogram analyze(const Waveform& x) const;
  Waveform synthesize(const RealSpectrogram& s) const;

  // Adjoint of synthesize: maps dL/d(output samples) to dL/d(coefficients).
  RealSpectrogram synthesize_adjoint(std::span<const double> grad, const RealSpectrogram& like) const;

 private:
  FrameConfig cfg_;
  std::vector<double> window_;
  std::shared_ptr<const DctPlan> plan_;
};

RealSpectrogram analyze(const Waveform& x, const FrameConfig& cfg);
Waveform synthesize(const RealSpectrogram& s);

// Relative L2 error over [edge, size - edge).
double interior_relative_error(std::span<const double> reference, std::span<const double> estimate,
                               std::size_t edge);

}  // namespace dctse
