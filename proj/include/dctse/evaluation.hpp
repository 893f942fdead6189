#pragma once

// Objective metrics, colored-noise generation and the Wiener baseline used
// for the sequential multi-noise experiment.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dctse/spectral.hpp"

namespace dctse {

inline constexpr double kSiSdrCapDb = 60.0;
inline constexpr double kSegSnrMinDb = -10.0;
inline constexpr double kSegSnrMaxDb = 35.0;

double si_sdr(std::span<const double> reference, std::span<const double> estimate);

// Per-segment SNR clamped to [-10, 35] dB, averaged over segments whose
// reference energy is within 40 dB of the loudest segment.
double segmental_snr(std::span<const double> reference, std::span<const double> estimate,
                     std::size_t segment_len = 256);

struct SegmentMetric {
  std::string label;
  double value = 0.0;
};

struct MetricReport {
  double si_sdr_db = 0.0;
  double seg_snr_db = 0.0;
  std::vector<SegmentMetric> segments;

  nlohmann::json to_json() const;
};

MetricReport evaluate(std::span<const double> reference, std::span<const double> estimate,
                      std::size_t segment_len = 256);

enum class NoiseColor { white, pink, blue, violet };

std::string to_string(NoiseColor c);
NoiseColor parse_noise_color(const std::string& name);
// PSD slope in dB per octave: 0, -3, +3, +6.
double target_slope_db_per_octave(NoiseColor c);

struct NoiseSpec {
  NoiseColor color = NoiseColor::white;
  std::size_t length = 16000;
  std::uint64_t seed = 0;
  double sample_rate = 16000.0;
};

inline constexpr std::size_t kMinNoiseLength = 4096;

// Seeded Gaussian noise shaped in the frequency domain, unit RMS.
Waveform colored_noise(const NoiseSpec& spec);

// Least-squares slope (dB/octave) of a Welch-averaged periodogram over
// [f_lo, f_hi].
double estimate_psd_slope(const Waveform& x, double f_lo = 100.0, double f_hi = 6000.0,
                          std::size_t segment = 1024);

struct WienerParams {
  std::size_t noise_frames = 6;
  double smoothing = 0.98;  // decision-directed alpha
  double gain_floor = 0.05;
};

// Default framing for the baseline (the DCT path keeps its own config).
FrameConfig wiener_frame_config();

// Decision-directed Wiener filter on the complex STFT, noise PSD taken from
// the first noise_frames frames.
Waveform wiener_enhance(const Waveform& noisy, const FrameConfig& cfg = wiener_frame_config(),
                        const WienerParams& params = {});

using Enhancer = std::function<Waveform(const Waveform&)>;

struct MultiNoiseReport {
  std::array<NoiseColor, 4> order{NoiseColor::blue, NoiseColor::pink, NoiseColor::violet, NoiseColor::white};
  std::array<std::size_t, 5> boundaries{};  // sample indices of the noise switches
  Waveform noisy;
  MetricReport unprocessed;
  MetricReport model;
  MetricReport wiener;

  nlohmann::json to_json() const;
};

// Segment boundaries used by multi_noise_experiment for a given length.
std::array<std::size_t, 5> quarter_boundaries(std::size_t length);

// Adds blue, pink, violet and white noise to consecutive quarters of clean
// at snr_db each, enhances with model (when set) and with the Wiener
// baseline, and reports per-quarter segmental SNR.
MultiNoiseReport multi_noise_experiment(const Waveform& clean, const Enhancer& model, std::uint64_t seed,
                                        double snr_db = 10.0, const WienerParams& wiener = {});

}  // namespace dctse
