#include "dctse/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "dctse/errors.hpp"

namespace dctse {

void FrameConfig::validate() const {
  if (window_len == 0 || hop == 0 || hop > window_len)
    throw InvalidArgument("FrameConfig: require 0 < hop <= window_len");
  if (window_len < 2) throw InvalidArgument("FrameConfig: window_len must be >= 2");
  if (!(sample_rate > 0.0)) throw InvalidArgument("FrameConfig: sample_rate must be positive");
}

std::vector<double> hamming_window(std::size_t n) {
  if (n < 2) throw InvalidArgument("hamming_window: N must be >= 2");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

std::size_t frame_count(std::size_t padded_length, const FrameConfig& cfg) {
  if (padded_length < cfg.window_len) return 0;
  return 1 + (padded_length - cfg.window_len) / cfg.hop;
}

std::vector<double> pad_signal(std::span<const double> x, const FrameConfig& cfg) {
  const std::size_t pad = cfg.pad_amount();
  if (pad == 0) return {x.begin(), x.end()};
  if (x.size() <= pad) {
    std::ostringstream os;
    os << "reflect padding of " << pad << " samples needs an input longer than " << pad
       << " samples (got " << x.size() << ")";
    throw InvalidArgument(os.str());
  }
  const std::size_t n = x.size();
  std::vector<double> out(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) {
    out[pad - 1 - i] = x[i + 1];
    out[pad + n + i] = x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(pad));
  return out;
}

std::vector<double> wola_normalizer(std::size_t padded_length, std::size_t frames,
                                    std::span<const double> window, std::size_t hop) {
  std::vector<double> norm(padded_length, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < window.size() && start + i < padded_length; ++i)
      norm[start + i] += window[i] * window[i];
  }
  for (auto& v : norm) v = std::max(v, kNormalizerFloor);
  return norm;
}

SpectralPipeline::SpectralPipeline(FrameConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  window_ = hamming_window(cfg_.window_len);
  plan_ = cached_dct_plan(cfg_.window_len);
}

RealSpectrogram SpectralPipeline::analyze(const Waveform& x) const {
  if (x.samples.empty()) throw InvalidArgument("analyze: empty waveform");
  if (x.sample_rate != cfg_.sample_rate) {
    std::ostringstream os;
    os << "analyze: waveform rate " << x.sample_rate << " Hz does not match frame config rate "
       << cfg_.sample_rate << " Hz";
    throw InvalidArgument(os.str());
  }
  const auto padded = pad_signal(x.samples, cfg_);
  const std::size_t frames = frame_count(padded.size(), cfg_);
  if (frames == 0) {
    std::ostringstream os;
    os << "analyze: " << padded.size() << " samples after padding is shorter than one window ("
       << cfg_.window_len << ")";
    throw InvalidArgument(os.str());
  }

  RealSpectrogram s;
  s.config = cfg_;
  s.bins = cfg_.window_len;
  s.frames = frames;
  s.values.resize(frames * s.bins);
  s.original_length = x.samples.size();
  s.padded_length = padded.size();

  std::vector<double> buf(s.bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = padded.data() + t * cfg_.hop;
    for (std::size_t i = 0; i < s.bins; ++i) buf[i] = src[i] * window_[i];
    plan_->forward(buf, s.frame(t));
  }
  return s;
}

Waveform SpectralPipeline::synthesize(const RealSpectrogram& s) const {
  if (s.bins != cfg_.window_len || s.values.size() != s.bins * s.frames)
    throw InvalidArgument("synthesize: spectrogram shape does not match the frame config");
  const std::size_t n = s.bins;
  std::vector<double> acc(s.padded_length, 0.0);
  std::vector<double> buf(n);
  for (std::size_t t = 0; t < s.frames; ++t) {
    plan_->inverse(s.frame(t), buf);
    const std::size_t start = t * cfg_.hop;
    for (std::size_t i = 0; i < n && start + i < acc.size(); ++i) acc[start + i] += buf[i] * window_[i];
  }
  const auto norm = wola_normalizer(s.padded_length, s.frames, window_, cfg_.hop);

  const std::size_t pad = (s.padded_length - s.original_length) / 2;
  Waveform out;
  out.sample_rate = cfg_.sample_rate;
  out.samples.resize(s.original_length);
  for (std::size_t i = 0; i < s.original_length; ++i) out.samples[i] = acc[pad + i] / norm[pad + i];
  return out;
}

RealSpectrogram SpectralPipeline::synthesize_adjoint(std::span<const double> grad,
                                                     const RealSpectrogram& like) const {
  if (grad.size() != like.original_length)
    throw InvalidArgument("synthesize_adjoint: gradient length does not match the spectrogram");
  const std::size_t n = like.bins;
  const auto norm = wola_normalizer(like.padded_length, like.frames, window_, cfg_.hop);
  const std::size_t pad = (like.padded_length - like.original_length) / 2;
  std::vector<double> scaled(like.padded_length, 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) scaled[pad + i] = grad[i] / norm[pad + i];

  RealSpectrogram out = like;
  std::vector<double> buf(n, 0.0);
  for (std::size_t t = 0; t < like.frames; ++t) {
    const std::size_t start = t * cfg_.hop;
    for (std::size_t i = 0; i < n; ++i)
      buf[i] = start + i < scaled.size() ? scaled[start + i] * window_[i] : 0.0;
    // The adjoint of x = W^T X is X = W x.
    plan_->forward(buf, out.frame(t));
  }
  return out;
}

RealSpectrogram analyze(const Waveform& x, const FrameConfig& cfg) { return SpectralPipeline(cfg).analyze(x); }

Waveform synthesize(const RealSpectrogram& s) { return SpectralPipeline(s.config).synthesize(s); }

double interior_relative_error(std::span<const double> reference, std::span<const double> estimate,
                               std::size_t edge) {
  if (reference.size() != estimate.size())
    throw InvalidArgument("interior_relative_error: length mismatch");
  if (reference.size() <= 2 * edge) throw InvalidArgument("interior_relative_error: signal shorter than edges");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = edge; i < reference.size() - edge; ++i) {
    const double d = reference[i] - estimate[i];
    num += d * d;
    den += reference[i] * reference[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

}  // namespace dctse
