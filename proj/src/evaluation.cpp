#include "dctse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "dctse/errors.hpp"
#include "dctse/fft.hpp"
#include "dctse/mixing.hpp"

namespace dctse {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": length mismatch (" << a << " vs " << b << ")";
    throw InvalidArgument(os.str());
  }
}

}  // namespace

double si_sdr(std::span<const double> reference, std::span<const double> estimate) {
  require_same_length(reference.size(), estimate.size(), "si_sdr");
  const double ref_energy = dot(reference, reference);
  if (ref_energy == 0.0) throw InvalidArgument("si_sdr: zero reference");
  const double alpha = dot(estimate, reference) / ref_energy;
  double target = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = t - estimate[i];
    target += t * t;
    residual += e * e;
  }
  if (residual == 0.0) return kSiSdrCapDb;
  if (target == 0.0) return -kSiSdrCapDb;
  return std::min(kSiSdrCapDb, 10.0 * std::log10(target / residual));
}

double segmental_snr(std::span<const double> reference, std::span<const double> estimate,
                     std::size_t segment_len) {
  require_same_length(reference.size(), estimate.size(), "segmental_snr");
  if (segment_len < 64) throw InvalidArgument("segmental_snr: segment_len must be >= 64");
  const std::size_t segments = reference.size() / segment_len;
  std::vector<double> energy(segments, 0.0);
  std::vector<double> error(segments, 0.0);
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t i = s * segment_len; i < (s + 1) * segment_len; ++i) {
      const double d = reference[i] - estimate[i];
      energy[s] += reference[i] * reference[i];
      error[s] += d * d;
    }
  }
  const double peak = segments ? *std::max_element(energy.begin(), energy.end()) : 0.0;
  if (peak == 0.0) throw InvalidArgument("segmental_snr: no active segments");
  const double threshold = peak * 1e-4;  // -40 dB
  double sum = 0.0;
  std::size_t active = 0;
  for (std::size_t s = 0; s < segments; ++s) {
    if (energy[s] <= threshold) continue;
    const double snr = error[s] == 0.0 ? kSegSnrMaxDb : 10.0 * std::log10(energy[s] / error[s]);
    sum += std::clamp(snr, kSegSnrMinDb, kSegSnrMaxDb);
    ++active;
  }
  return sum / static_cast<double>(active);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["si_sdr_db"] = si_sdr_db;
  j["seg_snr_db"] = seg_snr_db;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : segments) j["segments"].push_back({{"label", s.label}, {"value", s.value}});
  return j;
}

MetricReport evaluate(std::span<const double> reference, std::span<const double> estimate,
                      std::size_t segment_len) {
  MetricReport r;
  r.si_sdr_db = si_sdr(reference, estimate);
  r.seg_snr_db = segmental_snr(reference, estimate, segment_len);
  return r;
}

std::string to_string(NoiseColor c) {
  switch (c) {
    case NoiseColor::white: return "white";
    case NoiseColor::pink: return "pink";
    case NoiseColor::blue: return "blue";
    case NoiseColor::violet: return "violet";
  }
  return "unknown";
}

NoiseColor parse_noise_color(const std::string& name) {
  for (auto c : {NoiseColor::white, NoiseColor::pink, NoiseColor::blue, NoiseColor::violet})
    if (to_string(c) == name) return c;
  throw InvalidArgument("unknown noise color '" + name + "' (white, pink, blue, violet)");
}

double target_slope_db_per_octave(NoiseColor c) {
  switch (c) {
    case NoiseColor::white: return 0.0;
    case NoiseColor::pink: return -3.0;
    case NoiseColor::blue: return 3.0;
    case NoiseColor::violet: return 6.0;
  }
  return 0.0;
}

namespace {

// Amplitude exponent: |X(f)| ~ f^p, i.e. 6 dB/octave per unit of p.
double amplitude_exponent(NoiseColor c) {
  switch (c) {
    case NoiseColor::white: return 0.0;
    case NoiseColor::pink: return -0.5;
    case NoiseColor::blue: return 0.5;
    case NoiseColor::violet: return 1.0;
  }
  return 0.0;
}

}  // namespace

Waveform colored_noise(const NoiseSpec& spec) {
  if (spec.length < kMinNoiseLength) {
    std::ostringstream os;
    os << "colored_noise: length " << spec.length << " is below the minimum of " << kMinNoiseLength;
    throw InvalidArgument(os.str());
  }
  if (!(spec.sample_rate > 0.0)) throw InvalidArgument("colored_noise: sample rate must be positive");

  const std::size_t m = next_power_of_two(spec.length);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Complex> buf(m);
  for (auto& v : buf) v = gauss(rng);

  const double p = amplitude_exponent(spec.color);
  if (p != 0.0) {
    const FftPlan plan(m);
    plan.forward(buf);
    buf[0] = 0.0;
    for (std::size_t k = 1; k <= m / 2; ++k) {
      const double g = std::pow(static_cast<double>(k), p);
      buf[k] *= g;
      if (k != m - k) buf[m - k] *= g;
    }
    plan.inverse(buf);
  }

  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(spec.length);
  double energy = 0.0;
  for (std::size_t i = 0; i < spec.length; ++i) {
    out.samples[i] = buf[i].real();
    energy += out.samples[i] * out.samples[i];
  }
  const double scale = 1.0 / std::sqrt(energy / static_cast<double>(spec.length));
  for (auto& s : out.samples) s *= scale;
  return out;
}

double estimate_psd_slope(const Waveform& x, double f_lo, double f_hi, std::size_t segment) {
  if (x.samples.size() < segment) throw InvalidArgument("estimate_psd_slope: signal shorter than one segment");
  std::vector<double> window(segment);
  for (std::size_t i = 0; i < segment; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(segment));

  const FftPlan plan(segment);
  const std::size_t hop = segment / 2;
  std::vector<double> psd(segment / 2 + 1, 0.0);
  std::size_t count = 0;
  std::vector<Complex> buf(segment);
  for (std::size_t start = 0; start + segment <= x.samples.size(); start += hop) {
    for (std::size_t i = 0; i < segment; ++i) buf[i] = x.samples[start + i] * window[i];
    plan.forward(buf);
    for (std::size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(buf[k]);
    ++count;
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 1; k < psd.size(); ++k) {
    const double f = static_cast<double>(k) * x.sample_rate / static_cast<double>(segment);
    if (f < f_lo || f > f_hi) continue;
    const double lx = std::log2(f);
    const double ly = 10.0 * std::log10(psd[k] / static_cast<double>(count));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw InvalidArgument("estimate_psd_slope: fewer than two bins in the fit band");
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

FrameConfig wiener_frame_config() {
  FrameConfig cfg;
  cfg.window_len = 512;
  cfg.hop = 128;
  return cfg;
}

Waveform wiener_enhance(const Waveform& noisy, const FrameConfig& cfg, const WienerParams& params) {
  cfg.validate();
  if (noisy.samples.empty()) throw InvalidArgument("wiener_enhance: empty input");
  if (noisy.sample_rate != cfg.sample_rate) throw InvalidArgument("wiener_enhance: sample-rate mismatch");
  if (params.noise_frames == 0) throw InvalidArgument("wiener_enhance: noise_frames must be positive");

  const std::size_t n = cfg.window_len;
  const auto window = hamming_window(n);
  const auto padded = pad_signal(noisy.samples, cfg);
  const std::size_t frames = frame_count(padded.size(), cfg);
  const std::size_t min_frames = std::max<std::size_t>(10, params.noise_frames);
  if (frames < min_frames) {
    std::ostringstream os;
    os << "wiener_enhance: " << frames << " frames is shorter than the required " << min_frames;
    throw InvalidArgument(os.str());
  }

  const FftPlan plan(n);
  std::vector<std::vector<Complex>> spec(frames, std::vector<Complex>(n));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i) spec[t][i] = padded[t * cfg.hop + i] * window[i];
    plan.forward(spec[t]);
  }

  const std::size_t bins = n / 2 + 1;
  std::vector<double> noise_psd(bins, 0.0);
  for (std::size_t t = 0; t < params.noise_frames; ++t)
    for (std::size_t k = 0; k < bins; ++k) noise_psd[k] += std::norm(spec[t][k]);
  double max_psd = 0.0;
  for (auto& v : noise_psd) {
    v /= static_cast<double>(params.noise_frames);
    max_psd = std::max(max_psd, v);
  }
  // Keeps the posterior SNR finite for digitally silent lead-ins.
  const double floor = std::max(max_psd * 1e-12, 1e-30);
  for (auto& v : noise_psd) v = std::max(v, floor);

  std::vector<double> prev_clean_power(bins, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    auto& frame = spec[t];
    for (std::size_t k = 0; k < bins; ++k) {
      const double power = std::norm(frame[k]);
      const double posterior = power / noise_psd[k];
      const double ml = std::max(posterior - 1.0, 0.0);
      const double prior = t == 0 ? ml
                                  : params.smoothing * prev_clean_power[k] / noise_psd[k] +
                                        (1.0 - params.smoothing) * ml;
      const double gain = std::clamp(prior / (1.0 + prior), params.gain_floor, 1.0);
      prev_clean_power[k] = gain * gain * power;
      frame[k] *= gain;
      if (k != 0 && k != n - k) frame[n - k] *= gain;
    }
  }

  std::vector<double> acc(padded.size(), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    plan.inverse(spec[t]);
    for (std::size_t i = 0; i < n; ++i) acc[t * cfg.hop + i] += spec[t][i].real() * window[i];
  }
  const auto norm = wola_normalizer(padded.size(), frames, window, cfg.hop);
  const std::size_t pad = cfg.pad_amount();
  Waveform out;
  out.sample_rate = noisy.sample_rate;
  out.samples.resize(noisy.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = acc[pad + i] / norm[pad + i];
  return out;
}

std::array<std::size_t, 5> quarter_boundaries(std::size_t length) {
  std::array<std::size_t, 5> b{};
  for (std::size_t i = 0; i <= 4; ++i) b[i] = i * length / 4;
  return b;
}

nlohmann::json MultiNoiseReport::to_json() const {
  nlohmann::json j;
  j["order"] = nlohmann::json::array();
  for (auto c : order) j["order"].push_back(to_string(c));
  j["boundaries"] = boundaries;
  j["unprocessed"] = unprocessed.to_json();
  j["model"] = model.segments.empty() ? nlohmann::json(nullptr) : model.to_json();
  j["wiener"] = wiener.to_json();
  return j;
}

namespace {

MetricReport per_quarter_report(const Waveform& clean, const Waveform& estimate, const MultiNoiseReport& r) {
  MetricReport rep = evaluate(clean.samples, estimate.samples);
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t a = r.boundaries[q];
    const std::size_t len = r.boundaries[q + 1] - a;
    const auto ref = std::span<const double>(clean.samples).subspan(a, len);
    const auto est = std::span<const double>(estimate.samples).subspan(a, len);
    rep.segments.push_back({to_string(r.order[q]), segmental_snr(ref, est)});
  }
  return rep;
}

}  // namespace

MultiNoiseReport multi_noise_experiment(const Waveform& clean, const Enhancer& model, std::uint64_t seed,
                                        double snr_db, const WienerParams& wiener) {
  if (clean.samples.size() < static_cast<std::size_t>(4.0 * clean.sample_rate))
    throw InvalidArgument("multi_noise_experiment: clean signal must be at least 4 seconds long");

  MultiNoiseReport r;
  r.boundaries = quarter_boundaries(clean.samples.size());
  r.noisy = clean;
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t a = r.boundaries[q];
    const std::size_t len = r.boundaries[q + 1] - a;
    Waveform part;
    part.sample_rate = clean.sample_rate;
    part.samples.assign(clean.samples.begin() + static_cast<std::ptrdiff_t>(a),
                        clean.samples.begin() + static_cast<std::ptrdiff_t>(a + len));
    NoiseSpec ns;
    ns.color = r.order[q];
    ns.length = len;
    ns.seed = seed * 4 + q;
    ns.sample_rate = clean.sample_rate;
    const auto mixed = mix_at_snr(part, colored_noise(ns), snr_db, seed * 4 + q);
    std::copy(mixed.noisy.samples.begin(), mixed.noisy.samples.end(),
              r.noisy.samples.begin() + static_cast<std::ptrdiff_t>(a));
  }

  r.unprocessed = per_quarter_report(clean, r.noisy, r);
  FrameConfig wcfg = wiener_frame_config();
  wcfg.sample_rate = clean.sample_rate;
  r.wiener = per_quarter_report(clean, wiener_enhance(r.noisy, wcfg, wiener), r);
  if (model) r.model = per_quarter_report(clean, model(r.noisy), r);
  return r;
}

}  // namespace dctse
