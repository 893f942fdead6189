#include "dctse/masking.hpp"

#include <algorithm>

#include "dctse/errors.hpp"

namespace dctse {

MaskSpectrogram oracle_rirm(const RealSpectrogram& clean, const RealSpectrogram& noisy, double eps,
                            MaskParams params) {
  if (!clean.same_shape(noisy)) throw InvalidArgument("oracle_rirm: clean and noisy shapes differ");
  if (!(eps > 0.0)) throw InvalidArgument("oracle_rirm: eps must be positive");
  if (!(params.bound > 0.0)) throw InvalidArgument("oracle_rirm: bound must be positive");
  MaskSpectrogram m;
  m.bins = noisy.bins;
  m.frames = noisy.frames;
  m.bound = params.bound;
  m.steepness = params.steepness;
  m.values.resize(noisy.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const double y = noisy.values[i];
    const double ratio = clean.values[i] * y / (y * y + eps);
    m.values[i] = std::clamp(ratio, -params.bound, params.bound);
  }
  return m;
}

std::vector<double> scaled_tanh(std::span<const double> z, double bound, double steepness) {
  if (!(bound > 0.0) || !(steepness > 0.0))
    throw InvalidArgument("scaled_tanh: bound and steepness must be positive");
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = scaled_tanh(z[i], bound, steepness);
  return out;
}

RealSpectrogram apply_mask(const RealSpectrogram& noisy, const MaskSpectrogram& mask) {
  if (noisy.bins != mask.bins || noisy.frames != mask.frames)
    throw InvalidArgument("apply_mask: mask shape does not match spectrogram");
  RealSpectrogram out = noisy;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= mask.values[i];
  return out;
}

}  // namespace dctse

namespace dctse {

Waveform oracle_enhance(const Waveform& clean, const Waveform& noisy, const FrameConfig& cfg, MaskParams params) {
  if (clean.size() != noisy.size()) throw InvalidArgument("oracle_enhance: clean and noisy lengths differ");
  if (clean.sample_rate != noisy.sample_rate) throw InvalidArgument("oracle_enhance: sample rates differ");
  const SpectralPipeline pipe(cfg);
  const auto y = pipe.analyze(noisy);
  const auto mask = oracle_rirm(pipe.analyze(clean), y, kOracleEps, params);
  return pipe.synthesize(apply_mask(y, mask));
}

}  // namespace dctse
