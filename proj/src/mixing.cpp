#include "dctse/mixing.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "dctse/errors.hpp"

namespace dctse {

double signal_power(const Waveform& x) {
  if (x.samples.empty()) return 0.0;
  double e = 0.0;
  for (double s : x.samples) e += s * s;
  return e / static_cast<double>(x.samples.size());
}

MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) throw InvalidArgument("mix_at_snr: SNR must be finite");
  if (clean.sample_rate != noise.sample_rate) {
    std::ostringstream os;
    os << "mix_at_snr: sample rates differ (" << clean.sample_rate << " vs " << noise.sample_rate << ")";
    throw InvalidArgument(os.str());
  }
  if (clean.samples.empty() || noise.samples.empty()) throw InvalidArgument("mix_at_snr: empty input");

  const std::size_t len = clean.samples.size();
  const std::size_t nlen = noise.samples.size();
  std::mt19937_64 rng(seed);
  std::vector<double> fitted(len);
  if (nlen >= len) {
    std::uniform_int_distribution<std::size_t> pick(0, nlen - len);
    const std::size_t offset = pick(rng);
    for (std::size_t i = 0; i < len; ++i) fitted[i] = noise.samples[offset + i];
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, nlen - 1);
    const std::size_t offset = pick(rng);
    for (std::size_t i = 0; i < len; ++i) fitted[i] = noise.samples[(offset + i) % nlen];
  }

  const double p_clean = signal_power(clean);
  double p_noise = 0.0;
  for (double s : fitted) p_noise += s * s;
  p_noise /= static_cast<double>(len);
  if (p_clean == 0.0) throw InvalidArgument("mix_at_snr: clean signal is silent");
  if (p_noise == 0.0) throw InvalidArgument("mix_at_snr: noise is silent");

  MixResult r;
  r.gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  r.scaled_noise.sample_rate = clean.sample_rate;
  r.scaled_noise.samples.resize(len);
  r.noisy.sample_rate = clean.sample_rate;
  r.noisy.samples.resize(len);
  // Scaled noise is snapped to a 2^-40 grid: for clean signals on a coarser
  // dyadic grid (anything decoded from PCM) noisy - noise == clean exactly.
  const double grid = std::ldexp(1.0, -40);
  for (std::size_t i = 0; i < len; ++i) {
    const double n = std::nearbyint(fitted[i] * r.gain / grid) * grid;
    r.scaled_noise.samples[i] = n;
    r.noisy.samples[i] = clean.samples[i] + n;
  }
  return r;
}

}  // namespace dctse
