#pragma once

#include <cstdint>

#include "dctse/spectral.hpp"

namespace dctse {

struct MixResult {
  Waveform noisy;
  Waveform scaled_noise;
  double gain = 1.0;  // applied to the (cropped/tiled) noise
};

double signal_power(const Waveform& x);

// Fits the noise to the clean length (seeded random crop when longer, tiling
// from a seeded random offset when shorter), then scales it so that
// 10 log10(P_clean / P_noise) == snr_db.
MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db, std::uint64_t seed = 0);

}  // namespace dctse
