#pragma once

// Synthetic test material: voiced "syllables" of harmonic tones with slowly
// gliding pitch and formant-like spectral tilt, separated by short pauses.

#include <cstdint>
#include <filesystem>
#include <string>

#include "dctse/spectral.hpp"

namespace dctse::testing {

struct SpeechLikeSpec {
  double seconds = 1.0;
  double sample_rate = 16000.0;
  std::uint64_t seed = 0;
  double lead_silence = 0.15;  // seconds of silence before the first syllable
  double peak = 0.5;
};

Waveform speech_like(const SpeechLikeSpec& spec);

Waveform white_noise(std::size_t n, std::uint64_t seed, double sample_rate = 16000.0);
Waveform random_signal(std::size_t n, std::uint64_t seed, double sample_rate = 16000.0);

// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace dctse::testing
