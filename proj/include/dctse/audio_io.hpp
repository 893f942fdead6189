#pragma once

// RIFF/WAVE PCM16 I/O, rational-ratio resampling and peak normalization.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dctse/errors.hpp"
#include "dctse/spectral.hpp"

namespace dctse {

struct WavDescriptor {
  std::uint32_t sample_rate = 0;
  std::uint16_t channels = 0;
  std::uint16_t bits_per_sample = 0;
  std::size_t frames = 0;
};

class WavError : public MalformedInput {
 public:
  enum class Kind { malformed_header, unsupported_codec, empty_data, io };
  WavError(Kind kind, const std::string& msg) : MalformedInput(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Decodes a WAV image held in memory. Multi-channel data is averaged to mono.
Waveform decode_wav(std::span<const std::uint8_t> bytes, WavDescriptor* desc = nullptr);
std::vector<std::uint8_t> encode_wav(const Waveform& x);

Waveform read_wav(const std::filesystem::path& path, WavDescriptor* desc = nullptr);
// Writes mono PCM16; samples are clipped to [-1, 1).
void write_wav(const std::filesystem::path& path, const Waveform& x);

// Polyphase windowed-sinc (Kaiser) resampler. Same-rate input is returned
// unchanged.
Waveform resample(const Waveform& x, double target_rate);

// Scales so that max |x| == 0.5.
Waveform normalize_amplitude(const Waveform& x);

// Reads, resamples to target_rate and peak-normalizes.
Waveform load_utterance(const std::filesystem::path& path, double target_rate = 16000.0);

}  // namespace dctse
