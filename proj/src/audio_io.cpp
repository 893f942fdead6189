#include "dctse/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dctse {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

[[noreturn]] void malformed(const std::string& msg) {
  throw WavError(WavError::Kind::malformed_header, "malformed WAV header: " + msg);
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes, WavDescriptor* desc) {
  if (bytes.size() < 12) malformed("file shorter than the RIFF preamble");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    malformed("missing RIFF/WAVE tags");

  WavDescriptor d;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) malformed("truncated fmt chunk");
      std::uint16_t format = le16(chunk + 8);
      d.channels = le16(chunk + 10);
      d.sample_rate = le32(chunk + 12);
      d.bits_per_sample = le16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) malformed("truncated WAVE_FORMAT_EXTENSIBLE fmt chunk");
        format = le16(chunk + 8 + 24);
      }
      if (format == kFormatFloat)
        throw WavError(WavError::Kind::unsupported_codec, "unsupported WAV codec: IEEE float (PCM16 only)");
      if (format != kFormatPcm || d.bits_per_sample != 16) {
        std::ostringstream os;
        os << "unsupported WAV codec: format " << format << ", " << d.bits_per_sample << "-bit (PCM16 only)";
        throw WavError(WavError::Kind::unsupported_codec, os.str());
      }
      if (d.channels == 0) malformed("zero channels");
      if (d.sample_rate == 0) malformed("zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + size > bytes.size()) malformed("data chunk extends past end of file");
      data = bytes.data() + body;
      data_size = size;
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) malformed("no fmt chunk");
  if (!have_data) malformed("no data chunk");

  const std::size_t frame_bytes = 2u * d.channels;
  d.frames = data_size / frame_bytes;
  if (d.frames == 0) throw WavError(WavError::Kind::empty_data, "WAV data chunk is empty");

  Waveform out;
  out.sample_rate = d.sample_rate;
  out.samples.resize(d.frames);
  for (std::size_t i = 0; i < d.frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d.channels; ++c) {
      const auto v = static_cast<std::int16_t>(le16(data + i * frame_bytes + 2 * c));
      acc += static_cast<double>(v) / 32768.0;
    }
    out.samples[i] = acc / d.channels;
  }
  if (desc) *desc = d;
  return out;
}

std::vector<std::uint8_t> encode_wav(const Waveform& x) {
  const auto rate = static_cast<std::uint32_t>(std::lround(x.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(x.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, 1);
  put32(out, rate);
  put32(out, rate * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (double s : x.samples) {
    const double q = std::nearbyint(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    put16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

Waveform read_wav(const std::filesystem::path& path, WavDescriptor* desc) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavError::Kind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, desc);
  } catch (const WavError& e) {
    throw WavError(e.kind(), path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const Waveform& x) {
  const auto bytes = encode_wav(x);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError(WavError::Kind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WavError(WavError::Kind::io, "short write to " + path.string());
}

namespace {

double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

Waveform resample(const Waveform& x, double target_rate) {
  if (!(target_rate > 0.0)) throw InvalidArgument("resample: target rate must be positive");
  if (!(x.sample_rate > 0.0)) throw InvalidArgument("resample: source rate must be positive");
  if (x.sample_rate == target_rate) return x;

  const auto src = static_cast<long long>(std::llround(x.sample_rate));
  const auto dst = static_cast<long long>(std::llround(target_rate));
  if (static_cast<double>(src) != x.sample_rate || static_cast<double>(dst) != target_rate)
    throw InvalidArgument("resample: rates must be integral Hz");
  const long long g = std::gcd(src, dst);
  const std::size_t up = static_cast<std::size_t>(dst / g);
  const std::size_t down = static_cast<std::size_t>(src / g);

  // Prototype low-pass at the upsampled rate: cutoff at 0.95 of the lower
  // Nyquist, 0.1 * Nyquist transition, Kaiser beta for ~80 dB stopband.
  const double min_rate = static_cast<double>(std::min(src, dst));
  const double fs_up = static_cast<double>(src) * static_cast<double>(up);
  const double cutoff = 0.95 * 0.5 * min_rate / fs_up;      // cycles per upsampled sample
  const double transition = 0.1 * 0.5 * min_rate / fs_up;
  const double atten = 80.0;
  const double beta = 0.1102 * (atten - 8.7);
  std::size_t half_taps_per_phase =
      static_cast<std::size_t>(std::ceil((atten - 8.0) / (2.285 * 2.0 * std::numbers::pi * transition) / 2.0 /
                                         static_cast<double>(up))) + 1;
  const std::size_t half = half_taps_per_phase * up;
  const std::size_t taps = 2 * half + 1;

  std::vector<double> h(taps);
  const double i0b = bessel_i0(beta);
  for (std::size_t i = 0; i < taps; ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(half);
    const double arg = 2.0 * cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = m / static_cast<double>(half);
    const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[i] = 2.0 * cutoff * sinc * win * static_cast<double>(up);
  }

  const std::size_t in_len = x.samples.size();
  const std::size_t out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(in_len) * static_cast<double>(up) / static_cast<double>(down)));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(out_len, 0.0);
  const auto H = static_cast<long long>(half);
  for (std::size_t j = 0; j < out_len; ++j) {
    // Output j sits at upsampled index j*down; input i sits at i*up.
    const long long center = static_cast<long long>(j * down);
    const long long lo_up = center - H;
    const long long hi_up = center + H;
    long long i_lo = lo_up <= 0 ? 0 : (lo_up + static_cast<long long>(up) - 1) / static_cast<long long>(up);
    long long i_hi = std::min<long long>(hi_up / static_cast<long long>(up), static_cast<long long>(in_len) - 1);
    double acc = 0.0;
    for (long long i = i_lo; i <= i_hi; ++i) {
      const long long tap = i * static_cast<long long>(up) - center + H;
      acc += h[static_cast<std::size_t>(tap)] * x.samples[static_cast<std::size_t>(i)];
    }
    out.samples[j] = acc;
  }
  return out;
}

Waveform normalize_amplitude(const Waveform& x) {
  double peak = 0.0;
  for (double s : x.samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) throw InvalidArgument("normalize_amplitude: all-zero input");
  Waveform out = x;
  // (s * 0.5) / peak hits exactly +-0.5 at the peak sample.
  for (auto& s : out.samples) s = (s * 0.5) / peak;
  return out;
}

Waveform load_utterance(const std::filesystem::path& path, double target_rate) {
  return normalize_amplitude(resample(read_wav(path), target_rate));
}

}  // namespace dctse
