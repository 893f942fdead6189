#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "dctse/audio_io.hpp"
#include "dctse/fft.hpp"
#include "speech_like.hpp"

using namespace dctse;
using Catch::Matchers::WithinAbs;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void tag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

std::vector<std::uint8_t> wav_image(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                    std::uint32_t rate, const std::vector<std::int16_t>& interleaved) {
  std::vector<std::uint8_t> b;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  tag(b, "RIFF");
  put32(b, 36 + data_bytes);
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, channels * bits / 8);
  put16(b, bits);
  tag(b, "data");
  put32(b, data_bytes);
  for (auto s : interleaved) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

WavError::Kind decode_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_wav(bytes);
  } catch (const WavError& e) {
    return e.kind();
  }
  FAIL("decode did not throw");
  return WavError::Kind::io;
}

Waveform sine(double freq, double rate, std::size_t n, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / rate);
  return w;
}

// Peak of a Hann-windowed spectrum refined by parabolic interpolation on
// log magnitude.
std::pair<double, double> spectral_peak(const Waveform& x) {
  const std::size_t n = next_power_of_two(x.size()) * 4;
  std::vector<double> buf(n, 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (x.size() - 1));
    buf[i] = x.samples[i] * w;
    wsum += w;
  }
  const auto X = fft_real(buf);
  std::size_t k = 1;
  for (std::size_t i = 1; i < n / 2; ++i)
    if (std::abs(X[i]) > std::abs(X[k])) k = i;
  const double a = std::log(std::abs(X[k - 1])), b = std::log(std::abs(X[k])), c = std::log(std::abs(X[k + 1]));
  const double d = 0.5 * (a - c) / (a - 2 * b + c);
  const double freq = (k + d) * x.sample_rate / n;
  const double amp = 2.0 * std::exp(b - 0.25 * (a - c) * d) / wsum;
  return {freq, amp};
}

}  // namespace

TEST_CASE("write then read stays within one quantization step", "[audio]") {
  testing::TempDir dir("audio");
  auto x = testing::random_signal(5000, 1);
  for (auto& v : x.samples) v *= 0.9;
  write_wav(dir / "a.wav", x);
  WavDescriptor d;
  const auto y = read_wav(dir / "a.wav", &d);
  CHECK(d.sample_rate == 16000);
  CHECK(d.channels == 1);
  CHECK(d.bits_per_sample == 16);
  REQUIRE(y.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(y.samples[i] - x.samples[i]) <= 1.0 / 32768.0);
  // a second write of the decoded samples is bit-identical
  const auto again = decode_wav(encode_wav(y));
  CHECK(again.samples == y.samples);
}

TEST_CASE("stereo with identical channels downmixes to the mono signal", "[audio]") {
  std::vector<std::int16_t> mono{0, 1000, -2000, 32767, -32768, 5};
  std::vector<std::int16_t> stereo;
  for (auto s : mono) {
    stereo.push_back(s);
    stereo.push_back(s);
  }
  const auto m = decode_wav(wav_image(1, 1, 16, 16000, mono));
  const auto s = decode_wav(wav_image(1, 2, 16, 16000, stereo));
  CHECK(m.samples == s.samples);
  CHECK(m.samples[4] == -1.0);
}

TEST_CASE("malformed inputs raise distinct errors", "[audio]") {
  const auto good = wav_image(1, 1, 16, 16000, {1, 2, 3, 4});
  std::vector<std::uint8_t> truncated(good.begin(), good.begin() + 20);
  CHECK(decode_kind(truncated) == WavError::Kind::malformed_header);
  auto not_riff = good;
  not_riff[0] = 'X';
  CHECK(decode_kind(not_riff) == WavError::Kind::malformed_header);
  CHECK(decode_kind(wav_image(3, 1, 16, 16000, {1, 2})) == WavError::Kind::unsupported_codec);
  CHECK(decode_kind(wav_image(1, 1, 16, 16000, {})) == WavError::Kind::empty_data);
  try {
    read_wav("/nonexistent/definitely/missing.wav");
    FAIL("expected an error");
  } catch (const WavError& e) {
    CHECK(e.kind() == WavError::Kind::io);
  }
}

TEST_CASE("resampler", "[audio]") {
  const auto x = sine(1000.0, 48000.0, 48000);
  const auto y = resample(x, 16000.0);
  CHECK(y.sample_rate == 16000.0);
  CHECK(std::abs(static_cast<double>(y.size()) - 16000.0) <= 1.0);
  Waveform mid;
  mid.sample_rate = 16000.0;
  mid.samples.assign(y.samples.begin() + 2000, y.samples.end() - 2000);
  const auto [f, a] = spectral_peak(mid);
  CHECK_THAT(f, WithinAbs(1000.0, 0.1));
  CHECK_THAT(a, WithinAbs(0.5, 0.005));

  const auto up = resample(sine(3000.0, 16000.0, 16000), 44100.0);
  CHECK(std::abs(static_cast<double>(up.size()) - 44100.0) <= 1.0);
  Waveform umid;
  umid.sample_rate = 44100.0;
  umid.samples.assign(up.samples.begin() + 5000, up.samples.end() - 5000);
  const auto [fu, au] = spectral_peak(umid);
  CHECK_THAT(fu, WithinAbs(3000.0, 0.1));
  CHECK_THAT(au, WithinAbs(0.5, 0.005));

  const auto same = resample(x, 48000.0);
  CHECK(same.samples == x.samples);
  CHECK_THROWS_AS(resample(x, 0.0), InvalidArgument);
  CHECK_THROWS_AS(resample(x, -16000.0), InvalidArgument);
}

TEST_CASE("resampler is linear for power-of-two gains", "[audio][property]") {
  const auto x = testing::random_signal(3000, 5, 22050.0);
  const auto y = resample(x, 16000.0);
  for (double a : {2.0, 0.25, -4.0}) {
    Waveform ax = x;
    for (auto& v : ax.samples) v *= a;
    const auto ay = resample(ax, 16000.0);
    REQUIRE(ay.size() == y.size());
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(ay.samples[i] == a * y.samples[i]);
  }
}

TEST_CASE("peak normalization", "[audio]") {
  Waveform x;
  x.samples = {0.1, -1.0, 0.3, 0.0, -0.2};
  const auto y = normalize_amplitude(x);
  double peak = 0.0;
  for (double v : y.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == 0.5);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::signbit(x.samples[i]) == std::signbit(y.samples[i]));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK((x.samples[i] == 0.0) == (y.samples[i] == 0.0));
  Waveform half;
  half.samples = {0.5, -0.25, 0.125};
  CHECK(normalize_amplitude(half).samples == half.samples);
  const auto r = normalize_amplitude(testing::random_signal(777, 3));
  double rp = 0.0;
  for (double v : r.samples) rp = std::max(rp, std::abs(v));
  CHECK(rp == 0.5);
  Waveform zero;
  zero.samples.assign(10, 0.0);
  CHECK_THROWS_AS(normalize_amplitude(zero), InvalidArgument);
}

TEST_CASE("load_utterance resamples and normalizes", "[audio]") {
  testing::TempDir dir("load");
  write_wav(dir / "s.wav", sine(440.0, 8000.0, 8000, 0.9));
  const auto u = load_utterance(dir / "s.wav");
  CHECK(u.sample_rate == 16000.0);
  double peak = 0.0;
  for (double v : u.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == 0.5);
}
