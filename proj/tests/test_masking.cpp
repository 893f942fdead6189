#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "dctse/errors.hpp"
#include "dctse/evaluation.hpp"
#include "dctse/masking.hpp"
#include "speech_like.hpp"

using namespace dctse;
using Catch::Matchers::WithinAbs;

namespace {

RealSpectrogram grid(std::size_t bins, std::size_t frames, std::vector<double> v) {
  RealSpectrogram s;
  s.bins = bins;
  s.frames = frames;
  s.values = std::move(v);
  return s;
}

}  // namespace

TEST_CASE("oracle mask basic cases", "[masking]") {
  const auto y = grid(2, 2, {1.0, -3.0, 0.5, 2.0});
  const auto m_same = oracle_rirm(y, y);
  for (double v : m_same.values) CHECK_THAT(v, WithinAbs(1.0, 1e-7));
  const auto m_zero = oracle_rirm(grid(2, 2, {0, 0, 0, 0}), y);
  for (double v : m_zero.values) CHECK(v == 0.0);
  const auto m_clip = oracle_rirm(grid(1, 1, {3.0}), grid(1, 1, {1.0}));
  CHECK(m_clip.values[0] == 2.0);
  const auto m_neg = oracle_rirm(grid(1, 1, {-3.0}), grid(1, 1, {1.0}));
  CHECK(m_neg.values[0] == -2.0);
  CHECK_THROWS_AS(oracle_rirm(grid(1, 2, {1, 1}), grid(2, 1, {1, 1})), InvalidArgument);
}

TEST_CASE("oracle mask sign and recovery", "[masking][property]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> mag(0.01, 3.0), ratio(-2.0, 2.0);
  std::bernoulli_distribution sign;
  std::vector<double> yv(4000), sv(4000);
  for (std::size_t i = 0; i < yv.size(); ++i) {
    yv[i] = (sign(rng) ? 1 : -1) * mag(rng);
    sv[i] = ratio(rng) * yv[i];
  }
  const auto y = grid(40, 100, yv);
  const auto s = grid(40, 100, sv);
  const auto m = oracle_rirm(s, y);
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double expect = std::clamp(sv[i] / yv[i], -2.0, 2.0);
    REQUIRE(std::signbit(m.values[i]) == std::signbit(expect));
  }
  const auto rec = apply_mask(y, m);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    num += (rec.values[i] - sv[i]) * (rec.values[i] - sv[i]);
    den += sv[i] * sv[i];
  }
  CHECK(std::sqrt(num / den) <= 1e-5);
  for (std::size_t i = 0; i < sv.size(); ++i) {
    // regularized product S Y^2 / (Y^2 + eps), exact up to rounding
    const double y2 = yv[i] * yv[i];
    REQUIRE_THAT(rec.values[i], WithinAbs(sv[i] * y2 / (y2 + 1e-8), 1e-14));
    // far above sqrt(eps) the cell itself is recovered to 1e-6
    if (std::abs(yv[i]) >= 0.1) REQUIRE_THAT(rec.values[i], WithinAbs(sv[i], 1e-6 * std::abs(sv[i])));
  }
}

TEST_CASE("scaled tanh values", "[masking]") {
  CHECK(scaled_tanh(0.0, 2.0, 0.5) == 0.0);
  // 2 (1 - e^-0.5) / (1 + e^-0.5)
  CHECK_THAT(scaled_tanh(1.0, 2.0, 0.5), WithinAbs(0.48983732480741826, 1e-15));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(scaled_tanh(inf, 2.0, 0.5) == 2.0);
  CHECK(scaled_tanh(-inf, 2.0, 0.5) == -2.0);
  CHECK(scaled_tanh(1e300, 2.0, 0.5) < 2.0);
  CHECK(scaled_tanh(-1e300, 2.0, 0.5) > -2.0);
  CHECK(scaled_tanh(3e38f, 2.0f, 0.5f) < 2.0f);
  CHECK_THROWS_AS(scaled_tanh(std::vector<double>{1.0}, 0.0, 0.5), InvalidArgument);
  CHECK_THROWS_AS(scaled_tanh(std::vector<double>{1.0}, 2.0, -1.0), InvalidArgument);
}

TEST_CASE("scaled tanh is odd, monotone and bounded", "[masking][property]") {
  std::vector<double> z;
  for (int i = -4000; i <= 4000; ++i) z.push_back(i * 0.01);
  const auto y = scaled_tanh(z, 2.0, 0.5);
  for (std::size_t i = 0; i < z.size(); ++i) {
    REQUIRE(std::abs(y[i]) < 2.0);
    REQUIRE(scaled_tanh(-z[i], 2.0, 0.5) == -y[i]);
    if (i) REQUIRE(y[i] >= y[i - 1]);
  }
  // strict growth where tanh has not saturated in double precision
  for (std::size_t i = 1; i < z.size(); ++i)
    if (std::abs(z[i]) < 30.0) REQUIRE(y[i] > y[i - 1]);
}

TEST_CASE("apply mask", "[masking]") {
  const auto y = grid(2, 2, {1.0, -3.0, 0.5, 2.0});
  MaskSpectrogram ones{2, 2, std::vector<double>(4, 1.0)};
  CHECK(apply_mask(y, ones).values == y.values);
  MaskSpectrogram zeros{2, 2, std::vector<double>(4, 0.0)};
  for (double v : apply_mask(y, zeros).values) CHECK(v == 0.0);
  MaskSpectrogram wrong{4, 1, std::vector<double>(4, 1.0)};
  CHECK_THROWS_AS(apply_mask(y, wrong), InvalidArgument);
}

TEST_CASE("oracle enhancement beats the mixture", "[masking]") {
  const auto clean = testing::speech_like({1.0, 16000.0, 3});
  auto noise = testing::white_noise(clean.size(), 8);
  double pc = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    pc += clean.samples[i] * clean.samples[i];
    pn += noise.samples[i] * noise.samples[i];
  }
  Waveform noisy = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) noisy.samples[i] += std::sqrt(pc / pn) * noise.samples[i];
  const auto out = oracle_enhance(clean, noisy);
  CHECK(out.size() == clean.size());
  CHECK(si_sdr(clean.samples, out.samples) > si_sdr(clean.samples, noisy.samples) + 10.0);

  // same result as chaining the stages by hand
  const SpectralPipeline pipe{FrameConfig{}};
  const auto y = pipe.analyze(noisy);
  const auto chained = pipe.synthesize(apply_mask(y, oracle_rirm(pipe.analyze(clean), y)));
  CHECK(interior_relative_error(chained.samples, out.samples, 0) <= 1e-12);

  // identical inputs stay close to the plain resynthesis
  const auto same = oracle_enhance(clean, clean);
  const auto ident = pipe.synthesize(pipe.analyze(clean));
  CHECK(interior_relative_error(ident.samples, same.samples, 0) <= 1e-3);

  Waveform short_noisy = noisy;
  short_noisy.samples.resize(noisy.size() - 10);
  CHECK_THROWS_AS(oracle_enhance(clean, short_noisy), InvalidArgument);
}
