#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dctse/errors.hpp"
#include "dctse/mixing.hpp"
#include "dctse/training.hpp"
#include "speech_like.hpp"

using namespace dctse;
using Catch::Matchers::WithinAbs;

namespace {

nn::UNetConfig toy_config() {
  auto cfg = nn::UNetConfig::default_config();
  cfg.encoder = {{3, 3, 2, 2, 4}, {3, 3, 2, 2, 4}};
  return cfg;
}

// 8-bin frames, hop 2: a 10-sample waveform gives exactly 8 frames.
FrameConfig tiny_frames() {
  FrameConfig f;
  f.window_len = 8;
  f.hop = 2;
  return f;
}

std::vector<double> fixture_clean() {
  std::vector<double> y(16);
  for (int i = 0; i < 16; ++i) y[i] = (std::sin(0.7 * i) + 0.1 * i) / 4.0;
  return y;
}

std::vector<double> fixture_noise() {
  std::vector<double> z(16);
  for (int i = 0; i < 16; ++i) z[i] = ((i * 37) % 11 - 5) / 10.0;
  return z;
}

template <typename T>
std::vector<T> snapshot(const nn::ParameterSet<T>& p) {
  return std::vector<T>(p.values().begin(), p.values().end());
}

std::vector<TrainingPair> toy_dataset(std::size_t count, std::size_t seconds_x100, std::uint64_t seed) {
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto clean = testing::speech_like({seconds_x100 / 100.0, 16000.0, seed + i});
    const auto noise = testing::white_noise(clean.size() + 1000, seed + 100 + i);
    out.push_back({clean, mix_at_snr(clean, noise, 0.0, i).noisy});
  }
  return out;
}

}  // namespace

TEST_CASE("wSDR loss examples", "[training][loss]") {
  const auto y = fixture_clean();
  const auto z = fixture_noise();
  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[i] = y[i] + z[i];

  CHECK_THAT(wsdr_loss(x, y, y), WithinAbs(-1.0, 1e-15));
  // copying the noisy input leaves a zero noise estimate, so only the clean
  // term survives; value from an independent numpy evaluation
  CHECK_THAT(wsdr_loss(x, y, x), WithinAbs(-0.2578583112163181, 1e-14));
  std::vector<double> neg(y);
  for (auto& v : neg) v = -v;
  CHECK_THAT(wsdr_loss(y, y, neg), WithinAbs(1.0, 1e-15));
  CHECK_THROWS_AS(wsdr_loss(x, y, std::vector<double>(15)), InvalidArgument);
  // zero-norm estimate contributes 0 from the clean term
  const double zero_est = wsdr_loss(x, y, std::vector<double>(16, 0.0));
  CHECK(zero_est >= -1.0);
  CHECK(zero_est <= 1.0);
  CHECK(parse_loss_kind("neg_sdr") == LossKind::neg_sdr);
  CHECK_THROWS_AS(parse_loss_kind("l2"), InvalidArgument);
}

TEST_CASE("wSDR gradient", "[training][loss][gradient]") {
  const auto y = fixture_clean();
  const auto z = fixture_noise();
  std::vector<double> x(16), est(16);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.2);
  for (int i = 0; i < 16; ++i) {
    x[i] = y[i] + z[i];
    est[i] = y[i] + g(rng);
  }
  for (auto kind : {LossKind::wsdr, LossKind::neg_sdr}) {
    std::vector<double> grad;
    training_loss(kind, x, y, est, &grad);
    for (int i = 0; i < 16; ++i) {
      auto e = est;
      e[i] += 1e-6;
      const double up = training_loss(kind, x, y, e);
      e[i] -= 2e-6;
      const double down = training_loss(kind, x, y, e);
      REQUIRE_THAT(grad[i], WithinAbs((up - down) / 2e-6, 1e-7));
    }
  }
}

TEST_CASE("losses prefer the aligned estimate", "[training][loss][property]") {
  const auto y = fixture_clean();
  const auto z = fixture_noise();
  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[i] = y[i] + z[i];
  const double best = wsdr_loss(x, y, y);
  for (double c : {-1.0, 0.1, 0.5, 0.9, 1.1, 2.0, 10.0}) {
    std::vector<double> cy(y);
    for (auto& v : cy) v *= c;
    CHECK(best <= wsdr_loss(x, y, cy));
  }
  // rotating the estimate away from y: the clean-only loss rises monotonically
  std::vector<double> u(16);
  double yy = 0.0, yu = 0.0, uu = 0.0;
  for (int i = 0; i < 16; ++i) {
    u[i] = std::cos(1.3 * i);
    yy += y[i] * y[i];
    yu += y[i] * u[i];
  }
  for (int i = 0; i < 16; ++i) u[i] -= yu / yy * y[i];
  for (double v : u) uu += v * v;
  double prev = -2.0;
  for (int k = 0; k <= 20; ++k) {
    const double th = std::numbers::pi * k / 20.0;
    std::vector<double> e(16);
    for (int i = 0; i < 16; ++i) e[i] = std::cos(th) * y[i] / std::sqrt(yy) + std::sin(th) * u[i] / std::sqrt(uu);
    const double l = neg_sdr_loss(y, e);
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("Adam", "[training][adam]") {
  const auto cfg = toy_config();
  auto params = nn::make_unet_parameters<float>(cfg, 1);
  AdamState<float> st(params.values().size(), AdamOptions{});

  const auto before = snapshot(params);
  params.zero_grad();
  adam_step(params, st);
  CHECK(snapshot(params) == before);
  CHECK(st.step == 1);

  // first step with beta1 = 0 is -lr * g / (|g| + eps)
  nn::ParameterSet<double> p;
  p.add("w", nn::SlotKind::kernel, {3}, true);
  p.add("stat", nn::SlotKind::running_mean, {1}, false);
  AdamState<double> s(4, AdamOptions{});
  const std::vector<double> g{0.3, -2.0, 1e-3, 5.0};
  std::copy(g.begin(), g.end(), p.grads().begin());
  adam_step(p, s);
  CHECK_THAT(p.values()[0], WithinAbs(-0.00099999996666667, 1e-17));
  CHECK_THAT(p.values()[1], WithinAbs(0.000999999995, 1e-17));
  CHECK_THAT(p.values()[2], WithinAbs(-0.0009999900001, 1e-17));
  CHECK(p.values()[3] == 0.0);  // non-trainable slot untouched

  // non-finite gradient aborts and leaves everything as it was
  const auto v_before = snapshot(p);
  const auto m_before = s.second_moment;
  p.grads()[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(p, s), NumericalError);
  CHECK(snapshot(p) == v_before);
  CHECK(s.second_moment == m_before);
  CHECK(s.step == 1);

  AdamOptions bad;
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = {};
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  AdamState<double> wrong(3, AdamOptions{});
  CHECK_THROWS_AS(adam_step(p, wrong), InvalidArgument);
}

TEST_CASE("end-to-end gradient through analysis, mask and synthesis", "[training][gradient]") {
  Model<double> model(toy_config(), tiny_frames(), 3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.1);
  for (std::size_t i = 0; i < model.params.slots().size(); ++i)
    if (model.params.slot(i).trainable)
      for (auto& v : model.params.values(i)) v += g(rng);
  model.params.touch();

  std::vector<Waveform> noisy(2), clean(2);
  for (int b = 0; b < 2; ++b) {
    clean[b] = testing::random_signal(10, 10 + b);
    noisy[b] = clean[b];
    const auto n = testing::white_noise(10, 20 + b);
    for (int i = 0; i < 10; ++i) noisy[b].samples[i] += 0.5 * n.samples[i];
  }
  REQUIRE(model.pipeline.analyze(noisy[0]).frames == 8);

  for (auto kind : {LossKind::wsdr, LossKind::neg_sdr}) {
    model.params.zero_grad();
    batch_loss_and_gradients(model, noisy, clean, kind);
    const std::vector<double> grads(model.params.grads().begin(), model.params.grads().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < model.params.slots().size(); ++i) {
      const auto& slot = model.params.slot(i);
      if (!slot.trainable) continue;
      auto vals = model.params.values(i);
      double err = 0.0, scale = 1e-6;
      for (std::size_t k = 0; k < vals.size(); ++k) {
        const double keep = vals[k];
        vals[k] = keep + 1e-5;
        const double up = batch_loss(model, noisy, clean, kind, nn::Mode::train);
        vals[k] = keep - 1e-5;
        const double down = batch_loss(model, noisy, clean, kind, nn::Mode::train);
        vals[k] = keep;
        const double num = (up - down) / 2e-5;
        err = std::max(err, std::abs(num - grads[slot.offset + k]));
        scale = std::max(scale, std::abs(num));
      }
      INFO(slot.name << " relative error " << err / scale);
      CHECK(err / scale <= 1e-3);
      worst = std::max(worst, err / scale);
    }
    CHECK(worst <= 1e-3);
  }
}

TEST_CASE("batching validation", "[training]") {
  Model<float> model(toy_config(), FrameConfig{}, 1);
  std::vector<Waveform> a{testing::random_signal(4000, 1)}, b{testing::random_signal(3000, 2)};
  CHECK_THROWS_AS(batch_loss_and_gradients(model, a, b, LossKind::wsdr), InvalidArgument);
  std::vector<Waveform> none;
  CHECK_THROWS_AS(batch_loss_and_gradients(model, none, none, LossKind::wsdr), InvalidArgument);
  CHECK(padded_frame_count(79, toy_config()) == 80);
  CHECK(padded_frame_count(80, toy_config()) == 80);
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), InvalidArgument);
}

TEST_CASE("enhance keeps the input length", "[training]") {
  Model<float> model(toy_config(), FrameConfig{}, 1);
  for (std::size_t n : {3000u, 4096u, 10001u}) {
    const auto x = testing::random_signal(n, n);
    const auto y = enhance(model, x);
    CHECK(y.size() == n);
    CHECK(enhance(model, x).samples == y.samples);
  }
}

TEST_CASE("zero learning rate keeps trainable parameters", "[training]") {
  Model<float> model(toy_config(), FrameConfig{}, 4);
  const auto data = toy_dataset(3, 40, 1);
  AdamOptions o;
  o.learning_rate = 0.0;
  AdamState<float> adam(model.params.values().size(), o);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.segment_len = 4096;
  const auto before = snapshot(model.params);
  const auto m = train_epoch(model, std::span<const TrainingPair>(data), tc, adam, 0);
  CHECK(m.steps == 2);
  for (const auto& s : model.params.slots()) {
    if (!s.trainable) continue;
    for (std::size_t k = s.offset; k < s.offset + s.count; ++k) REQUIRE(model.params.values()[k] == before[k]);
  }
}

TEST_CASE("training is deterministic and resumable", "[training]") {
  const auto data = toy_dataset(4, 40, 5);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.segment_len = 4096;
  tc.seed = 11;
  auto run = [&](std::size_t epochs) {
    Model<float> model(toy_config(), FrameConfig{}, tc.seed);
    AdamState<float> adam(model.params.values().size(), AdamOptions{});
    for (std::size_t e = 0; e < epochs; ++e) train_epoch(model, std::span<const TrainingPair>(data), tc, adam, e);
    return std::make_pair(snapshot(model.params), adam);
  };
  const auto [p1, a1] = run(2);
  const auto [p2, a2] = run(2);
  CHECK(p1 == p2);
  CHECK(a1.second_moment == a2.second_moment);

  // stop after one epoch, continue in a fresh model built from the saved state
  auto [p_half, a_half] = run(1);
  Model<float> fresh(toy_config(), FrameConfig{}, 999);
  std::copy(p_half.begin(), p_half.end(), fresh.params.values().begin());
  fresh.params.touch();
  train_epoch(fresh, std::span<const TrainingPair>(data), tc, a_half, 1);
  CHECK(snapshot(fresh.params) == p1);
}

TEST_CASE("small model overfits a single pair", "[training]") {
  const auto data = toy_dataset(1, 30, 21);
  Model<float> model(toy_config(), FrameConfig{}, 2);
  AdamState<float> adam(model.params.values().size(), AdamOptions{});
  TrainConfig tc;
  tc.batch_size = 1;
  tc.segment_len = data[0].clean.size();
  std::vector<Waveform> n{data[0].noisy}, c{data[0].clean};
  const double initial = batch_loss(model, n, c, LossKind::wsdr, nn::Mode::eval);
  double last = 0.0;
  for (std::size_t e = 0; e < 500; ++e) {
    const auto m = train_epoch(model, std::span<const TrainingPair>(data), tc, adam, e);
    REQUIRE(m.mean_loss >= -1.0);
    REQUIRE(m.mean_loss <= 1.0);
    last = m.mean_loss;
  }
  const double final_eval = batch_loss(model, n, c, LossKind::wsdr, nn::Mode::eval);
  INFO("initial " << initial << " last train " << last << " final eval " << final_eval);
  CHECK(final_eval < initial);
  CHECK(last < initial);
}

TEST_CASE("an epoch of non-finite data fails", "[training]") {
  auto data = toy_dataset(2, 30, 3);
  for (auto& p : data) p.noisy.samples[100] = std::numeric_limits<double>::quiet_NaN();
  Model<float> model(toy_config(), FrameConfig{}, 2);
  AdamState<float> adam(model.params.values().size(), AdamOptions{});
  const auto before = snapshot(model.params);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.segment_len = data[0].clean.size();
  CHECK_THROWS_AS(train_epoch(model, std::span<const TrainingPair>(data), tc, adam, 0), NumericalError);
  for (const auto& s : model.params.slots()) {
    if (!s.trainable) continue;
    for (std::size_t k = s.offset; k < s.offset + s.count; ++k) REQUIRE(model.params.values()[k] == before[k]);
  }
}
