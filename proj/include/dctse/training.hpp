#pragma once

// Waveform-domain training of the mask U-net: loss, Adam, batching and the
// analyze -> U-net -> mask -> synthesize chain with its backward pass.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dctse/spectral.hpp"
#include "dctse/unet.hpp"

namespace dctse {

enum class LossKind { wsdr, neg_sdr };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

// Weighted SDR over the clean and noise components:
//   -a cos(y, y_hat) - (1 - a) cos(x - y, x - y_hat),  a = |y|^2 / (|y|^2 + |x - y|^2)
// A cosine with a zero-norm factor contributes 0. Range [-1, 1]. When grad is
// non-null it receives dL/dy_hat.
double wsdr_loss(std::span<const double> noisy, std::span<const double> clean, std::span<const double> estimate,
                 std::vector<double>* grad = nullptr);

// -cos(y, y_hat).
double neg_sdr_loss(std::span<const double> clean, std::span<const double> estimate,
                    std::vector<double>* grad = nullptr);

double training_loss(LossKind kind, std::span<const double> noisy, std::span<const double> clean,
                     std::span<const double> estimate, std::vector<double>* grad = nullptr);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(std::size_t count, AdamOptions opts)
      : options(opts), first_moment(count, T(0)), second_moment(count, T(0)) {
    options.validate();
  }
};

// Bias-corrected Adam on every trainable, unfrozen slot:
//   theta -= lr * m_hat / (sqrt(v_hat) + eps).
// A non-finite gradient throws NumericalError and leaves everything untouched.
template <typename T>
void adam_step(nn::ParameterSet<T>& params, AdamState<T>& state);

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t segment_len = 16384;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::wsdr;

  void validate() const;
};

template <typename T>
struct Model {
  nn::UNetConfig unet;
  nn::ParameterSet<T> params;
  SpectralPipeline pipeline;

  Model(nn::UNetConfig cfg, FrameConfig frames, std::uint64_t seed)
      : unet(std::move(cfg)), params(nn::make_unet_parameters<T>(unet, seed)), pipeline(frames) {}
  Model(nn::UNetConfig cfg, nn::ParameterSet<T> p, FrameConfig frames)
      : unet(std::move(cfg)), params(std::move(p)), pipeline(frames) {}
};

// Frames are zero-padded on the right to the U-net time multiple.
std::size_t padded_frame_count(std::size_t frames, const nn::UNetConfig& cfg);

template <typename T>
nn::Tensor4<T> spectrogram_batch(std::span<const RealSpectrogram> specs, const nn::UNetConfig& cfg);

// Full forward + backward for one batch of equal-length pairs. Gradients are
// accumulated (averaged over the batch) into model.params.grads(); returns
// the mean loss.
template <typename T>
double batch_loss_and_gradients(Model<T>& model, std::span<const Waveform> noisy, std::span<const Waveform> clean,
                                LossKind loss, std::vector<Waveform>* estimates = nullptr);

// Loss only, with the network in the given mode.
template <typename T>
double batch_loss(Model<T>& model, std::span<const Waveform> noisy, std::span<const Waveform> clean, LossKind loss,
                  nn::Mode mode);

// Inference path: analyze, eval-mode mask, apply, synthesize.
template <typename T>
Waveform enhance(Model<T>& model, const Waveform& noisy);

struct TrainingPair {
  Waveform clean;
  Waveform noisy;
};

struct EpochMetrics {
  double mean_loss = 0.0;
  std::size_t steps = 0;
  std::size_t aborted = 0;
};

// One pass over the dataset in a seeded order. Each item is cropped (or
// zero-padded) to cfg.segment_len at a seeded offset. Steps whose gradients
// are non-finite are skipped; if every step is skipped NumericalError is
// thrown.
template <typename T>
EpochMetrics train_epoch(Model<T>& model, std::span<const TrainingPair> dataset, const TrainConfig& cfg,
                         AdamState<T>& adam, std::size_t epoch_index);

// Single optimizer step on an explicit batch.
template <typename T>
double train_step(Model<T>& model, std::span<const Waveform> noisy, std::span<const Waveform> clean, LossKind loss,
                  AdamState<T>& adam);

}  // namespace dctse
