#include "dctse/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dctse/errors.hpp"
#include "dctse/masking.hpp"

namespace dctse {

std::string to_string(LossKind k) { return k == LossKind::wsdr ? "wsdr" : "neg_sdr"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "wsdr") return LossKind::wsdr;
  if (s == "neg_sdr") return LossKind::neg_sdr;
  throw InvalidArgument("unknown loss '" + s + "' (wsdr, neg_sdr)");
}

namespace {

double norm2(std::span<const double> a) { return std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0)); }

// cos(a, b); when grad is set, adds w * d cos / d b to it.
double cosine(std::span<const double> a, std::span<const double> b, double w, std::vector<double>* grad) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double ab = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double c = ab / (na * nb);
  if (grad)
    for (std::size_t i = 0; i < a.size(); ++i) (*grad)[i] += w * (a[i] / (na * nb) - c * b[i] / (nb * nb));
  return c;
}

}  // namespace

double wsdr_loss(std::span<const double> noisy, std::span<const double> clean, std::span<const double> estimate,
                 std::vector<double>* grad) {
  if (noisy.size() != clean.size() || clean.size() != estimate.size())
    throw InvalidArgument("wsdr_loss: length mismatch");
  const std::size_t n = clean.size();
  std::vector<double> z(n), z_hat(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = noisy[i] - clean[i];
    z_hat[i] = noisy[i] - estimate[i];
  }
  const double yy = std::inner_product(clean.begin(), clean.end(), clean.begin(), 0.0);
  const double zz = std::inner_product(z.begin(), z.end(), z.begin(), 0.0);
  const double alpha = yy + zz > 0.0 ? yy / (yy + zz) : 0.0;

  if (grad) grad->assign(n, 0.0);
  const double c_clean = cosine(clean, estimate, -alpha, grad);
  // z_hat = x - y_hat, so d/dy_hat of -(1 - a) cos(z, z_hat) is +(1 - a) d cos / d z_hat.
  const double c_noise = cosine(z, z_hat, 1.0 - alpha, grad);
  return -alpha * c_clean - (1.0 - alpha) * c_noise;
}

double neg_sdr_loss(std::span<const double> clean, std::span<const double> estimate, std::vector<double>* grad) {
  if (clean.size() != estimate.size()) throw InvalidArgument("neg_sdr_loss: length mismatch");
  if (grad) grad->assign(clean.size(), 0.0);
  return -cosine(clean, estimate, -1.0, grad);
}

double training_loss(LossKind kind, std::span<const double> noisy, std::span<const double> clean,
                     std::span<const double> estimate, std::vector<double>* grad) {
  return kind == LossKind::wsdr ? wsdr_loss(noisy, clean, estimate, grad) : neg_sdr_loss(clean, estimate, grad);
}

void AdamOptions::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("Adam: learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgument("Adam: betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InvalidArgument("Adam: epsilon must be positive");
}

template <typename T>
void adam_step(nn::ParameterSet<T>& params, AdamState<T>& state) {
  const auto& opt = state.options;
  opt.validate();
  const auto values = params.values();
  const auto grads = params.grads();
  if (state.first_moment.size() != values.size() || state.second_moment.size() != values.size())
    throw InvalidArgument("adam_step: moment buffers do not match the parameter layout");

  const auto& slots = params.slots();
  for (const auto& s : slots) {
    if (!s.trainable || s.frozen) continue;
    for (std::size_t i = s.offset; i < s.offset + s.count; ++i)
      if (!std::isfinite(grads[i])) {
        std::ostringstream os;
        os << "adam_step: non-finite gradient in '" << s.name << "'; step aborted";
        throw NumericalError(os.str());
      }
  }

  const std::uint64_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (const auto& s : slots) {
    if (!s.trainable || s.frozen) continue;
    for (std::size_t i = s.offset; i < s.offset + s.count; ++i) {
      const double g = grads[i];
      const double m = opt.beta1 * state.first_moment[i] + (1.0 - opt.beta1) * g;
      const double v = opt.beta2 * state.second_moment[i] + (1.0 - opt.beta2) * g * g;
      state.first_moment[i] = static_cast<T>(m);
      state.second_moment[i] = static_cast<T>(v);
      const double update = opt.learning_rate * (m / c1) / (std::sqrt(v / c2) + opt.epsilon);
      values[i] = static_cast<T>(values[i] - update);
    }
  }
  state.step = t;
  params.touch();
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("TrainConfig: batch size must be >= 1");
  if (segment_len == 0) throw InvalidArgument("TrainConfig: segment length must be >= 1");
}

std::size_t padded_frame_count(std::size_t frames, const nn::UNetConfig& cfg) {
  const std::size_t m = cfg.time_multiple();
  return (frames + m - 1) / m * m;
}

template <typename T>
nn::Tensor4<T> spectrogram_batch(std::span<const RealSpectrogram> specs, const nn::UNetConfig& cfg) {
  if (specs.empty()) throw InvalidArgument("spectrogram_batch: empty batch");
  const std::size_t bins = specs[0].bins;
  const std::size_t frames = specs[0].frames;
  for (const auto& s : specs)
    if (s.bins != bins || s.frames != frames)
      throw InvalidArgument("spectrogram_batch: spectrograms in a batch must share a shape");
  const std::size_t width = padded_frame_count(frames, cfg);
  nn::Tensor4<T> x(specs.size(), 1, bins, width);
  for (std::size_t b = 0; b < specs.size(); ++b)
    for (std::size_t t = 0; t < frames; ++t) {
      const auto col = specs[b].frame(t);
      for (std::size_t f = 0; f < bins; ++f) x.at(b, 0, f, t) = static_cast<T>(col[f]);
    }
  return x;
}

namespace {

template <typename T>
MaskSpectrogram mask_for_item(const nn::Tensor4<T>& mask, std::size_t b, const RealSpectrogram& like,
                              const nn::UNetConfig& cfg) {
  MaskSpectrogram m;
  m.bins = like.bins;
  m.frames = like.frames;
  m.bound = cfg.mask_bound;
  m.steepness = cfg.mask_steepness;
  m.values.resize(like.values.size());
  for (std::size_t t = 0; t < like.frames; ++t)
    for (std::size_t f = 0; f < like.bins; ++f) m.values[t * like.bins + f] = mask.at(b, 0, f, t);
  return m;
}

template <typename T>
std::vector<RealSpectrogram> analyze_batch(const Model<T>& model, std::span<const Waveform> noisy,
                                           std::span<const Waveform> clean) {
  if (noisy.empty() || noisy.size() != clean.size()) throw InvalidArgument("batch: noisy/clean count mismatch");
  std::vector<RealSpectrogram> specs;
  specs.reserve(noisy.size());
  for (std::size_t b = 0; b < noisy.size(); ++b) {
    if (noisy[b].size() != clean[b].size() || noisy[b].size() != noisy[0].size())
      throw InvalidArgument("batch: all waveforms in a batch must have equal length");
    specs.push_back(model.pipeline.analyze(noisy[b]));
  }
  return specs;
}

}  // namespace

template <typename T>
double batch_loss_and_gradients(Model<T>& model, std::span<const Waveform> noisy, std::span<const Waveform> clean,
                                LossKind loss, std::vector<Waveform>* estimates) {
  const auto specs = analyze_batch(model, noisy, clean);
  const auto x = spectrogram_batch<T>(specs, model.unet);
  auto out = nn::unet_forward<T>(x, model.unet, model.params, nn::Mode::train);

  const double inv_batch = 1.0 / static_cast<double>(specs.size());
  nn::Tensor4<T> dmask(x.batch(), 1, x.height(), x.width());
  double total = 0.0;
  std::vector<double> grad;
  if (estimates) estimates->clear();
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const auto& y = specs[b];
    const auto mask = mask_for_item(out.mask, b, y, model.unet);
    const auto estimate = model.pipeline.synthesize(apply_mask(y, mask));
    total += training_loss(loss, noisy[b].samples, clean[b].samples, estimate.samples, &grad);
    for (auto& g : grad) g *= inv_batch;
    // dL/dM = (S^T dL/dy_hat) * Y elementwise.
    const auto dspec = model.pipeline.synthesize_adjoint(grad, y);
    for (std::size_t t = 0; t < y.frames; ++t)
      for (std::size_t f = 0; f < y.bins; ++f)
        dmask.at(b, 0, f, t) = static_cast<T>(dspec.at(f, t) * y.at(f, t));
    if (estimates) estimates->push_back(estimate);
  }
  nn::unet_backward<T>(*out.cache, dmask, model.params);
  return total * inv_batch;
}

template <typename T>
double batch_loss(Model<T>& model, std::span<const Waveform> noisy, std::span<const Waveform> clean, LossKind loss,
                  nn::Mode mode) {
  const auto specs = analyze_batch(model, noisy, clean);
  const auto x = spectrogram_batch<T>(specs, model.unet);
  const auto out = nn::unet_forward<T>(x, model.unet, model.params, mode);
  double total = 0.0;
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const auto estimate = model.pipeline.synthesize(apply_mask(specs[b], mask_for_item(out.mask, b, specs[b], model.unet)));
    total += training_loss(loss, noisy[b].samples, clean[b].samples, estimate.samples);
  }
  return total / static_cast<double>(specs.size());
}

template <typename T>
Waveform enhance(Model<T>& model, const Waveform& noisy) {
  const auto spec = model.pipeline.analyze(noisy);
  const auto x = spectrogram_batch<T>(std::span<const RealSpectrogram>(&spec, 1), model.unet);
  const auto out = nn::unet_forward<T>(x, model.unet, model.params, nn::Mode::eval);
  return model.pipeline.synthesize(apply_mask(spec, mask_for_item(out.mask, 0, spec, model.unet)));
}

template <typename T>
double train_step(Model<T>& model, std::span<const Waveform> noisy, std::span<const Waveform> clean, LossKind loss,
                  AdamState<T>& adam) {
  model.params.zero_grad();
  const double value = batch_loss_and_gradients(model, noisy, clean, loss);
  if (!std::isfinite(value)) throw NumericalError("train_step: non-finite loss; step aborted");
  adam_step(model.params, adam);
  return value;
}

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Waveform crop_or_pad(const Waveform& x, std::size_t offset, std::size_t len) {
  Waveform out;
  out.sample_rate = x.sample_rate;
  out.samples.assign(len, 0.0);
  for (std::size_t i = 0; i < len && offset + i < x.samples.size(); ++i) out.samples[i] = x.samples[offset + i];
  return out;
}

}  // namespace

template <typename T>
EpochMetrics train_epoch(Model<T>& model, std::span<const TrainingPair> dataset, const TrainConfig& cfg,
                         AdamState<T>& adam, std::size_t epoch_index) {
  cfg.validate();
  if (dataset.empty()) throw InvalidArgument("train_epoch: empty dataset");

  std::mt19937_64 rng(mix_seed(cfg.seed, epoch_index));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  EpochMetrics metrics;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::vector<Waveform> noisy, clean;
    for (std::size_t i = start; i < end; ++i) {
      const auto& pair = dataset[order[i]];
      if (pair.clean.size() != pair.noisy.size())
        throw InvalidArgument("train_epoch: clean and noisy lengths differ");
      std::size_t offset = 0;
      if (pair.clean.size() > cfg.segment_len) {
        std::uniform_int_distribution<std::size_t> pick(0, pair.clean.size() - cfg.segment_len);
        offset = pick(rng);
      }
      clean.push_back(crop_or_pad(pair.clean, offset, cfg.segment_len));
      noisy.push_back(crop_or_pad(pair.noisy, offset, cfg.segment_len));
    }
    try {
      loss_sum += train_step(model, noisy, clean, cfg.loss, adam);
      ++metrics.steps;
    } catch (const NumericalError&) {
      ++metrics.aborted;
    }
  }
  if (metrics.steps == 0) throw NumericalError("train_epoch: every step was aborted on non-finite values");
  metrics.mean_loss = loss_sum / static_cast<double>(metrics.steps);
  return metrics;
}

#define DCTSE_INSTANTIATE_TRAINING(T)                                                                        \
  template void adam_step(nn::ParameterSet<T>&, AdamState<T>&);                                              \
  template nn::Tensor4<T> spectrogram_batch(std::span<const RealSpectrogram>, const nn::UNetConfig&);       \
  template double batch_loss_and_gradients(Model<T>&, std::span<const Waveform>, std::span<const Waveform>, \
                                           LossKind, std::vector<Waveform>*);                               \
  template double batch_loss(Model<T>&, std::span<const Waveform>, std::span<const Waveform>, LossKind,     \
                             nn::Mode);                                                                     \
  template Waveform enhance(Model<T>&, const Waveform&);                                                     \
  template double train_step(Model<T>&, std::span<const Waveform>, std::span<const Waveform>, LossKind,     \
                             AdamState<T>&);                                                                \
  template EpochMetrics train_epoch(Model<T>&, std::span<const TrainingPair>, const TrainConfig&,           \
                                    AdamState<T>&, std::size_t);

DCTSE_INSTANTIATE_TRAINING(float)
DCTSE_INSTANTIATE_TRAINING(double)

}  // namespace dctse
