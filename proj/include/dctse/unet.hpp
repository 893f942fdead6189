#pragma once

// Mask-estimation U-net over real spectrograms.
//
// Encoder block: conv -> batch norm -> PReLU. Decoder block: tconv -> batch
// norm -> PReLU, fed with the previous decoder output concatenated (along
// channels) with the mirrored encoder output. The last decoder block has no
// batch norm or PReLU; its output goes through the scaled tanh mask function.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dctse/layers.hpp"
#include "dctse/tensor.hpp"

namespace dctse::nn {

struct EncoderLayerSpec {
  std::size_t kernel_freq = 3;
  std::size_t kernel_time = 3;
  std::size_t stride_freq = 2;
  std::size_t stride_time = 2;
  std::size_t channels = 16;
};

// Padding is (k - 1) / 2 on each axis, so kernels must be odd; decoder
// blocks mirror the encoder with output padding stride - 1.
struct UNetConfig {
  std::vector<EncoderLayerSpec> encoder;
  std::size_t input_channels = 1;
  double mask_bound = 2.0;      // K
  double mask_steepness = 0.5;  // C
  double prelu_init = 0.25;
  BatchNormOptions batch_norm;

  // Five encoder and five decoder blocks sized for 1024-bin spectrograms.
  static UNetConfig default_config();

  void validate() const;
  std::size_t depth() const { return encoder.size(); }
  std::vector<Conv2dSpec> encoder_specs() const;
  std::vector<Conv2dSpec> decoder_specs() const;
  std::size_t freq_multiple() const;
  std::size_t time_multiple() const;

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

enum class SlotKind { kernel, bias, bn_scale, bn_shift, prelu_slope, running_mean, running_var };
std::string to_string(SlotKind k);
SlotKind parse_slot_kind(const std::string& s);

struct ParamSlot {
  std::string name;
  SlotKind kind = SlotKind::kernel;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
  bool trainable = true;  // false for batch-norm running statistics
  bool frozen = false;    // excluded from gradients and updates
};

// Flat parameter storage with a stable layout and a mirrored gradient buffer.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, SlotKind kind, std::vector<std::size_t> shape, bool trainable);

  const std::vector<ParamSlot>& slots() const { return slots_; }
  const ParamSlot& slot(std::size_t i) const { return slots_.at(i); }
  std::size_t index_of(const std::string& name) const;

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::span<T> grads() { return grads_; }
  std::span<const T> grads() const { return grads_; }
  std::span<T> values(std::size_t i) { return std::span<T>(values_).subspan(slots_[i].offset, slots_[i].count); }
  std::span<const T> values(std::size_t i) const {
    return std::span<const T>(values_).subspan(slots_[i].offset, slots_[i].count);
  }
  std::span<T> grads(std::size_t i) { return std::span<T>(grads_).subspan(slots_[i].offset, slots_[i].count); }
  std::span<const T> grads(std::size_t i) const {
    return std::span<const T>(grads_).subspan(slots_[i].offset, slots_[i].count);
  }

  void zero_grad();
  void set_frozen(const std::string& name, bool frozen);
  // Zeroes gradient entries of frozen and non-trainable slots.
  void mask_gradients();

  // Bumped whenever values are replaced or updated outside a forward pass;
  // forward caches record it so that backward can detect staleness.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& s : slots_) out.add(s.name, s.kind, s.shape, s.trainable);
    for (std::size_t i = 0; i < slots_.size(); ++i) out.set_frozen(slots_[i].name, slots_[i].frozen);
    auto v = out.values();
    for (std::size_t i = 0; i < values_.size(); ++i) v[i] = static_cast<U>(values_[i]);
    return out;
  }

 private:
  std::vector<ParamSlot> slots_;
  std::vector<T> values_;
  std::vector<T> grads_;
  std::uint64_t version_ = 0;
};

// Builds the layout for cfg and initializes it: orthogonal kernels, zero
// biases, unit batch-norm scale, PReLU slopes at cfg.prelu_init.
template <typename T>
ParameterSet<T> make_unet_parameters(const UNetConfig& cfg, std::uint64_t seed);

template <typename T>
struct UNetCache;

template <typename T>
struct UNetOutput {
  Tensor4<T> mask;
  std::shared_ptr<const UNetCache<T>> cache;
};

// x: (B, input_channels, F, T) with F and T multiples of the stride
// products. Returns the bounded mask with the same shape as x.
template <typename T>
UNetOutput<T> unet_forward(const Tensor4<T>& x, const UNetConfig& cfg, ParameterSet<T>& params, Mode mode);

// Accumulates parameter gradients for dL/dmask into params.grads() and
// returns dL/dx. Requires a train-mode cache produced against the current
// parameter version.
template <typename T>
Tensor4<T> unet_backward(const UNetCache<T>& cache, const Tensor4<T>& dmask, ParameterSet<T>& params);

}  // namespace dctse::nn
