#include "dctse/unet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dctse/errors.hpp"
#include "dctse/masking.hpp"

namespace dctse::nn {

UNetConfig UNetConfig::default_config() {
  UNetConfig cfg;
  cfg.encoder = {
      {7, 5, 2, 1, 16}, {7, 5, 2, 2, 32}, {5, 3, 2, 2, 64}, {5, 3, 2, 2, 64}, {5, 3, 2, 2, 64},
  };
  return cfg;
}

void UNetConfig::validate() const {
  if (encoder.empty()) throw InvalidArgument("UNetConfig: at least one encoder block is required");
  if (input_channels == 0) throw InvalidArgument("UNetConfig: input_channels must be >= 1");
  for (const auto& e : encoder) {
    if (e.kernel_freq % 2 == 0 || e.kernel_time % 2 == 0)
      throw InvalidArgument("UNetConfig: kernel sizes must be odd");
    if (e.stride_freq == 0 || e.stride_time == 0 || e.channels == 0)
      throw InvalidArgument("UNetConfig: strides and channels must be >= 1");
  }
  if (!(mask_bound > 0.0) || !(mask_steepness > 0.0))
    throw InvalidArgument("UNetConfig: mask bound and steepness must be positive");
}

std::vector<Conv2dSpec> UNetConfig::encoder_specs() const {
  std::vector<Conv2dSpec> out;
  std::size_t in = input_channels;
  for (const auto& e : encoder) {
    Conv2dSpec s;
    s.kernel_freq = e.kernel_freq;
    s.kernel_time = e.kernel_time;
    s.stride_freq = e.stride_freq;
    s.stride_time = e.stride_time;
    s.pad_freq = (e.kernel_freq - 1) / 2;
    s.pad_time = (e.kernel_time - 1) / 2;
    s.in_channels = in;
    s.out_channels = e.channels;
    out.push_back(s);
    in = e.channels;
  }
  return out;
}

std::vector<Conv2dSpec> UNetConfig::decoder_specs() const {
  const std::size_t n = encoder.size();
  std::vector<Conv2dSpec> out;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t m = n - 1 - j;  // mirrored encoder block
    const auto& e = encoder[m];
    Conv2dSpec s;
    s.transposed = true;
    s.kernel_freq = e.kernel_freq;
    s.kernel_time = e.kernel_time;
    s.stride_freq = e.stride_freq;
    s.stride_time = e.stride_time;
    s.pad_freq = (e.kernel_freq - 1) / 2;
    s.pad_time = (e.kernel_time - 1) / 2;
    s.out_pad_freq = e.stride_freq - 1;
    s.out_pad_time = e.stride_time - 1;
    s.in_channels = j == 0 ? e.channels : 2 * e.channels;
    s.out_channels = m == 0 ? input_channels : encoder[m - 1].channels;
    out.push_back(s);
  }
  return out;
}

std::size_t UNetConfig::freq_multiple() const {
  std::size_t m = 1;
  for (const auto& e : encoder) m *= e.stride_freq;
  return m;
}

std::size_t UNetConfig::time_multiple() const {
  std::size_t m = 1;
  for (const auto& e : encoder) m *= e.stride_time;
  return m;
}

namespace {

nlohmann::json spec_json(const Conv2dSpec& s) {
  return {{"kernel", {s.kernel_freq, s.kernel_time}},
          {"stride", {s.stride_freq, s.stride_time}},
          {"padding", {s.pad_freq, s.pad_time}},
          {"output_padding", {s.out_pad_freq, s.out_pad_time}},
          {"in_channels", s.in_channels},
          {"out_channels", s.out_channels},
          {"transposed", s.transposed}};
}

}  // namespace

nlohmann::json UNetConfig::to_json() const {
  nlohmann::json j;
  j["input_channels"] = input_channels;
  j["mask_bound"] = mask_bound;
  j["mask_steepness"] = mask_steepness;
  j["prelu_init"] = prelu_init;
  j["batch_norm"] = {{"momentum", batch_norm.momentum}, {"eps", batch_norm.eps}};
  j["skip"] = "concatenate";
  j["encoder"] = nlohmann::json::array();
  for (const auto& e : encoder)
    j["encoder"].push_back({{"kernel", {e.kernel_freq, e.kernel_time}},
                            {"stride", {e.stride_freq, e.stride_time}},
                            {"channels", e.channels}});
  // Resolved block geometry, informational only.
  j["resolved"]["encoder"] = nlohmann::json::array();
  for (const auto& s : encoder_specs()) j["resolved"]["encoder"].push_back(spec_json(s));
  j["resolved"]["decoder"] = nlohmann::json::array();
  for (const auto& s : decoder_specs()) j["resolved"]["decoder"].push_back(spec_json(s));
  return j;
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig cfg = default_config();
  try {
    if (j.contains("encoder")) {
      cfg.encoder.clear();
      for (const auto& e : j.at("encoder")) {
        EncoderLayerSpec s;
        s.kernel_freq = e.at("kernel").at(0).get<std::size_t>();
        s.kernel_time = e.at("kernel").at(1).get<std::size_t>();
        s.stride_freq = e.at("stride").at(0).get<std::size_t>();
        s.stride_time = e.at("stride").at(1).get<std::size_t>();
        s.channels = e.at("channels").get<std::size_t>();
        cfg.encoder.push_back(s);
      }
    }
    cfg.input_channels = j.value("input_channels", cfg.input_channels);
    cfg.mask_bound = j.value("mask_bound", cfg.mask_bound);
    cfg.mask_steepness = j.value("mask_steepness", cfg.mask_steepness);
    cfg.prelu_init = j.value("prelu_init", cfg.prelu_init);
    if (j.contains("batch_norm")) {
      cfg.batch_norm.momentum = j["batch_norm"].value("momentum", cfg.batch_norm.momentum);
      cfg.batch_norm.eps = j["batch_norm"].value("eps", cfg.batch_norm.eps);
    }
    if (j.contains("skip") && j["skip"] != "concatenate")
      throw InvalidArgument("UNetConfig: only 'concatenate' skip connections are supported");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("UNetConfig: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string to_string(SlotKind k) {
  switch (k) {
    case SlotKind::kernel: return "kernel";
    case SlotKind::bias: return "bias";
    case SlotKind::bn_scale: return "bn_scale";
    case SlotKind::bn_shift: return "bn_shift";
    case SlotKind::prelu_slope: return "prelu_slope";
    case SlotKind::running_mean: return "running_mean";
    case SlotKind::running_var: return "running_var";
  }
  return "unknown";
}

SlotKind parse_slot_kind(const std::string& s) {
  for (auto k : {SlotKind::kernel, SlotKind::bias, SlotKind::bn_scale, SlotKind::bn_shift, SlotKind::prelu_slope,
                 SlotKind::running_mean, SlotKind::running_var})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown parameter slot kind '" + s + "'");
}

template <typename T>
std::size_t ParameterSet<T>::add(std::string name, SlotKind kind, std::vector<std::size_t> shape, bool trainable) {
  for (const auto& s : slots_)
    if (s.name == name) throw InvalidArgument("ParameterSet: duplicate slot '" + name + "'");
  ParamSlot slot;
  slot.name = std::move(name);
  slot.kind = kind;
  slot.count = 1;
  for (auto d : shape) slot.count *= d;
  slot.shape = std::move(shape);
  slot.offset = values_.size();
  slot.trainable = trainable;
  values_.resize(values_.size() + slot.count, T(0));
  grads_.resize(values_.size(), T(0));
  slots_.push_back(std::move(slot));
  return slots_.size() - 1;
}

template <typename T>
std::size_t ParameterSet<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].name == name) return i;
  throw InvalidArgument("ParameterSet: no slot named '" + name + "'");
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  std::fill(grads_.begin(), grads_.end(), T(0));
}

template <typename T>
void ParameterSet<T>::set_frozen(const std::string& name, bool frozen) {
  slots_[index_of(name)].frozen = frozen;
}

template <typename T>
void ParameterSet<T>::mask_gradients() {
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].frozen || !slots_[i].trainable) {
      auto g = grads(i);
      std::fill(g.begin(), g.end(), T(0));
    }
}

namespace {

std::string block_name(bool decoder, std::size_t i) { return (decoder ? "dec" : "enc") + std::to_string(i); }

struct BlockSlots {
  std::size_t kernel = 0, bias = 0, scale = 0, shift = 0, mean = 0, var = 0, prelu = 0;
  bool normalized = true;  // false for the mask head
};

template <typename T>
BlockSlots block_slots(const ParameterSet<T>& p, const std::string& name, bool normalized) {
  BlockSlots b;
  b.normalized = normalized;
  b.kernel = p.index_of(name + ".kernel");
  b.bias = p.index_of(name + ".bias");
  if (normalized) {
    b.scale = p.index_of(name + ".bn.scale");
    b.shift = p.index_of(name + ".bn.shift");
    b.mean = p.index_of(name + ".bn.running_mean");
    b.var = p.index_of(name + ".bn.running_var");
    b.prelu = p.index_of(name + ".prelu");
  }
  return b;
}

}  // namespace

template <typename T>
ParameterSet<T> make_unet_parameters(const UNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet<T> p;
  std::uint64_t slot_seed = seed;
  auto add_block = [&](const std::string& name, const Conv2dSpec& s, bool normalized) {
    const std::size_t first = s.transposed ? s.in_channels : s.out_channels;
    const std::size_t second = s.transposed ? s.out_channels : s.in_channels;
    const auto k = p.add(name + ".kernel", SlotKind::kernel, {first, second, s.kernel_freq, s.kernel_time}, true);
    const auto w = orthogonal_init(first, second * s.kernel_freq * s.kernel_time,
                                   slot_seed++ * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
    auto kv = p.values(k);
    for (std::size_t i = 0; i < w.size(); ++i) kv[i] = static_cast<T>(w[i]);
    p.add(name + ".bias", SlotKind::bias, {s.out_channels}, true);
    if (!normalized) return;
    const auto scale = p.add(name + ".bn.scale", SlotKind::bn_scale, {s.out_channels}, true);
    std::ranges::fill(p.values(scale), T(1));
    p.add(name + ".bn.shift", SlotKind::bn_shift, {s.out_channels}, true);
    p.add(name + ".bn.running_mean", SlotKind::running_mean, {s.out_channels}, false);
    const auto var = p.add(name + ".bn.running_var", SlotKind::running_var, {s.out_channels}, false);
    std::ranges::fill(p.values(var), T(1));
    const auto slope = p.add(name + ".prelu", SlotKind::prelu_slope, {s.out_channels}, true);
    std::ranges::fill(p.values(slope), static_cast<T>(cfg.prelu_init));
  };
  const auto enc = cfg.encoder_specs();
  const auto dec = cfg.decoder_specs();
  for (std::size_t i = 0; i < enc.size(); ++i) add_block(block_name(false, i), enc[i], true);
  for (std::size_t j = 0; j < dec.size(); ++j) add_block(block_name(true, j), dec[j], j + 1 < dec.size());
  return p;
}

template <typename T>
struct BlockCache {
  Tensor4<T> input;
  BatchNormCache<T> bn;
  Tensor4<T> pre_activation;
};

template <typename T>
struct UNetCache {
  UNetConfig cfg;
  Mode mode = Mode::train;
  const ParameterSet<T>* params = nullptr;
  std::uint64_t version = 0;
  std::array<std::size_t, 4> input_shape{};
  std::vector<BlockCache<T>> enc;
  std::vector<BlockCache<T>> dec;
  Tensor4<T> mask;
};

namespace {

template <typename T>
Tensor4<T> run_block(const Tensor4<T>& x, const Conv2dSpec& spec, const BlockSlots& slots, ParameterSet<T>& p,
                     Mode mode, const BatchNormOptions& bn_opt, BlockCache<T>* cache) {
  const std::span<const T> kernel = p.values(slots.kernel);
  const std::span<const T> bias = p.values(slots.bias);
  Tensor4<T> y = spec.transposed ? tconv2d_forward<T>(x, spec, kernel, bias) : conv2d_forward<T>(x, spec, kernel, bias);
  if (cache) cache->input = x;
  if (!slots.normalized) return y;
  Tensor4<T> z = batchnorm_forward<T>(y, p.values(slots.scale), p.values(slots.shift), p.values(slots.mean),
                                      p.values(slots.var), mode, bn_opt, cache ? &cache->bn : nullptr);
  Tensor4<T> out = prelu_forward<T>(z, p.values(slots.prelu));
  if (cache) cache->pre_activation = std::move(z);
  return out;
}

template <typename T>
Tensor4<T> block_backward(const Tensor4<T>& dy, const Conv2dSpec& spec, const BlockSlots& slots,
                          ParameterSet<T>& p, const BlockCache<T>& cache) {
  Tensor4<T> dconv_out;
  if (slots.normalized) {
    const Tensor4<T> dz = prelu_backward<T>(cache.pre_activation, p.values(slots.prelu), dy, p.grads(slots.prelu));
    dconv_out = batchnorm_backward<T>(cache.bn, p.values(slots.scale), dz, p.grads(slots.scale), p.grads(slots.shift));
  }
  const Tensor4<T>& d = slots.normalized ? dconv_out : dy;
  Tensor4<T> dx;
  if (spec.transposed)
    tconv2d_backward<T>(cache.input, spec, p.values(slots.kernel), d, p.grads(slots.kernel), p.grads(slots.bias), &dx);
  else
    conv2d_backward<T>(cache.input, spec, p.values(slots.kernel), d, p.grads(slots.kernel), p.grads(slots.bias), &dx);
  return dx;
}

}  // namespace

template <typename T>
UNetOutput<T> unet_forward(const Tensor4<T>& x, const UNetConfig& cfg, ParameterSet<T>& params, Mode mode) {
  cfg.validate();
  if (x.channels() != cfg.input_channels) throw InvalidArgument("unet_forward: input channel mismatch");
  if (x.batch() == 0 || x.height() == 0 || x.width() == 0) throw InvalidArgument("unet_forward: empty input");
  if (x.height() % cfg.freq_multiple() != 0 || x.width() % cfg.time_multiple() != 0) {
    std::ostringstream os;
    os << "unet_forward: input of " << x.height() << " bins x " << x.width()
       << " frames is incompatible with the stride pyramid; bins must be a multiple of " << cfg.freq_multiple()
       << " and frames a multiple of " << cfg.time_multiple();
    throw InvalidArgument(os.str());
  }

  const auto enc_specs = cfg.encoder_specs();
  const auto dec_specs = cfg.decoder_specs();
  const std::size_t n = enc_specs.size();

  auto cache = std::make_shared<UNetCache<T>>();
  cache->cfg = cfg;
  cache->mode = mode;
  cache->params = &params;
  cache->version = params.version();
  cache->input_shape = x.shape;
  cache->enc.resize(n);
  cache->dec.resize(n);

  std::vector<Tensor4<T>> enc_out(n);
  const Tensor4<T>* current = &x;
  for (std::size_t i = 0; i < n; ++i) {
    const auto slots = block_slots(params, block_name(false, i), true);
    enc_out[i] = run_block(*current, enc_specs[i], slots, params, mode, cfg.batch_norm, &cache->enc[i]);
    current = &enc_out[i];
  }

  Tensor4<T> h = enc_out[n - 1];
  for (std::size_t j = 0; j < n; ++j) {
    const bool last = j + 1 == n;
    const auto slots = block_slots(params, block_name(true, j), !last);
    Tensor4<T> in = j == 0 ? std::move(h) : concat_channels(h, enc_out[n - 1 - j]);
    h = run_block(in, dec_specs[j], slots, params, mode, cfg.batch_norm, &cache->dec[j]);
  }

  const T bound = static_cast<T>(cfg.mask_bound);
  const T steep = static_cast<T>(cfg.mask_steepness);
  for (auto& v : h.data) v = scaled_tanh<T>(v, bound, steep);
  if (h.shape != x.shape) throw InvalidState("unet_forward: decoder did not restore the input shape");
  cache->mask = h;
  return {std::move(h), std::move(cache)};
}

template <typename T>
Tensor4<T> unet_backward(const UNetCache<T>& cache, const Tensor4<T>& dmask, ParameterSet<T>& params) {
  if (cache.params != &params || cache.version != params.version())
    throw InvalidState("unet_backward: cache is stale or belongs to another parameter set");
  if (cache.mode != Mode::train) throw InvalidState("unet_backward: cache comes from an eval-mode forward pass");
  if (dmask.shape != cache.input_shape) throw InvalidArgument("unet_backward: gradient shape mismatch");

  const auto& cfg = cache.cfg;
  const auto enc_specs = cfg.encoder_specs();
  const auto dec_specs = cfg.decoder_specs();
  const std::size_t n = enc_specs.size();

  // d/dz of K tanh(C z / 2) = (C / 2K) (K^2 - y^2).
  Tensor4<T> d = dmask;
  const double k = cfg.mask_bound;
  const double c = cfg.mask_steepness;
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    const double y = cache.mask.data[i];
    d.data[i] = static_cast<T>(d.data[i] * (c / (2.0 * k)) * (k * k - y * y));
  }

  std::vector<Tensor4<T>> d_enc(n);
  for (std::size_t jj = n; jj-- > 0;) {
    const bool last = jj + 1 == n;
    const auto slots = block_slots(params, block_name(true, jj), !last);
    Tensor4<T> din = block_backward(d, dec_specs[jj], slots, params, cache.dec[jj]);
    if (jj == 0) {
      d_enc[n - 1] = std::move(din);
    } else {
      const std::size_t skip = n - 1 - jj;
      auto [dprev, dskip] = split_channels(din, din.channels() / 2);
      d_enc[skip] = std::move(dskip);
      d = std::move(dprev);
    }
  }

  Tensor4<T> dx;
  for (std::size_t i = n; i-- > 0;) {
    const auto slots = block_slots(params, block_name(false, i), true);
    Tensor4<T> din = block_backward(d_enc[i], enc_specs[i], slots, params, cache.enc[i]);
    if (i == 0) {
      dx = std::move(din);
    } else {
      auto& target = d_enc[i - 1];
      for (std::size_t q = 0; q < target.data.size(); ++q) target.data[q] += din.data[q];
    }
  }
  params.mask_gradients();
  return dx;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<float> make_unet_parameters<float>(const UNetConfig&, std::uint64_t);
template ParameterSet<double> make_unet_parameters<double>(const UNetConfig&, std::uint64_t);
template UNetOutput<float> unet_forward(const Tensor4<float>&, const UNetConfig&, ParameterSet<float>&, Mode);
template UNetOutput<double> unet_forward(const Tensor4<double>&, const UNetConfig&, ParameterSet<double>&, Mode);
template Tensor4<float> unet_backward(const UNetCache<float>&, const Tensor4<float>&, ParameterSet<float>&);
template Tensor4<double> unet_backward(const UNetCache<double>&, const Tensor4<double>&, ParameterSet<double>&);

}  // namespace dctse::nn
