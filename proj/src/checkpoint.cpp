#include "dctse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dctse/errors.hpp"

namespace dctse {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_floats(std::vector<std::uint8_t>& out, const float* data, std::size_t n) {
  const std::size_t at = out.size();
  out.resize(at + n * sizeof(float));
  std::memcpy(out.data() + at, data, n * sizeof(float));
}

nlohmann::json layout_json(const nn::ParameterSet<float>& p) {
  auto arr = nlohmann::json::array();
  for (const auto& s : p.slots())
    arr.push_back({{"name", s.name},
                   {"kind", nn::to_string(s.kind)},
                   {"shape", s.shape},
                   {"offset", s.offset},
                   {"count", s.count},
                   {"trainable", s.trainable},
                   {"frozen", s.frozen}});
  return arr;
}

}  // namespace

nlohmann::json frame_config_to_json(const FrameConfig& c) {
  return {{"window_len", c.window_len},
          {"hop", c.hop},
          {"window", "hamming_periodic"},
          {"sample_rate", c.sample_rate},
          {"padding", c.padding == EdgePadding::reflect ? "reflect" : "none"}};
}

FrameConfig frame_config_from_json(const nlohmann::json& j) {
  FrameConfig c;
  c.window_len = j.value("window_len", c.window_len);
  c.hop = j.value("hop", c.hop);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  if (j.value("window", std::string("hamming_periodic")) != "hamming_periodic")
    throw InvalidArgument("frame config: only the periodic Hamming window is supported");
  const auto pad = j.value("padding", std::string("reflect"));
  if (pad == "reflect")
    c.padding = EdgePadding::reflect;
  else if (pad == "none")
    c.padding = EdgePadding::none;
  else
    throw InvalidArgument("frame config: padding must be 'reflect' or 'none'");
  c.validate();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"segment_len", c.segment_len},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"loss", to_string(c.loss)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.segment_len = j.value("segment_len", c.segment_len);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.loss = parse_loss_kind(j.value("loss", to_string(c.loss)));
  c.validate();
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const std::size_t n = ckpt.params.values().size();
  nlohmann::json h;
  h["format"] = "dctse-checkpoint";
  h["version"] = kCheckpointVersion;
  h["unet"] = ckpt.unet.to_json();
  h["frames"] = frame_config_to_json(ckpt.frames);
  h["layout"] = layout_json(ckpt.params);
  h["parameter_count"] = n;
  h["seed"] = ckpt.seed;
  h["step"] = ckpt.step;
  h["epoch"] = ckpt.epoch;
  h["dtype"] = "float32le";
  auto sections = nlohmann::json::array({"params"});
  if (ckpt.train) h["train"] = train_config_to_json(*ckpt.train);
  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    if (a.first_moment.size() != n || a.second_moment.size() != n)
      throw InvalidArgument("encode_checkpoint: optimizer state does not match parameter count");
    h["adam"] = {{"learning_rate", a.options.learning_rate},
                 {"beta1", a.options.beta1},
                 {"beta2", a.options.beta2},
                 {"epsilon", a.options.epsilon},
                 {"step", a.step}};
    sections.push_back("adam_m");
    sections.push_back("adam_v");
  }
  h["sections"] = sections;

  const std::string header = h.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  put_floats(out, ckpt.params.values().data(), n);
  if (ckpt.adam) {
    put_floats(out, ckpt.adam->first_moment.data(), n);
    put_floats(out, ckpt.adam->second_moment.data(), n);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw MalformedInput("checkpoint: bad magic");
  const std::uint64_t hlen = get_u64(bytes.data() + 8);
  if (hlen > bytes.size() - 16) throw MalformedInput("checkpoint: truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }

  Checkpoint c;
  try {
    if (h.at("format") != "dctse-checkpoint" || h.at("version").get<int>() != kCheckpointVersion)
      throw MalformedInput("checkpoint: unsupported format or version");
    c.unet = nn::UNetConfig::from_json(h.at("unet"));
    c.frames = frame_config_from_json(h.at("frames"));
    c.seed = h.at("seed").get<std::uint64_t>();
    c.step = h.at("step").get<std::uint64_t>();
    c.epoch = h.at("epoch").get<std::uint64_t>();
    for (const auto& s : h.at("layout")) {
      const auto idx = c.params.add(s.at("name").get<std::string>(), nn::parse_slot_kind(s.at("kind")),
                                    s.at("shape").get<std::vector<std::size_t>>(), s.at("trainable").get<bool>());
      const auto& slot = c.params.slot(idx);
      if (slot.offset != s.at("offset").get<std::size_t>() || slot.count != s.at("count").get<std::size_t>())
        throw MalformedInput("checkpoint: layout table is inconsistent at '" + slot.name + "'");
      if (s.value("frozen", false)) c.params.set_frozen(slot.name, true);
    }
    // The stored layout must be the one this config builds.
    const auto expected = nn::make_unet_parameters<float>(c.unet, 0);
    if (expected.slots().size() != c.params.slots().size())
      throw MalformedInput("checkpoint: layout does not match the U-net config");
    for (std::size_t i = 0; i < expected.slots().size(); ++i)
      if (expected.slot(i).name != c.params.slot(i).name || expected.slot(i).shape != c.params.slot(i).shape)
        throw MalformedInput("checkpoint: layout does not match the U-net config at '" + c.params.slot(i).name + "'");
    if (h.contains("train")) c.train = train_config_from_json(h.at("train"));
    if (h.contains("adam")) {
      const auto& a = h.at("adam");
      AdamOptions o;
      o.learning_rate = a.at("learning_rate");
      o.beta1 = a.at("beta1");
      o.beta2 = a.at("beta2");
      o.epsilon = a.at("epsilon");
      AdamState<float> st(c.params.values().size(), o);
      st.step = a.at("step").get<std::uint64_t>();
      c.adam = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("checkpoint: bad header field: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw MalformedInput(std::string("checkpoint: ") + e.what());
  }

  const std::size_t n = c.params.values().size();
  const std::size_t sections = c.adam ? 3 : 1;
  const std::size_t data_at = 16 + hlen;
  if (bytes.size() - data_at != sections * n * sizeof(float))
    throw MalformedInput("checkpoint: data size does not match the layout table");
  const auto* p = bytes.data() + data_at;
  std::memcpy(c.params.values().data(), p, n * sizeof(float));
  if (c.adam) {
    std::memcpy(c.adam->first_moment.data(), p + n * sizeof(float), n * sizeof(float));
    std::memcpy(c.adam->second_moment.data(), p + 2 * n * sizeof(float), n * sizeof(float));
  }
  c.params.touch();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for '" + path.string() + "'");
}

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_all(path)); }

std::string fnv1a_hex(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_digest(const std::filesystem::path& path) { return fnv1a_hex(read_all(path)); }

}  // namespace dctse
