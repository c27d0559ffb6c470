#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mdembed/error.hpp"
#include "mdembed/model.hpp"
#include "mdembed/vocab.hpp"

namespace mdembed {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

inline std::uint32_t crc32(const void* data, std::size_t len,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(data);
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

template <typename S>
constexpr const char* precision_tag() {
  if constexpr (sizeof(S) == 4)
    return "f32";
  else
    return "f64";
}

}  // namespace detail

struct CheckpointMeta {
  std::string objective = "none";
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const CheckpointMeta& m) {
  j = nlohmann::json{{"objective", m.objective}, {"step", m.step},
                     {"seed", m.seed}};
}
inline void from_json(const nlohmann::json& j, CheckpointMeta& m) {
  j.at("objective").get_to(m.objective);
  j.at("step").get_to(m.step);
  j.at("seed").get_to(m.seed);
}

inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'E', 'M',
                                             'B', 'D', '0', '1'};
inline constexpr int kCheckpointVersion = 1;

// Checkpoint file: 8-byte magic, u32 little-endian header length, a JSON
// header (config, block directory with offsets and per-block CRC32, training
// metadata, vocabulary), then the raw little-endian parameter payload.
// Saving and loading are bit-exact round trips.
template <typename S>
void save_checkpoint(const std::string& path, const TransformerModel<S>& model,
                     const std::vector<std::string>& vocab_words,
                     const CheckpointMeta& meta) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["precision"] = detail::precision_tag<S>();
  header["config"] = model.config();
  header["meta"] = meta;
  header["vocab"] = vocab_words;

  auto params = model.all_parameters();
  nlohmann::json blocks = nlohmann::json::array();
  std::vector<char> payload;
  for (const auto& [name, p] : params) {
    const auto& v = p.value();
    std::size_t bytes = v.size() * sizeof(S);
    nlohmann::json b;
    b["name"] = name;
    b["offset"] = payload.size();
    b["numel"] = v.size();
    b["crc32"] = detail::crc32(v.data(), bytes);
    blocks.push_back(b);
    std::size_t off = payload.size();
    payload.resize(off + bytes);
    std::memcpy(payload.data() + off, v.data(), bytes);
  }
  header["blocks"] = blocks;

  nlohmann::json lora = nlohmann::json::array();
  for (const auto& [target, ad] : model.adapters())
    lora.push_back({{"target", target}, {"rank", ad.rank},
                    {"alpha", ad.alpha}});
  header["lora"] = lora;

  std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("save_checkpoint: cannot open '" + path + "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::uint32_t hlen = std::uint32_t(hs.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), std::streamsize(hs.size()));
  out.write(payload.data(), std::streamsize(payload.size()));
  if (!out) throw io_error("save_checkpoint: write failed for '" + path + "'");
}

template <typename S>
struct LoadedCheckpoint {
  TransformerModel<S> model;
  std::vector<std::string> vocab_words;
  CheckpointMeta meta;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_checkpoint: cannot open '" + path + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  if (raw.size() < sizeof(kCheckpointMagic) + sizeof(std::uint32_t))
    throw integrity_error("load_checkpoint: file too short");
  if (std::memcmp(raw.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw format_error("load_checkpoint: bad magic, not a checkpoint file");
  std::uint32_t hlen;
  std::memcpy(&hlen, raw.data() + sizeof(kCheckpointMagic), sizeof(hlen));
  std::size_t header_off = sizeof(kCheckpointMagic) + sizeof(hlen);
  if (raw.size() < header_off + hlen)
    throw integrity_error("load_checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(raw.begin() + header_off,
                                   raw.begin() + header_off + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("load_checkpoint: bad header JSON: ") +
                       e.what());
  }
  if (header.at("format_version").get<int>() != kCheckpointVersion)
    throw format_error("load_checkpoint: unsupported format version " +
                       header.at("format_version").dump());
  if (header.at("precision").get<std::string>() != detail::precision_tag<S>())
    throw config_error("load_checkpoint: precision mismatch, file holds " +
                       header.at("precision").get<std::string>() +
                       " but caller expects " + detail::precision_tag<S>());

  ModelConfig cfg = header.at("config").get<ModelConfig>();
  TransformerModel<S> model(cfg);
  Rng adapter_rng(0);
  for (const auto& l : header.at("lora"))
    model.attach_lora_target(l.at("target").get<std::string>(),
                             l.at("rank").get<std::int32_t>(),
                             l.at("alpha").get<double>(), adapter_rng);

  const char* payload = raw.data() + header_off + hlen;
  std::size_t payload_size = raw.size() - header_off - hlen;

  auto params = model.all_parameters();
  const auto& blocks = header.at("blocks");
  if (blocks.size() != params.size())
    throw config_error("load_checkpoint: block count " +
                       std::to_string(blocks.size()) +
                       " does not match the configured architecture (" +
                       std::to_string(params.size()) + " blocks)");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& b = blocks[i];
    auto& [name, p] = params[i];
    if (b.at("name").get<std::string>() != name)
      throw config_error("load_checkpoint: block '" +
                         b.at("name").get<std::string>() +
                         "' does not match expected '" + name + "'");
    std::size_t numel = b.at("numel").get<std::size_t>();
    if (numel != p.numel())
      throw config_error("load_checkpoint: block '" + name + "' holds " +
                         std::to_string(numel) +
                         " values but the config expects " +
                         std::to_string(p.numel()));
    std::size_t offset = b.at("offset").get<std::size_t>();
    std::size_t bytes = numel * sizeof(S);
    if (offset + bytes > payload_size)
      throw integrity_error("load_checkpoint: block '" + name +
                            "' extends past end of file (truncated?)");
    std::memcpy(p.value().data(), payload + offset, bytes);
    if (detail::crc32(p.value().data(), bytes) !=
        b.at("crc32").get<std::uint32_t>())
      throw integrity_error("load_checkpoint: checksum failure in block '" +
                            name + "'");
  }

  LoadedCheckpoint<S> out{std::move(model),
                          header.at("vocab").get<std::vector<std::string>>(),
                          header.at("meta").get<CheckpointMeta>()};
  return out;
}

}  // namespace mdembed
