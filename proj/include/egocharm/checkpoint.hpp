#pragma once

// Checkpoint layout (all integers little-endian):
//   "EGCK" | u8 version | u32 header length | JSON header | f64 tensor payload | u32 CRC-32
// The CRC covers every preceding byte. The header lists tensors in payload order.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egocharm/models.hpp"

namespace egocharm {

inline constexpr std::uint8_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'E', 'G', 'C', 'K'};

struct Checkpoint {
  HierarchicalModel model;
  std::optional<ProbeHead> probe;
  std::vector<std::string> probe_class_names;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

inline void put_f64(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline std::uint32_t crc32_of(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len)));
}

inline nlohmann::json norm_to_json(const std::optional<NormStats>& norm) {
  if (!norm) return nullptr;
  return {{"mean", norm->mean}, {"std", norm->stddev}, {"degenerate", norm->degenerate}};
}

inline std::optional<NormStats> norm_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  s.degenerate = j.at("degenerate").get<std::vector<std::size_t>>();
  return s;
}

inline void append_group(nlohmann::json& list, std::string& payload, const std::string& group, const nn::ParamSet& ps) {
  for (const auto& p : ps) {
    list.push_back({{"group", group}, {"name", p.name}, {"shape", p.value.shape()}});
    for (double v : p.value.values()) put_f64(payload, v);
  }
}

}  // namespace detail

inline std::string serialize_checkpoint(const HierarchicalModel& model, const ProbeHead* probe = nullptr,
                                        const std::vector<std::string>& probe_class_names = {}) {
  nlohmann::json header;
  header["format"] = "egocharm-checkpoint";
  header["spec"] = to_key_values(model.spec());
  header["classes"] = model.class_names();
  header["norm"] = detail::norm_to_json(model.encoder().norm());
  header["tensors"] = nlohmann::json::array();
  std::string payload;
  detail::append_group(header["tensors"], payload, "encoder", model.encoder().params());
  detail::append_group(header["tensors"], payload, "head", model.head_params());
  if (probe) {
    header["probe"] = {{"classes", probe->classes()}, {"slope", probe->slope()}, {"class_names", probe_class_names}};
    detail::append_group(header["tensors"], payload, "probe", probe->params());
  } else {
    header["probe"] = nullptr;
  }
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += payload;
  detail::put_u32(out, detail::crc32_of(out, out.size()));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 13 || bytes.compare(0, 4, kCheckpointMagic, 4) != 0) fail(ErrorCode::CorruptCheckpoint, "missing checkpoint magic");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  require(version == kCheckpointVersion, ErrorCode::FormatVersionMismatch,
          "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  const std::size_t body = bytes.size() - 4;
  if (detail::get_u32(bytes, body) != detail::crc32_of(bytes, body)) fail(ErrorCode::CorruptCheckpoint, "checksum mismatch (truncated or modified file)");
  const std::size_t header_len = detail::get_u32(bytes, 5);
  if (9 + header_len > body) fail(ErrorCode::CorruptCheckpoint, "header length exceeds file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(9, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("unreadable header: ") + e.what());
  }

  try {
    ModelSpec spec = model_spec_from_key_values(header.at("spec").get<KeyValues>());
    Checkpoint ck{HierarchicalModel(spec), std::nullopt, {}};
    ck.model.class_names() = header.at("classes").get<std::vector<std::string>>();
    ck.model.encoder().set_norm(detail::norm_from_json(header.at("norm")));
    if (!header.at("probe").is_null()) {
      const auto& pj = header.at("probe");
      ck.probe.emplace(spec.encoder.embedding_dim, pj.at("classes").get<std::size_t>(), pj.at("slope").get<double>());
      ck.probe_class_names = pj.at("class_names").get<std::vector<std::string>>();
    }

    std::size_t pos = 9 + header_len;
    for (const auto& t : header.at("tensors")) {
      const std::string group = t.at("group").get<std::string>();
      const std::string name = t.at("name").get<std::string>();
      nn::ParamSet* ps = group == "encoder" ? &ck.model.encoder().params()
                         : group == "head"  ? &ck.model.head_params()
                         : (group == "probe" && ck.probe) ? &ck.probe->params()
                                                          : nullptr;
      if (!ps) fail(ErrorCode::CorruptCheckpoint, "tensor group '" + group + "' has no owner");
      nn::Param* p = ps->find(name);
      if (!p) fail(ErrorCode::CorruptCheckpoint, "tensor '" + name + "' does not belong to the architecture");
      if (t.at("shape").get<std::vector<std::size_t>>() != p->value.shape()) fail(ErrorCode::CorruptCheckpoint, "tensor '" + name + "' shape mismatch");
      if (pos + 8 * p->value.size() > body) fail(ErrorCode::CorruptCheckpoint, "payload shorter than header declares");
      for (auto& v : p->value.values()) {
        v = detail::get_f64(bytes, pos);
        pos += 8;
      }
    }
    if (pos != body) fail(ErrorCode::CorruptCheckpoint, "payload length does not match header");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, std::string("malformed header: ") + e.what());
  }
}

inline void save_model(const std::string& path, const HierarchicalModel& model, const ProbeHead* probe = nullptr,
                       const std::vector<std::string>& probe_class_names = {}) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  const std::string bytes = serialize_checkpoint(model, probe, probe_class_names);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path);
}

inline Checkpoint load_model(const std::string& path) { return deserialize_checkpoint(read_text_file(path)); }

}  // namespace egocharm
