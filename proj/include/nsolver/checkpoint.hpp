#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "nsolver/io.hpp"
#include "nsolver/model.hpp"

namespace nsolver {

/// File layout: "NSCKPT\0\0" magic, u32 version, u64 header length, JSON
/// header, f32 parameters in registry order, u32 CRC32 of everything before.
struct Checkpoint {
  SolverConfig config;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double validation_accuracy = 0.0;
  nlohmann::json extra = nlohmann::json::object();  // free-form provenance (task, train config, ...)
  ParameterSet<float> params;
};

inline constexpr char kCheckpointMagic[8] = {'N', 'S', 'C', 'K', 'P', 'T', 0, 0};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& e : ck.params) shapes.push_back({{"name", e.name}, {"shape", e.value.shape()}});
  const nlohmann::json header{{"config", ck.config},
                              {"seed", ck.seed},
                              {"epoch", ck.epoch},
                              {"validation_accuracy", ck.validation_accuracy},
                              {"extra", ck.extra},
                              {"parameters", shapes}};
  const std::string text = header.dump();
  io::Writer w;
  for (char c : kCheckpointMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kCheckpointVersion);
  w.put<std::uint64_t>(text.size());
  w.put_string(text);
  for (const auto& e : ck.params)
    for (float v : e.value.values()) w.put(v);
  const std::uint32_t crc = io::crc32(w.bytes());
  w.put(crc);
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 24) throw FormatError("checkpoint: truncated");
  io::Reader tail(bytes.subspan(bytes.size() - 4), "checkpoint");
  if (tail.get<std::uint32_t>() != io::crc32(bytes.first(bytes.size() - 4))) throw FormatError("checkpoint: checksum mismatch");
  io::Reader r(bytes.first(bytes.size() - 4), "checkpoint");
  for (char c : kCheckpointMagic)
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) throw FormatError("checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string(r.get<std::uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  Checkpoint ck;
  ck.config = header.at("config").get<SolverConfig>();
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.epoch = header.at("epoch").get<std::size_t>();
  ck.validation_accuracy = header.at("validation_accuracy").get<double>();
  ck.extra = header.value("extra", nlohmann::json::object());
  const auto layout = parameter_layout(ck.config);
  const auto& listed = header.at("parameters");
  if (listed.size() != layout.size()) throw FormatError("checkpoint: parameter list does not match config");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (listed[i].at("name") != layout[i].name || listed[i].at("shape").get<Shape>() != layout[i].shape) {
      throw FormatError("checkpoint: parameter " + layout[i].name + " does not match config");
    }
    Tensor<float> t(layout[i].shape);
    for (auto& v : t.span()) v = r.get<float>();
    if (!t.all_finite()) throw FormatError("checkpoint: non-finite parameter in " + layout[i].name);
    ck.params.add(layout[i].name, std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace nsolver
