#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsolver/io.hpp"
#include "nsolver/rng.hpp"
#include "nsolver/tasks/registry.hpp"

namespace nsolver::tasks {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kExampleLayout =
    "per example: u32 size, u32 rank, u32 dims[rank], f32 input[prod(dims)], u32 n_target, u32 target[n_target]";

struct DatasetManifest {
  std::string task;
  std::vector<std::uint32_t> sizes;
  std::map<std::uint32_t, std::size_t> counts;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::vector<std::uint64_t> offsets;  // byte offset of each example in examples.bin
  std::uint64_t bytes = 0;
  std::uint32_t crc32 = 0;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [s, c] : counts) n += c;
    return n;
  }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [s, c] : m.counts) counts[std::to_string(s)] = c;
  j = {{"format_version", kDatasetFormatVersion},
       {"task", m.task},
       {"sizes", m.sizes},
       {"counts", counts},
       {"seed", m.seed},
       {"split", {{"train", m.train_fraction}, {"validation", 1.0 - m.train_fraction}}},
       {"dtype", {{"input", "f32le"}, {"target", "u32le"}}},
       {"layout", kExampleLayout},
       {"bytes", m.bytes},
       {"crc32", m.crc32},
       {"offsets", m.offsets}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
  if (j.at("format_version").get<int>() != kDatasetFormatVersion) throw FormatError("unsupported dataset format version");
  m.task = j.at("task").get<std::string>();
  m.sizes = j.at("sizes").get<std::vector<std::uint32_t>>();
  m.counts.clear();
  for (const auto& [k, v] : j.at("counts").items()) m.counts[static_cast<std::uint32_t>(std::stoul(k))] = v.get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.train_fraction = j.at("split").at("train").get<double>();
  m.offsets = j.at("offsets").get<std::vector<std::uint64_t>>();
  m.bytes = j.at("bytes").get<std::uint64_t>();
  m.crc32 = j.at("crc32").get<std::uint32_t>();
}

/// Examples are stored grouped by size, in ascending size order.
struct Dataset {
  DatasetManifest manifest;
  std::vector<Example> examples;

  std::vector<std::size_t> indices_of_size(std::uint32_t size) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (examples[i].size == size) out.push_back(i);
    return out;
  }
};

/// Generates `count` examples at every size.
inline Dataset generate_dataset(const std::string& task, std::vector<std::uint32_t> sizes, std::size_t count,
                                std::uint64_t seed, std::size_t workers = 1) {
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  Dataset d;
  d.manifest.task = task;
  d.manifest.sizes = sizes;
  d.manifest.seed = seed;
  for (auto s : sizes) {
    auto part = generate(task, s, count, substream(seed, "data"), workers);
    d.manifest.counts[s] = part.size();
    for (auto& e : part) d.examples.push_back(std::move(e));
  }
  return d;
}

struct Split {
  std::vector<std::size_t> train, validation;
};

/// Per-size deterministic shuffle; the first train_fraction of each size is
/// for training. Both index lists come back sorted.
inline Split split_indices(const Dataset& d) {
  Split out;
  for (auto s : d.manifest.sizes) {
    auto idx = d.indices_of_size(s);
    Rng rng(derive_seed(substream(d.manifest.seed, "split"), {s}));
    shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(d.manifest.train_fraction * static_cast<double>(idx.size())));
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.insert(out.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

inline void write_dataset(Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::Writer w;
  d.manifest.offsets.clear();
  for (const auto& ex : d.examples) {
    d.manifest.offsets.push_back(w.size());
    w.put<std::uint32_t>(ex.size);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ex.input.rank()));
    for (auto e : ex.input.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
    for (float v : ex.input.values()) w.put(v);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ex.target.size()));
    for (auto t : ex.target) w.put(t);
  }
  d.manifest.bytes = w.size();
  d.manifest.crc32 = io::crc32(w.bytes());
  io::write_file(dir / "examples.bin", w.bytes());
  io::write_text(dir / "manifest.json", nlohmann::json(d.manifest).dump(2) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  try {
    d.manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json")).get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  const auto& m = d.manifest;
  const auto bytes = io::read_file(dir / "examples.bin");
  if (bytes.size() != m.bytes) throw FormatError("examples.bin size does not match the manifest");
  if (io::crc32(bytes) != m.crc32) throw FormatError("examples.bin checksum mismatch");
  if (m.offsets.size() != m.total()) throw FormatError("offset count does not match example counts");
  io::Reader r(bytes, "examples.bin");
  for (std::size_t i = 0; i < m.offsets.size(); ++i) {
    if (m.offsets[i] != r.pos()) throw FormatError("example " + std::to_string(i) + " offset mismatch");
    Example ex;
    ex.size = r.get<std::uint32_t>();
    Shape shape(r.get<std::uint32_t>());
    for (auto& e : shape) e = r.get<std::uint32_t>();
    std::vector<float> data(numel(shape));
    for (auto& v : data) v = r.get<float>();
    ex.input = Tensor<float>(std::move(shape), std::move(data));
    ex.target.resize(r.get<std::uint32_t>());
    for (auto& t : ex.target) t = r.get<std::uint32_t>();
    d.examples.push_back(std::move(ex));
  }
  if (r.remaining() != 0) throw FormatError("examples.bin has trailing bytes");
  std::map<std::uint32_t, std::size_t> seen;
  for (const auto& ex : d.examples) ++seen[ex.size];
  if (seen != m.counts) throw FormatError("example sizes do not match manifest counts");
  return d;
}

}  // namespace nsolver::tasks
