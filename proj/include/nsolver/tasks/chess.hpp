#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include "nsolver/tasks/common.hpp"

namespace nsolver::tasks {

/// Contents of a version 1.x NumPy array file, widened to double.
struct NpyArray {
  Shape shape;
  std::vector<double> data;
};

inline NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw FormatError(path.string() + ": not an .npy file");
  std::uint32_t header_len = 0;
  if (magic[6] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), header_len)) throw FormatError(path.string() + ": truncated header");

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr':\s*'([<|>]?)([a-z])(\d+)')"))) {
    throw FormatError(path.string() + ": header lacks descr");
  }
  const char kind = m[2].str()[0];
  const int width = std::stoi(m[3]);
  if (m[1] == ">" && width > 1) throw FormatError(path.string() + ": big-endian arrays are not supported");
  if (std::regex_search(header, std::regex(R"('fortran_order':\s*True)"))) {
    throw FormatError(path.string() + ": Fortran-ordered arrays are not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape':\s*\(([^)]*)\))"))) throw FormatError(path.string() + ": header lacks shape");
  NpyArray a;
  const std::string dims = m[1];
  const std::regex digits(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), digits), end; it != end; ++it) {
    a.shape.push_back(std::stoull(it->str()));
  }
  const std::size_t count = numel(a.shape);
  std::vector<char> raw(count * static_cast<std::size_t>(width));
  if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) throw FormatError(path.string() + ": truncated data");
  a.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = raw.data() + i * width;
    auto load = [p]<class U>(U) { U v; std::memcpy(&v, p, sizeof v); return static_cast<double>(v); };
    if ((kind == 'u' || kind == 'b') && width == 1) a.data[i] = load(std::uint8_t{});
    else if (kind == 'i' && width == 1) a.data[i] = load(std::int8_t{});
    else if (kind == 'i' && width == 4) a.data[i] = load(std::int32_t{});
    else if (kind == 'i' && width == 8) a.data[i] = load(std::int64_t{});
    else if (kind == 'f' && width == 4) a.data[i] = load(float{});
    else if (kind == 'f' && width == 8) a.data[i] = load(double{});
    else throw FormatError(path.string() + ": unsupported dtype " + m.str());
  }
  return a;
}

/// Chess puzzles from `inputs.npy` [N, 12, 8, 8] (piece planes) and
/// `targets.npy` [N, 8, 8] (binary move mask).
inline std::vector<Example> load_chess(const std::filesystem::path& dir) {
  const NpyArray x = read_npy(dir / "inputs.npy");
  const NpyArray y = read_npy(dir / "targets.npy");
  if (x.shape.size() != 4 || x.shape[1] != 12 || x.shape[2] != 8 || x.shape[3] != 8) {
    throw FormatError("chess inputs must be [N,12,8,8], got " + to_string(x.shape));
  }
  if (y.shape.size() != 3 || y.shape[0] != x.shape[0] || y.shape[1] != 8 || y.shape[2] != 8) {
    throw FormatError("chess targets must be [N,8,8], got " + to_string(y.shape));
  }
  std::vector<Example> out(x.shape[0]);
  for (std::size_t n = 0; n < out.size(); ++n) {
    auto& ex = out[n];
    ex.size = 8;
    ex.input = Tensor<float>({12, 8, 8});
    for (std::size_t i = 0; i < 768; ++i) ex.input[i] = static_cast<float>(x.data[n * 768 + i]);
    ex.target.resize(64);
    for (std::size_t i = 0; i < 64; ++i) {
      const double v = y.data[n * 64 + i];
      if (v != 0.0 && v != 1.0) throw FormatError("chess targets must be binary");
      ex.target[i] = v != 0.0;
    }
  }
  return out;
}

}  // namespace nsolver::tasks
