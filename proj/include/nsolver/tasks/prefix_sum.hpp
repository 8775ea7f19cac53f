#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nsolver/tasks/common.hpp"

namespace nsolver::tasks {

/// Cumulative XOR of a bit string.
inline std::vector<std::uint32_t> prefix_parity(const std::vector<std::uint32_t>& bits) {
  std::vector<std::uint32_t> out(bits.size());
  std::uint32_t acc = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) out[i] = acc ^= (bits[i] & 1u);
  return out;
}

/// Input [1, L] of random bits, per-position target its prefix parity.
inline Example make_prefix_sum(std::uint32_t length, std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("prefix-sum length must be >= 1");
  Rng rng(seed);
  std::vector<std::uint32_t> bits(length);
  for (auto& b : bits) b = static_cast<std::uint32_t>(rng() >> 63);
  Example ex;
  ex.size = length;
  ex.input = Tensor<float>({1, length});
  for (std::size_t i = 0; i < length; ++i) ex.input[i] = static_cast<float>(bits[i]);
  ex.target = prefix_parity(bits);
  return ex;
}

/// Recomputes the target from the rendered bits.
inline bool check_prefix_sum(const Example& ex) {
  if (ex.input.rank() != 2 || ex.input.dim(0) != 1 || ex.target.size() != ex.input.dim(1)) return false;
  std::vector<std::uint32_t> bits(ex.input.dim(1));
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (ex.input[i] != 0.0f && ex.input[i] != 1.0f) return false;
    bits[i] = ex.input[i] != 0.0f;
  }
  return prefix_parity(bits) == ex.target;
}

}  // namespace nsolver::tasks
