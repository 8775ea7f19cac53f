#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "nsolver/model.hpp"
#include "nsolver/tasks/common.hpp"

namespace nsolver {

using tasks::Example;

/// Stacks same-shaped example inputs into [C, N, spatial...].
template <class T>
Tensor<T> stack_inputs(std::span<const Example* const> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Shape& s0 = batch[0]->input.shape();
  const std::size_t C = s0[0];
  const std::size_t P = batch[0]->input.size() / C;
  Shape out_shape = s0;
  out_shape.insert(out_shape.begin() + 1, batch.size());
  Tensor<T> out(out_shape);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n]->input.shape() != s0) throw ShapeError("batch mixes input shapes " + to_string(s0) + " and " + to_string(batch[n]->input.shape()));
    const float* src = batch[n]->input.data();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[(c * batch.size() + n) * P + p] = static_cast<T>(src[c * P + p]);
  }
  return out;
}

/// Targets in the [N, positions] order of batched logits.
inline std::vector<std::uint32_t> stack_targets(std::span<const Example* const> batch) {
  std::vector<std::uint32_t> out;
  for (const auto* ex : batch) out.insert(out.end(), ex->target.begin(), ex->target.end());
  return out;
}

/// Per-example exact-match correctness of batched logits [K, N, positions...]:
/// an example counts only if every position's argmax equals its target.
template <class T>
std::vector<bool> exact_match(const Tensor<T>& logits, std::span<const Example* const> batch) {
  const std::size_t K = logits.dim(0), N = logits.dim(1);
  if (N != batch.size()) throw ShapeError("logits batch does not match examples");
  const std::size_t P = logits.size() / (K * N);
  std::vector<bool> ok(N, true);
  for (std::size_t n = 0; n < N; ++n) {
    if (batch[n]->target.size() != P) throw ShapeError("target length does not match logits");
    for (std::size_t p = 0; p < P && ok[n]; ++p) {
      std::uint32_t best = 0;
      for (std::uint32_t k = 1; k < K; ++k)
        if (logits[(k * N + n) * P + p] > logits[(best * N + n) * P + p]) best = k;
      ok[n] = best == batch[n]->target[p];
    }
  }
  return ok;
}

/// Argmax class per example of pooled logits [K, N].
template <class T>
std::vector<std::uint32_t> argmax_classes(const Tensor<T>& logits) {
  const std::size_t K = logits.dim(0), N = logits.dim(1);
  std::vector<std::uint32_t> out(N, 0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::uint32_t k = 1; k < K; ++k)
      if (logits[k * N + n] > logits[out[n] * N + n]) out[n] = k;
  return out;
}

}  // namespace nsolver
