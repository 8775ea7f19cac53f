#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "nsolver/autodiff.hpp"
#include "nsolver/tensor.hpp"

namespace nsolver {

/// Builds a scalar on the given tape from the leaf holding the probed input.
template <class T>
using ScalarFn = std::function<Var<T>(Tape<T>&, Var<T>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the reverse-mode gradient of f at x against central differences,
/// coordinate by coordinate. The error at a coordinate is
/// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries from
/// dominating.
template <class T>
GradCheckResult finite_diff_check(const ScalarFn<T>& f, const Tensor<T>& x, T eps = T(1e-5), T floor = T(1e-3)) {
  Tensor<T> analytic;
  {
    Tape<T> tape;
    Var<T> in = tape.leaf(x);
    Var<T> out = f(tape, in);
    tape.backward(out);
    analytic = tape.grad(in.id);
  }
  auto eval = [&f](const Tensor<T>& probe) {
    Tape<T> tape;
    Var<T> in = tape.leaf(probe, false);
    return f(tape, in).value().item();
  };
  GradCheckResult result;
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T up = eval(probe);
    probe[i] = orig - eps;
    const T down = eval(probe);
    probe[i] = orig;
    const T numeric = (up - down) / (T{2} * eps);
    const T a = analytic[i];
    const T denom = std::max({std::abs(a), std::abs(numeric), floor});
    const double err = static_cast<double>(std::abs(a - numeric) / denom);
    if (err > result.max_rel_error || i == 0) {
      result = GradCheckResult{err, i, static_cast<double>(a), static_cast<double>(numeric)};
    }
  }
  return result;
}

}  // namespace nsolver
