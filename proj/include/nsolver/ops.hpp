#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "nsolver/autodiff.hpp"
#include "nsolver/error.hpp"
#include "nsolver/tensor.hpp"

namespace nsolver {

enum class Activation { sigmoid, tanh, relu };

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

/// Activations are [Cin, N, H, W]; the kernel is kh x kw with "same" zero padding.
struct ConvGeometry {
  std::size_t cin, cout, n, h, w, kh, kw;
  std::size_t plane() const { return h * w; }
  std::size_t columns() const { return n * h * w; }
  std::size_t patch() const { return cin * kh * kw; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t hw = g.plane();
  const std::size_t cols = g.columns();
  const long ph = static_cast<long>(g.kh / 2);
  const long pw = static_cast<long>(g.kw / 2);
  const long H = static_cast<long>(g.h);
  const long W = static_cast<long>(g.w);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((ci * g.kh + ky) * g.kw + kx) * cols;
        const long dy = static_cast<long>(ky) - ph;
        const long dx = static_cast<long>(kx) - pw;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(W, W - dx);
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* src = x + (ci * g.n + n) * hw;
          T* dst = row + n * hw;
          for (long y = 0; y < H; ++y) {
            T* out = dst + y * W;
            const long sy = y + dy;
            if (sy < 0 || sy >= H || x0 >= x1) {
              std::fill(out, out + W, T{0});
              continue;
            }
            std::fill(out, out + x0, T{0});
            std::copy(src + sy * W + x0 + dx, src + sy * W + x1 + dx, out + x0);
            std::fill(out + x1, out + W, T{0});
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t hw = g.plane();
  const std::size_t cols = g.columns();
  const long ph = static_cast<long>(g.kh / 2);
  const long pw = static_cast<long>(g.kw / 2);
  const long H = static_cast<long>(g.h);
  const long W = static_cast<long>(g.w);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((ci * g.kh + ky) * g.kw + kx) * cols;
        const long dy = static_cast<long>(ky) - ph;
        const long dx = static_cast<long>(kx) - pw;
        const long x0 = std::max(0L, -dx);
        const long x1 = std::min(W, W - dx);
        if (x0 >= x1) continue;
        for (std::size_t n = 0; n < g.n; ++n) {
          T* dst = x + (ci * g.n + n) * hw;
          const T* src = row + n * hw;
          for (long y = 0; y < H; ++y) {
            const long sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            T* out = dst + sy * W + dx;
            const T* in = src + y * W;
            for (long xx = x0; xx < x1; ++xx) out[xx] += in[xx];
          }
        }
      }
    }
  }
}

template <class T>
Var<T> conv_same(Var<T> x, Var<T> w, std::optional<Var<T>> b, ConvGeometry g, Shape out_shape) {
  Tape<T>& tape = *x.tape;
  const std::size_t cols = g.columns();
  thread_local AlignedVector<T> col;
  col.resize(g.patch() * cols);
  im2col(x.value().data(), g, col.data());
  Tensor<T> out(std::move(out_shape));
  ConstMatrixMap<T> wm(w.value().data(), g.cout, g.patch());
  ConstMatrixMap<T> cm(col.data(), g.patch(), cols);
  MatrixMap<T> om(out.data(), g.cout, cols);
  om.noalias() = wm * cm;
  if (b) {
    const T* bias = b->value().data();
    for (std::size_t co = 0; co < g.cout; ++co) om.row(co).array() += bias[co];
  }
  const std::size_t xid = x.id, wid = w.id;
  const std::optional<std::size_t> bid = b ? std::optional<std::size_t>(b->id) : std::nullopt;
  auto backward = [g, xid, wid, bid](Tape<T>& t, const Tensor<T>& gy) {
    const std::size_t cols = g.columns();
    ConstMatrixMap<T> gm(gy.data(), g.cout, cols);
    if (t.requires_grad(wid)) {
      thread_local AlignedVector<T> col;
      col.resize(g.patch() * cols);
      im2col(t.value(xid).data(), g, col.data());
      ConstMatrixMap<T> cm(col.data(), g.patch(), cols);
      MatrixMap<T> gw(t.grad_buffer(wid).data(), g.cout, g.patch());
      gw.noalias() += gm * cm.transpose();
    }
    if (bid && t.requires_grad(*bid)) {
      T* gb = t.grad_buffer(*bid).data();
      for (std::size_t co = 0; co < g.cout; ++co) gb[co] += gm.row(co).sum();
    }
    if (t.requires_grad(xid)) {
      thread_local AlignedVector<T> gcol;
      gcol.resize(g.patch() * cols);
      MatrixMap<T> gc(gcol.data(), g.patch(), cols);
      ConstMatrixMap<T> wm(t.value(wid).data(), g.cout, g.patch());
      gc.noalias() = wm.transpose() * gm;
      col2im_add(gcol.data(), g, t.grad_buffer(xid).data());
    }
  };
  if (b) return tape.record(std::move(out), {x, w, *b}, std::move(backward));
  return tape.record(std::move(out), {x, w}, std::move(backward));
}

inline void check_bias(const std::optional<Shape>& bias, std::size_t cout) {
  if (bias && (bias->size() != 1 || (*bias)[0] != cout)) {
    throw ShapeError("conv bias must have shape [" + std::to_string(cout) + "], got " + to_string(*bias));
  }
}

}  // namespace detail

/// 2-D convolution, 3x3 kernel, stride 1, zero padding 1. Accepts
/// x = [Cin, H, W] or batched [Cin, N, H, W]; w = [Cout, Cin, 3, 3].
template <class T>
Var<T> conv2d_same(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> b = std::nullopt) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 && xs.size() != 4) throw ShapeError("conv2d_same: input must be [C,H,W] or [C,N,H,W]");
  if (ws.size() != 4 || ws[2] != 3 || ws[3] != 3) throw ShapeError("conv2d_same: kernel must be [Cout,Cin,3,3]");
  if (ws[1] != xs[0]) {
    throw ShapeError("conv2d_same: input has " + std::to_string(xs[0]) + " channels, kernel expects " +
                     std::to_string(ws[1]));
  }
  const bool batched = xs.size() == 4;
  detail::ConvGeometry g{xs[0], ws[0], batched ? xs[1] : 1, xs[xs.size() - 2], xs[xs.size() - 1], 3, 3};
  if (g.h == 0 || g.w == 0) throw ShapeError("conv2d_same: empty spatial extent");
  detail::check_bias(b ? std::optional<Shape>(b->shape()) : std::nullopt, g.cout);
  Shape out = xs;
  out[0] = g.cout;
  return detail::conv_same(x, w, b, g, std::move(out));
}

/// 1-D convolution, length-3 kernel, stride 1, zero padding 1. Accepts
/// x = [Cin, L] or batched [Cin, N, L]; w = [Cout, Cin, 3].
template <class T>
Var<T> conv1d_same(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> b = std::nullopt) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 && xs.size() != 3) throw ShapeError("conv1d_same: input must be [C,L] or [C,N,L]");
  if (ws.size() != 3 || ws[2] != 3) throw ShapeError("conv1d_same: kernel must be [Cout,Cin,3]");
  if (ws[1] != xs[0]) {
    throw ShapeError("conv1d_same: input has " + std::to_string(xs[0]) + " channels, kernel expects " +
                     std::to_string(ws[1]));
  }
  const bool batched = xs.size() == 3;
  detail::ConvGeometry g{xs[0], ws[0], batched ? xs[1] : 1, 1, xs.back(), 1, 3};
  if (g.w == 0) throw ShapeError("conv1d_same: empty length");
  detail::check_bias(b ? std::optional<Shape>(b->shape()) : std::nullopt, g.cout);
  Shape out = xs;
  out[0] = g.cout;
  return detail::conv_same(x, w, b, g, std::move(out));
}

/// Standardizes the channel vector at every position independently, then
/// applies the per-channel affine map. Statistics never span positions.
template <class T>
Var<T> layer_norm_channels(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  const Shape& xs = x.shape();
  if (xs.empty() || xs[0] == 0) throw ShapeError("layer_norm_channels: need at least one channel");
  if (!(eps > T{0})) throw std::invalid_argument("layer_norm_channels: eps must be positive");
  const std::size_t C = xs[0];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw ShapeError("layer_norm_channels: gamma/beta must have shape [" + std::to_string(C) + "]");
  }
  const std::size_t P = x.value().size() / C;
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  auto xhat = std::make_shared<std::vector<T>>(C * P);
  auto rstd = std::make_shared<std::vector<T>>(P);
  std::vector<T> mean(P, T{0}), var(P, T{0});
  for (std::size_t c = 0; c < C; ++c) {
    const T* row = xv + c * P;
    for (std::size_t p = 0; p < P; ++p) mean[p] += row[p];
  }
  const T inv_c = T{1} / static_cast<T>(C);
  for (auto& m : mean) m *= inv_c;
  for (std::size_t c = 0; c < C; ++c) {
    const T* row = xv + c * P;
    for (std::size_t p = 0; p < P; ++p) {
      const T d = row[p] - mean[p];
      var[p] += d * d;
    }
  }
  for (std::size_t p = 0; p < P; ++p) (*rstd)[p] = T{1} / std::sqrt(var[p] * inv_c + eps);
  Tensor<T> out(xs);
  T* ov = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    const T* row = xv + c * P;
    T* xh = xhat->data() + c * P;
    T* o = ov + c * P;
    for (std::size_t p = 0; p < P; ++p) {
      xh[p] = (row[p] - mean[p]) * (*rstd)[p];
      o[p] = gv[c] * xh[p] + bv[c];
    }
  }
  const std::size_t xid = x.id, gid = gamma.id, bid = beta.id;
  return x.tape->record(std::move(out), {x, gamma, beta},
                        [C, P, xid, gid, bid, xhat, rstd](Tape<T>& t, const Tensor<T>& gy) {
                          const T* g = gy.data();
                          const T* xh = xhat->data();
                          if (t.requires_grad(gid)) {
                            T* gg = t.grad_buffer(gid).data();
                            for (std::size_t c = 0; c < C; ++c) {
                              T acc{0};
                              for (std::size_t p = 0; p < P; ++p) acc += g[c * P + p] * xh[c * P + p];
                              gg[c] += acc;
                            }
                          }
                          if (t.requires_grad(bid)) {
                            T* gb = t.grad_buffer(bid).data();
                            for (std::size_t c = 0; c < C; ++c) {
                              T acc{0};
                              for (std::size_t p = 0; p < P; ++p) acc += g[c * P + p];
                              gb[c] += acc;
                            }
                          }
                          if (t.requires_grad(xid)) {
                            const T* gam = t.value(gid).data();
                            std::vector<T> m1(P, T{0}), m2(P, T{0});
                            for (std::size_t c = 0; c < C; ++c) {
                              for (std::size_t p = 0; p < P; ++p) {
                                const T d = g[c * P + p] * gam[c];
                                m1[p] += d;
                                m2[p] += d * xh[c * P + p];
                              }
                            }
                            const T inv_c = T{1} / static_cast<T>(C);
                            T* gx = t.grad_buffer(xid).data();
                            for (std::size_t c = 0; c < C; ++c) {
                              for (std::size_t p = 0; p < P; ++p) {
                                const T d = g[c * P + p] * gam[c];
                                gx[c * P + p] +=
                                    (*rstd)[p] * (d - m1[p] * inv_c - xh[c * P + p] * m2[p] * inv_c);
                              }
                            }
                          }
                        });
}

namespace detail {

template <class T>
T stable_sigmoid(T v) {
  if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

}  // namespace detail

/// Elementwise sigmoid, tanh or relu.
template <class T>
Var<T> pointwise(Var<T> x, Activation f) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  const std::size_t n = xv.size();
  const T* in = xv.data();
  T* o = out.data();
  using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
  switch (f) {
    case Activation::sigmoid:
      // float uses Eigen's vectorized kernels; double keeps libm for gradient checks
      if constexpr (std::is_same_v<T, float>) ArrayMap(o, n) = ConstArrayMap(in, n).logistic();
      else for (std::size_t i = 0; i < n; ++i) o[i] = detail::stable_sigmoid(in[i]);
      break;
    case Activation::tanh:
      if constexpr (std::is_same_v<T, float>) ArrayMap(o, n) = ConstArrayMap(in, n).tanh();
      else for (std::size_t i = 0; i < n; ++i) o[i] = std::tanh(in[i]);
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
      break;
  }
  auto* tape = x.tape;
  const std::size_t xid = x.id;
  // The output id is known once recorded; the rule reads it back from the tape.
  const std::size_t yid = tape->size();
  return tape->record(std::move(out), {x}, [f, xid, yid](Tape<T>& t, const Tensor<T>& gy) {
    const T* y = t.value(yid).data();
    const T* g = gy.data();
    const std::size_t n = gy.size();
    T* gx = t.grad_buffer(xid).data();
    switch (f) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (T{1} - y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (T{1} - y[i] * y[i]);
        break;
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] > T{0} ? g[i] : T{0};
        break;
    }
  });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  return pointwise(x, Activation::sigmoid);
}
template <class T>
Var<T> tanh(Var<T> x) {
  return pointwise(x, Activation::tanh);
}
template <class T>
Var<T> relu(Var<T> x) {
  return pointwise(x, Activation::relu);
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.value());
  const T* bv = b.value().data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](Tape<T>& t, const Tensor<T>& gy) {
    for (std::size_t id : {aid, bid}) {
      if (!t.requires_grad(id)) continue;
      T* g = t.grad_buffer(id).data();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.value());
  const T* bv = b.value().data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] -= bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](Tape<T>& t, const Tensor<T>& gy) {
    if (t.requires_grad(aid)) {
      T* g = t.grad_buffer(aid).data();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
    if (t.requires_grad(bid)) {
      T* g = t.grad_buffer(bid).data();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] -= gy[i];
    }
  });
}

/// Elementwise (Hadamard) product.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.value());
  const T* bv = b.value().data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] *= bv[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->record(std::move(out), {a, b}, [aid, bid](Tape<T>& t, const Tensor<T>& gy) {
    if (t.requires_grad(aid)) {
      const T* other = t.value(bid).data();
      T* g = t.grad_buffer(aid).data();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * other[i];
    }
    if (t.requires_grad(bid)) {
      const T* other = t.value(aid).data();
      T* g = t.grad_buffer(bid).data();
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * other[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T s) {
  Tensor<T> out(x.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, s](Tape<T>& t, const Tensor<T>& gy) {
    T* g = t.grad_buffer(xid).data();
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += s * gy[i];
  });
}

/// Channels [begin, begin+count) of x along dimension 0.
template <class T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count) {
  const Shape& xs = x.shape();
  if (xs.empty() || begin + count > xs[0]) throw ShapeError("slice_channels: range out of bounds");
  const std::size_t stride = x.value().size() / xs[0];
  Shape os = xs;
  os[0] = count;
  const T* src = x.value().data() + begin * stride;
  Tensor<T> out(std::move(os), std::vector<T>(src, src + count * stride));
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, begin, stride](Tape<T>& t, const Tensor<T>& gy) {
    T* g = t.grad_buffer(xid).data() + begin * stride;
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
  });
}

/// Stacks a and b along dimension 0.
template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != bs.size() || as.empty() || !std::equal(as.begin() + 1, as.end(), bs.begin() + 1)) {
    throw ShapeError("concat_channels: incompatible shapes " + to_string(as) + " and " + to_string(bs));
  }
  Shape os = as;
  os[0] = as[0] + bs[0];
  AlignedVector<T> data;
  data.reserve(a.value().size() + b.value().size());
  data.insert(data.end(), a.value().values().begin(), a.value().values().end());
  data.insert(data.end(), b.value().values().begin(), b.value().values().end());
  const std::size_t aid = a.id, bid = b.id, na = a.value().size();
  return a.tape->record(Tensor<T>(std::move(os), std::move(data)), {a, b},
                        [aid, bid, na](Tape<T>& t, const Tensor<T>& gy) {
                          if (t.requires_grad(aid)) {
                            T* g = t.grad_buffer(aid).data();
                            for (std::size_t i = 0; i < na; ++i) g[i] += gy[i];
                          }
                          if (t.requires_grad(bid)) {
                            T* g = t.grad_buffer(bid).data();
                            for (std::size_t i = na; i < gy.size(); ++i) g[i - na] += gy[i];
                          }
                        });
}

/// Sum of all elements, as a scalar.
template <class T>
Var<T> sum(Var<T> x) {
  T acc{0};
  for (T v : x.value().values()) acc += v;
  const std::size_t xid = x.id;
  return x.tape->record(Tensor<T>::scalar(acc), {x}, [xid](Tape<T>& t, const Tensor<T>& gy) {
    Tensor<T>& g = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[0];
  });
}

namespace detail {

inline std::size_t pooled_blocks(const Shape& xs, std::size_t keep, const char* op) {
  if (xs.size() < keep || keep == 0) throw ShapeError(std::string(op) + ": rank too small");
  for (std::size_t i = keep; i < xs.size(); ++i) {
    if (xs[i] == 0) throw ShapeError(std::string(op) + ": empty spatial extent");
  }
  return std::accumulate(xs.begin(), xs.begin() + static_cast<long>(keep), std::size_t{1}, std::multiplies<>{});
}

}  // namespace detail

/// Maximum over all trailing dimensions after the first `keep` ones
/// ([C, ...] -> [C] by default; [C, N, ...] -> [C, N] with keep = 2).
/// The gradient goes to the first maximal element in row-major order.
template <class T>
Var<T> global_max_pool(Var<T> x, std::size_t keep = 1) {
  const Shape& xs = x.shape();
  const std::size_t blocks = detail::pooled_blocks(xs, keep, "global_max_pool");
  const std::size_t span = x.value().size() / blocks;
  auto argmax = std::make_shared<std::vector<std::size_t>>(blocks);
  Tensor<T> out(Shape(xs.begin(), xs.begin() + static_cast<long>(keep)));
  const T* v = x.value().data();
  for (std::size_t b = 0; b < blocks; ++b) {
    const T* block = v + b * span;
    std::size_t best = 0;
    for (std::size_t i = 1; i < span; ++i) {
      if (block[i] > block[best]) best = i;
    }
    (*argmax)[b] = b * span + best;
    out[b] = block[best];
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, argmax](Tape<T>& t, const Tensor<T>& gy) {
    T* g = t.grad_buffer(xid).data();
    for (std::size_t b = 0; b < argmax->size(); ++b) g[(*argmax)[b]] += gy[b];
  });
}

/// Mean over all trailing dimensions after the first `keep` ones.
template <class T>
Var<T> global_avg_pool(Var<T> x, std::size_t keep = 1) {
  const Shape& xs = x.shape();
  const std::size_t blocks = detail::pooled_blocks(xs, keep, "global_avg_pool");
  const std::size_t span = x.value().size() / blocks;
  Tensor<T> out(Shape(xs.begin(), xs.begin() + static_cast<long>(keep)));
  const T* v = x.value().data();
  const T inv = T{1} / static_cast<T>(span);
  for (std::size_t b = 0; b < blocks; ++b) {
    T acc{0};
    for (std::size_t i = 0; i < span; ++i) acc += v[b * span + i];
    out[b] = acc * inv;
  }
  const std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x}, [xid, span, inv](Tape<T>& t, const Tensor<T>& gy) {
    T* g = t.grad_buffer(xid).data();
    for (std::size_t b = 0; b < gy.size(); ++b) {
      for (std::size_t i = 0; i < span; ++i) g[b * span + i] += gy[b] * inv;
    }
  });
}

/// Mean cross-entropy of softmax over dimension 0. logits is [K] with one
/// target, or [K, positions...] with one target per position (row-major over
/// the trailing dimensions, batch included).
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const std::uint32_t> targets) {
  const Shape& ls = logits.shape();
  if (ls.empty() || ls[0] < 1) throw ShapeError("softmax_cross_entropy: logits need a class dimension");
  const std::size_t K = ls[0];
  const std::size_t M = logits.value().size() / K;
  if (targets.size() != M) {
    throw ShapeError("softmax_cross_entropy: expected " + std::to_string(M) + " targets, got " +
                     std::to_string(targets.size()));
  }
  for (auto t : targets) {
    if (t >= K) throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(t) + " not in [0," +
                                        std::to_string(K) + ")");
  }
  const T* z = logits.value().data();
  auto probs = std::make_shared<std::vector<T>>(K * M);
  auto labels = std::make_shared<std::vector<std::uint32_t>>(targets.begin(), targets.end());
  T total{0};
  for (std::size_t m = 0; m < M; ++m) {
    T mx = z[m];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, z[k * M + m]);
    T s{0};
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k * M + m] - mx);
    const T lse = mx + std::log(s);
    total += lse - z[(*labels)[m] * M + m];
    for (std::size_t k = 0; k < K; ++k) (*probs)[k * M + m] = std::exp(z[k * M + m] - lse);
  }
  const std::size_t lid = logits.id;
  return logits.tape->record(Tensor<T>::scalar(total / static_cast<T>(M)), {logits},
                             [lid, K, M, probs, labels](Tape<T>& t, const Tensor<T>& gy) {
                               const T s = gy[0] / static_cast<T>(M);
                               T* g = t.grad_buffer(lid).data();
                               for (std::size_t k = 0; k < K; ++k) {
                                 for (std::size_t m = 0; m < M; ++m) g[k * M + m] += s * (*probs)[k * M + m];
                               }
                               for (std::size_t m = 0; m < M; ++m) g[(*labels)[m] * M + m] -= s;
                             });
}

template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::uint32_t target) {
  const std::uint32_t t[1] = {target};
  return softmax_cross_entropy(logits, std::span<const std::uint32_t>(t, 1));
}

}  // namespace nsolver
