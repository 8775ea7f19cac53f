#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsolver/autodiff.hpp"
#include "nsolver/ops.hpp"
#include "nsolver/rng.hpp"
#include "nsolver/tensor.hpp"

namespace nsolver {

enum class CellKind { lstm, gru, resnet };
enum class Aggregation { none, max, avg };

NLOHMANN_JSON_SERIALIZE_ENUM(CellKind, {{CellKind::lstm, "lstm"}, {CellKind::gru, "gru"}, {CellKind::resnet, "resnet"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Aggregation,
                             {{Aggregation::none, "none"}, {Aggregation::max, "max"}, {Aggregation::avg, "avg"}})

/// Architecture hyperparameters. Dropout rates live here because they shape
/// the unrolled graph; they only take effect in training mode.
struct SolverConfig {
  int task_rank = 2;  // 1: sequences [C, L]; 2: grids [C, H, W]
  std::size_t in_channels = 3;
  std::size_t width = 64;
  std::array<std::size_t, 3> head_channels{64, 64, 4};
  CellKind cell = CellKind::lstm;
  std::size_t recurrent_layers = 1;
  Aggregation aggregation = Aggregation::max;
  bool use_layer_norm = true;
  bool use_input_projection = false;
  double dropout_std = 0.0;
  double dropout_gal = 0.0;

  std::size_t classes() const { return head_channels[2]; }
  bool same_size() const { return aggregation == Aggregation::none; }
  std::size_t kernel_taps() const { return task_rank == 1 ? 3 : 9; }

  void validate() const {
    if (task_rank != 1 && task_rank != 2) throw std::invalid_argument("task_rank must be 1 or 2");
    if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
    if (width < 1) throw std::invalid_argument("width must be >= 1");
    if (head_channels[0] < 1 || head_channels[1] < 1) throw std::invalid_argument("head widths must be >= 1");
    if (head_channels[2] < 2) throw std::invalid_argument("need at least two output classes");
    if (recurrent_layers < 1) throw std::invalid_argument("recurrent_layers must be >= 1");
    if (!(dropout_std >= 0.0 && dropout_std < 1.0) || !(dropout_gal >= 0.0 && dropout_gal < 1.0)) {
      throw std::invalid_argument("dropout rates must lie in [0, 1)");
    }
  }

  /// Shared architecture of the classification tasks (GoTo, 1S-Maze, Pong, Doorkey).
  static SolverConfig different_size(std::size_t classes, std::size_t width = 64) {
    SolverConfig c;
    c.width = width;
    c.head_channels = {width, width, classes};
    return c;
  }
  static SolverConfig prefix_sum(std::size_t width = 100) {
    SolverConfig c;
    c.task_rank = 1;
    c.in_channels = 1;
    c.width = width;
    c.head_channels = {width, width / 2 > 0 ? width / 2 : 1, 2};
    c.aggregation = Aggregation::none;
    return c;
  }
  static SolverConfig maze(std::size_t width = 32) {
    SolverConfig c;
    c.width = width;
    c.head_channels = {32, 8, 2};
    c.aggregation = Aggregation::none;
    return c;
  }
  static SolverConfig chess() {
    SolverConfig c;
    c.in_channels = 12;
    c.width = 128;
    c.head_channels = {32, 8, 2};
    c.aggregation = Aggregation::none;
    return c;
  }

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

inline void to_json(nlohmann::json& j, const SolverConfig& c) {
  j = nlohmann::json{{"task_rank", c.task_rank},
                     {"in_channels", c.in_channels},
                     {"width", c.width},
                     {"head_channels", c.head_channels},
                     {"cell", c.cell},
                     {"recurrent_layers", c.recurrent_layers},
                     {"aggregation", c.aggregation},
                     {"use_layer_norm", c.use_layer_norm},
                     {"use_input_projection", c.use_input_projection},
                     {"dropout_std", c.dropout_std},
                     {"dropout_gal", c.dropout_gal}};
}

inline void from_json(const nlohmann::json& j, SolverConfig& c) {
  SolverConfig d;
  c.task_rank = j.value("task_rank", d.task_rank);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.width = j.value("width", d.width);
  c.head_channels = j.value("head_channels", d.head_channels);
  c.cell = j.value("cell", d.cell);
  c.recurrent_layers = j.value("recurrent_layers", d.recurrent_layers);
  c.aggregation = j.value("aggregation", d.aggregation);
  c.use_layer_norm = j.value("use_layer_norm", d.use_layer_norm);
  c.use_input_projection = j.value("use_input_projection", d.use_input_projection);
  c.dropout_std = j.value("dropout_std", d.dropout_std);
  c.dropout_gal = j.value("dropout_gal", d.dropout_gal);
}

enum class ParamRole { kernel, bias, gain, shift };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role;
  std::size_t fan_in = 0;  // kernels only
};

/// Ordered parameter registry induced by a configuration. Order is the
/// checkpoint blob order.
inline std::vector<ParamSpec> parameter_layout(const SolverConfig& cfg) {
  cfg.validate();
  const std::size_t taps = cfg.kernel_taps();
  auto kernel_shape = [&](std::size_t out, std::size_t in) {
    return cfg.task_rank == 1 ? Shape{out, in, 3} : Shape{out, in, 3, 3};
  };
  std::vector<ParamSpec> specs;
  auto kernel = [&](std::string name, std::size_t out, std::size_t in) {
    specs.push_back({std::move(name), kernel_shape(out, in), ParamRole::kernel, in * taps});
  };
  auto vec = [&](std::string name, std::size_t n, ParamRole role) { specs.push_back({std::move(name), {n}, role, 0}); };
  auto norm = [&](const std::string& prefix, std::size_t n) {
    if (!cfg.use_layer_norm) return;
    vec(prefix + ".gamma", n, ParamRole::gain);
    vec(prefix + ".beta", n, ParamRole::shift);
  };

  const std::size_t w = cfg.width;
  std::size_t feed = cfg.in_channels;
  if (cfg.use_input_projection) {
    kernel("proj.w", w, cfg.in_channels);
    feed = w;
  }
  for (std::size_t l = 0; l < cfg.recurrent_layers; ++l) {
    const std::string p = "cell" + std::to_string(l);
    const std::size_t in = l == 0 ? feed : w;
    if (cfg.cell == CellKind::resnet) {
      kernel(p + ".w1", w, w + in);
      kernel(p + ".w2", w, w);
      continue;
    }
    const std::size_t gates = (cfg.cell == CellKind::lstm ? 4 : 3) * w;
    kernel(p + ".wx", gates, in);
    vec(p + ".bx", gates, ParamRole::bias);
    norm(p + ".ln_x", gates);
    kernel(p + ".wh", gates, w);
    vec(p + ".bh", gates, ParamRole::bias);
    norm(p + ".ln_h", gates);
    if (cfg.cell == CellKind::lstm) norm(p + ".ln_c", w);
  }
  kernel("head.w1", cfg.head_channels[0], w);
  kernel("head.w2", cfg.head_channels[1], cfg.head_channels[0]);
  kernel("head.w3", cfg.head_channels[2], cfg.head_channels[1]);
  return specs;
}

inline std::size_t count_parameters(const SolverConfig& cfg) {
  std::size_t total = 0;
  for (const auto& s : parameter_layout(cfg)) total += numel(s.shape);
  return total;
}

template <class T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  ParameterSet() = default;

  void add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Tensor<T>& tensor(std::size_t i) { return entries_.at(i).value; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_.at(i).value; }
  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }
  std::size_t index(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
    return it->second;
  }
  const Tensor<T>& operator[](std::string_view name) const { return entries_[index(name)].value; }
  Tensor<T>& operator[](std::string_view name) { return entries_[index(name)].value; }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Kaiming-uniform (fan-in, ReLU gain) kernels, zero biases except +1 on the
/// forget-gate block of the hidden-branch LSTM bias, unit LN gains, zero shifts.
template <class T>
ParameterSet<T> init_parameters(const SolverConfig& cfg, std::uint64_t seed) {
  ParameterSet<T> params;
  Rng rng(substream(seed, "init"));
  for (const auto& spec : parameter_layout(cfg)) {
    Tensor<T> t(spec.shape);
    switch (spec.role) {
      case ParamRole::kernel: {
        const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
        for (auto& v : t.span()) v = static_cast<T>(uniform(rng, -bound, bound));
        break;
      }
      case ParamRole::gain:
        t.fill(T{1});
        break;
      case ParamRole::bias:
        if (cfg.cell == CellKind::lstm && spec.name.ends_with(".bh")) {
          for (std::size_t i = cfg.width; i < 2 * cfg.width; ++i) t[i] = T{1};
        }
        break;
      case ParamRole::shift:
        break;
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

/// Recurrent state of a (possibly batched) rollout. Tensors are
/// [width, N, spatial...]; `cell` is empty for gru/resnet cells.
template <class T>
struct SolverState {
  std::vector<Var<T>> hidden;       // per recurrent layer
  std::vector<Var<T>> cell;         // per recurrent layer (lstm only)
  std::vector<Var<T>> input_branch; // per layer: precomputed normalized input conv (layer 0) or unused
  Var<T> recall{};                  // input fed to layer 0 (projected observation)
};

/// Records the solver's computation on a tape. Inputs are batched:
/// [C, N, L] for sequences or [C, N, H, W] for grids.
template <class T>
class SolverGraph {
 public:
  static constexpr T kNormEps = T(1e-5);

  SolverGraph(Tape<T>& tape, const SolverConfig& cfg, const ParameterSet<T>& params, bool track_params)
      : tape_(&tape), cfg_(cfg) {
    cfg_.validate();
    auto layout = parameter_layout(cfg_);
    if (layout.size() != params.size()) throw ShapeError("parameter set does not match configuration");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const auto& e = params.entry(i);
      if (e.name != layout[i].name || e.value.shape() != layout[i].shape) {
        throw ShapeError("parameter " + e.name + " does not match configuration");
      }
      vars_.emplace(e.name, track_params ? tape.leaf(e.value, true) : tape.borrow(e.value));
      order_.push_back(vars_.at(e.name));
    }
  }

  /// Parameter leaves in registry order (for reading gradients).
  const std::vector<Var<T>>& parameter_vars() const { return order_; }

  Var<T> param(const std::string& name) const { return vars_.at(name); }

  /// Substitutes another tape value for a named parameter.
  void override_param(const std::string& name, Var<T> v) {
    if (v.shape() != vars_.at(name).shape()) throw ShapeError("override of " + name + " changes its shape");
    vars_.at(name) = v;
  }

  Var<T> conv(Var<T> x, const std::string& w, std::optional<std::string> b = std::nullopt) const {
    std::optional<Var<T>> bias;
    if (b) bias = param(*b);
    return cfg_.task_rank == 1 ? conv1d_same(x, param(w), bias) : conv2d_same(x, param(w), bias);
  }

  Var<T> norm(Var<T> x, const std::string& prefix) const {
    if (!cfg_.use_layer_norm) return x;
    return layer_norm_channels(x, param(prefix + ".gamma"), param(prefix + ".beta"), kNormEps);
  }

  /// Zero state plus the input branch, computed once per observation.
  SolverState<T> begin(Var<T> input) const {
    const Shape& is = input.shape();
    const std::size_t want_rank = cfg_.task_rank == 1 ? 3 : 4;
    if (is.size() != want_rank || is[0] != cfg_.in_channels) {
      throw ShapeError("solver input must be [" + std::to_string(cfg_.in_channels) + (cfg_.task_rank == 1 ? ",N,L]" : ",N,H,W]") +
                       ", got " + to_string(is));
    }
    SolverState<T> s;
    s.recall = cfg_.use_input_projection ? relu(conv(input, "proj.w")) : input;
    Shape hs = is;
    hs[0] = cfg_.width;
    for (std::size_t l = 0; l < cfg_.recurrent_layers; ++l) {
      s.hidden.push_back(tape_->constant(Tensor<T>(hs)));
      if (cfg_.cell == CellKind::lstm) s.cell.push_back(tape_->constant(Tensor<T>(hs)));
    }
    if (cfg_.cell != CellKind::resnet) {
      s.input_branch.push_back(norm(conv(s.recall, "cell0.wx", "cell0.bx"), "cell0.ln_x"));
    }
    return s;
  }

  /// One recurrent iteration. `gal_mask`, when given, multiplies the hidden
  /// state entering each hidden-branch convolution (same mask every step).
  SolverState<T> step(const SolverState<T>& s, std::optional<Var<T>> gal_mask = std::nullopt) const {
    SolverState<T> next = s;
    Var<T> below = s.recall;
    for (std::size_t l = 0; l < cfg_.recurrent_layers; ++l) {
      const std::string p = "cell" + std::to_string(l);
      Var<T> h = s.hidden[l];
      Var<T> h_in = gal_mask ? mul(h, *gal_mask) : h;
      switch (cfg_.cell) {
        case CellKind::lstm: {
          Var<T> xin = l == 0 ? s.input_branch[0] : norm(conv(below, p + ".wx", p + ".bx"), p + ".ln_x");
          Var<T> pre = add(xin, norm(conv(h_in, p + ".wh", p + ".bh"), p + ".ln_h"));
          const std::size_t w = cfg_.width;
          Var<T> i = sigmoid(slice_channels(pre, 0, w));
          Var<T> f = sigmoid(slice_channels(pre, w, w));
          Var<T> g = tanh(slice_channels(pre, 2 * w, w));
          Var<T> o = sigmoid(slice_channels(pre, 3 * w, w));
          Var<T> c = add(mul(f, s.cell[l]), mul(i, g));
          next.cell[l] = c;
          next.hidden[l] = mul(o, tanh(norm(c, p + ".ln_c")));
          break;
        }
        case CellKind::gru: {
          Var<T> xin = l == 0 ? s.input_branch[0] : norm(conv(below, p + ".wx", p + ".bx"), p + ".ln_x");
          Var<T> hb = norm(conv(h_in, p + ".wh", p + ".bh"), p + ".ln_h");
          const std::size_t w = cfg_.width;
          Var<T> z = sigmoid(add(slice_channels(xin, 0, w), slice_channels(hb, 0, w)));
          Var<T> r = sigmoid(add(slice_channels(xin, w, w), slice_channels(hb, w, w)));
          Var<T> n = tanh(add(slice_channels(xin, 2 * w, w), mul(r, slice_channels(hb, 2 * w, w))));
          // h' = n + z * (h - n)  ==  (1 - z) * n + z * h
          next.hidden[l] = add(n, mul(z, sub(h, n)));
          break;
        }
        case CellKind::resnet: {
          Var<T> u = relu(conv(concat_channels(h_in, l == 0 ? s.recall : below), p + ".w1"));
          next.hidden[l] = add(h, relu(conv(u, p + ".w2")));
          break;
        }
      }
      below = next.hidden[l];
    }
    return next;
  }

  /// Processing module on the top hidden state: three convolutions with ReLU
  /// after the first two, then optional global pooling to [classes, N].
  Var<T> head(Var<T> h, std::optional<Var<T>> dropout_mask = std::nullopt) const {
    Var<T> x = dropout_mask ? mul(h, *dropout_mask) : h;
    Var<T> p = conv(relu(conv(relu(conv(x, "head.w1")), "head.w2")), "head.w3");
    switch (cfg_.aggregation) {
      case Aggregation::none:
        return p;
      case Aggregation::max:
        return global_max_pool(p, 2);
      case Aggregation::avg:
        return global_avg_pool(p, 2);
    }
    return p;
  }

  const SolverConfig& config() const { return cfg_; }

 private:
  Tape<T>* tape_;
  SolverConfig cfg_;
  std::map<std::string, Var<T>> vars_;
  std::vector<Var<T>> order_;
};

/// Adds a batch axis of extent 1 after the channel axis.
template <class T>
Tensor<T> as_batch(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("expected a [C, spatial...] tensor, got " + to_string(x.shape()));
  Shape s = x.shape();
  s.insert(s.begin() + 1, 1);
  return x.reshaped(std::move(s));
}

/// Drops the batch axis of a tensor whose batch extent is 1.
template <class T>
Tensor<T> drop_batch(const Tensor<T>& x) {
  if (x.rank() < 2 || x.dim(1) != 1) throw ShapeError("expected batch extent 1, got " + to_string(x.shape()));
  Shape s = x.shape();
  s.erase(s.begin() + 1);
  return x.reshaped(std::move(s));
}

/// Materialized recurrent state, detached from any tape.
template <class T>
struct StateValues {
  std::vector<Tensor<T>> hidden;
  std::vector<Tensor<T>> cell;
  Tensor<T> input_branch;
  Tensor<T> recall;
};

/// h_0 = c_0 = 0 together with the precomputed input branch of a batched input.
template <class T>
StateValues<T> initial_state(const SolverConfig& cfg, const ParameterSet<T>& params, const Tensor<T>& batched_input) {
  Tape<T> tape;
  SolverGraph<T> graph(tape, cfg, params, false);
  auto s = graph.begin(tape.borrow(batched_input));
  StateValues<T> v;
  v.recall = s.recall.value();
  if (!s.input_branch.empty()) v.input_branch = s.input_branch[0].value();
  for (auto& h : s.hidden) v.hidden.push_back(h.value());
  for (auto& c : s.cell) v.cell.push_back(c.value());
  return v;
}

/// One recurrent iteration without gradient tracking. When `logits` is
/// non-null the processing head is applied to the new top hidden state.
template <class T>
StateValues<T> cell_step(const SolverConfig& cfg, const ParameterSet<T>& params, const StateValues<T>& state,
                         Tensor<T>* logits = nullptr) {
  Tape<T> tape;
  SolverGraph<T> graph(tape, cfg, params, false);
  SolverState<T> s;
  s.recall = tape.borrow(state.recall);
  if (cfg.cell != CellKind::resnet) s.input_branch.push_back(tape.borrow(state.input_branch));
  for (auto& h : state.hidden) s.hidden.push_back(tape.borrow(h));
  for (auto& c : state.cell) s.cell.push_back(tape.borrow(c));
  if (s.hidden.size() != cfg.recurrent_layers || (cfg.cell == CellKind::lstm && s.cell.size() != cfg.recurrent_layers)) {
    throw ShapeError("state does not match configuration");
  }
  auto next = graph.step(s);
  if (logits) *logits = graph.head(next.hidden.back()).value();
  StateValues<T> out;
  out.recall = state.recall;
  out.input_branch = state.input_branch;
  for (auto& h : next.hidden) out.hidden.push_back(h.value());
  for (auto& c : next.cell) out.cell.push_back(c.value());
  return out;
}

/// Called at each emitted iteration t (1-based) with the batched logits and
/// the top hidden state.
template <class T>
using RolloutVisitor = std::function<void(std::size_t t, const Tensor<T>& logits, const Tensor<T>& hidden)>;

/// Inference rollout over a batched input. Each iteration runs on a fresh
/// tape, so memory does not grow with the iteration count. `every` = 0 emits
/// only the final iteration; otherwise every `every`-th iteration and the last.
template <class T>
void rollout(const SolverConfig& cfg, const ParameterSet<T>& params, const Tensor<T>& batched_input,
             std::size_t n_iters, std::size_t every, const RolloutVisitor<T>& visit) {
  if (n_iters < 1) throw std::invalid_argument("n_iters must be >= 1");
  StateValues<T> state = initial_state(cfg, params, batched_input);
  Tensor<T> logits;
  for (std::size_t t = 1; t <= n_iters; ++t) {
    const bool emit = t == n_iters || (every > 0 && t % every == 0);
    state = cell_step(cfg, params, state, emit ? &logits : nullptr);
    if (emit) visit(t, logits, state.hidden.back());
  }
}

struct Emit {
  std::size_t every = 0;  // 0: final iteration only
  static Emit final_only() { return {0}; }
  static Emit every_k(std::size_t k) { return {k}; }
};

/// Unbatched inference: input [C, L] or [C, H, W]; returns raw logits
/// ([classes, spatial...] or [classes]) at each emission point.
template <class T>
std::vector<Tensor<T>> forward(const SolverConfig& cfg, const ParameterSet<T>& params, const Tensor<T>& input,
                               std::size_t n_iters, Emit emit = Emit::final_only()) {
  std::vector<Tensor<T>> out;
  rollout<T>(cfg, params, as_batch(input), n_iters, emit.every,
             [&](std::size_t, const Tensor<T>& logits, const Tensor<T>&) { out.push_back(drop_batch(logits)); });
  return out;
}

/// For every iteration t, the per-position L2 norm over channels of
/// h_t - h_final, scaled by the sequence-wide maximum into [0, 1].
template <class T>
std::vector<Tensor<T>> propagation_diff(const SolverConfig& cfg, const ParameterSet<T>& params, const Tensor<T>& input,
                                        std::size_t n_iters) {
  if (n_iters < 2) throw std::invalid_argument("propagation_diff needs n_iters >= 2");
  std::vector<Tensor<T>> states;
  rollout<T>(cfg, params, as_batch(input), n_iters, 1,
             [&](std::size_t, const Tensor<T>&, const Tensor<T>& h) { states.push_back(drop_batch(h)); });
  const Tensor<T>& last = states.back();
  const std::size_t C = last.dim(0);
  const std::size_t P = last.size() / C;
  Shape map_shape(last.shape().begin() + 1, last.shape().end());
  std::vector<Tensor<T>> maps;
  T peak{0};
  for (const auto& h : states) {
    Tensor<T> m(map_shape);
    for (std::size_t p = 0; p < P; ++p) {
      T acc{0};
      for (std::size_t c = 0; c < C; ++c) {
        const T d = h[c * P + p] - last[c * P + p];
        acc += d * d;
      }
      m[p] = std::sqrt(acc);
      peak = std::max(peak, m[p]);
    }
    maps.push_back(std::move(m));
  }
  if (peak > T{0}) {
    for (auto& m : maps) {
      for (auto& v : m.span()) v /= peak;
    }
  }
  return maps;
}

/// Convolution multiply-accumulates of one training forward pass at the given
/// (unbatched) input shape: projection and input branch once, recurrent
/// convolutions every iteration, processing head once on the final state.
inline std::uint64_t count_macs(const SolverConfig& cfg, const Shape& input_shape, std::size_t n_iters) {
  cfg.validate();
  if (input_shape.size() != static_cast<std::size_t>(cfg.task_rank) + 1) {
    throw ShapeError("input shape rank does not match task rank");
  }
  const std::uint64_t positions = numel(Shape(input_shape.begin() + 1, input_shape.end()));
  const std::uint64_t taps = cfg.kernel_taps();
  auto conv = [&](std::uint64_t out, std::uint64_t in) { return out * in * taps * positions; };
  const std::uint64_t w = cfg.width;
  std::uint64_t once = 0, per_iter = 0;
  std::uint64_t feed = cfg.in_channels;
  if (cfg.use_input_projection) {
    once += conv(w, cfg.in_channels);
    feed = w;
  }
  for (std::size_t l = 0; l < cfg.recurrent_layers; ++l) {
    const std::uint64_t in = l == 0 ? feed : w;
    if (cfg.cell == CellKind::resnet) {
      per_iter += conv(w, w + in) + conv(w, w);
      continue;
    }
    const std::uint64_t gates = (cfg.cell == CellKind::lstm ? 4 : 3) * w;
    (l == 0 ? once : per_iter) += conv(gates, in);
    per_iter += conv(gates, w);
  }
  once += conv(cfg.head_channels[0], w) + conv(cfg.head_channels[1], cfg.head_channels[0]) +
          conv(cfg.head_channels[2], cfg.head_channels[1]);
  return once + per_iter * n_iters;
}

}  // namespace nsolver
