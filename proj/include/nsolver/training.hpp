#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsolver/batch.hpp"
#include "nsolver/checkpoint.hpp"
#include "nsolver/model.hpp"
#include "nsolver/tasks/dataset.hpp"

namespace nsolver {

enum class OptimizerKind { adam, sgd };
NLOHMANN_JSON_SERIALIZE_ENUM(OptimizerKind, {{OptimizerKind::adam, "adam"}, {OptimizerKind::sgd, "sgd"}})

struct CurriculumConfig {
  std::vector<std::uint32_t> sizes;  // strictly ascending
  std::size_t epochs_per_size = 4;
  double replay_prob = 0.2;

  void validate() const {
    if (sizes.empty()) throw std::invalid_argument("curriculum needs at least one size");
    for (std::size_t i = 1; i < sizes.size(); ++i)
      if (sizes[i] <= sizes[i - 1]) throw std::invalid_argument("curriculum sizes must be strictly ascending");
    if (epochs_per_size < 1) throw std::invalid_argument("curriculum epochs_per_size must be >= 1");
    if (!(replay_prob >= 0.0 && replay_prob <= 1.0)) throw std::invalid_argument("replay_prob must lie in [0, 1]");
  }
  friend bool operator==(const CurriculumConfig&, const CurriculumConfig&) = default;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  std::vector<std::size_t> decay_schedule;  // epochs (1-based) after which lr *= decay_factor
  double decay_factor = 0.1;
  std::size_t epochs = 50;
  std::optional<double> grad_clip_norm = 2.0;
  double weight_decay = 2e-4;
  double dropout_std = 0.3;
  double dropout_gal = 0.4;
  std::optional<CurriculumConfig> curriculum;
  std::size_t train_iters = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t val_iters = 0;          // 0: same as train_iters
  std::size_t max_val_examples = 0;   // 0: whole validation split

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be a finite value >= 0");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw std::invalid_argument("grad_clip_norm must be > 0");
    if (!(dropout_std >= 0.0 && dropout_std < 1.0) || !(dropout_gal >= 0.0 && dropout_gal < 1.0)) {
      throw std::invalid_argument("dropout rates must lie in [0, 1)");
    }
    if (train_iters < 1) throw std::invalid_argument("train_iters must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (curriculum) curriculum->validate();
  }

  /// Per-task defaults (optimizer, lr, schedule, epochs, clipping, curriculum
  /// epochs, weight decay, dropout) for the named task.
  static TrainConfig for_task(const std::string& task);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline TrainConfig TrainConfig::for_task(const std::string& task) {
  const auto& info = tasks::task_info(task);
  TrainConfig t;
  auto curriculum = [&](std::size_t epochs_per_size) {
    return CurriculumConfig{info.train_sizes, epochs_per_size, 0.2};
  };
  if (task == "1s-maze") {
    t.lr = 1e-3, t.decay_schedule = {100}, t.decay_factor = 0.1, t.epochs = 150, t.curriculum = curriculum(8);
  } else if (task == "pong") {
    t.lr = 2.5e-4, t.epochs = 50, t.curriculum = curriculum(4);
  } else if (task == "goto" || task == "doorkey") {
    t.lr = 1e-3, t.epochs = 50, t.curriculum = curriculum(4);
  } else if (task == "prefix-sum") {
    t.lr = 1e-3, t.decay_schedule = {60, 100}, t.decay_factor = 0.01, t.epochs = 150, t.grad_clip_norm = 1.0;
  } else if (task == "maze" || task == "thin-maze") {
    t.lr = 1e-3, t.decay_schedule = {100}, t.decay_factor = 0.1, t.epochs = 150, t.grad_clip_norm.reset();
  } else if (task == "chess") {
    t.optimizer = OptimizerKind::sgd, t.lr = 1e-2, t.decay_schedule = {100, 110}, t.decay_factor = 0.01;
    t.epochs = 120, t.grad_clip_norm.reset(), t.dropout_std = 0.0, t.dropout_gal = 0.0;
  }
  return t;
}

/// Architecture used for a task; `width` 0 keeps the preset width.
inline SolverConfig default_solver_config(const std::string& task, std::size_t width = 0) {
  const auto& info = tasks::task_info(task);
  SolverConfig c;
  if (task == "prefix-sum") c = width ? SolverConfig::prefix_sum(width) : SolverConfig::prefix_sum();
  else if (task == "maze" || task == "thin-maze") c = width ? SolverConfig::maze(width) : SolverConfig::maze();
  else if (task == "chess") {
    c = SolverConfig::chess();
    if (width) c.width = width;
  } else c = width ? SolverConfig::different_size(info.classes, width) : SolverConfig::different_size(info.classes);
  c.task_rank = info.rank;
  c.in_channels = info.in_channels;
  return c;
}

inline void to_json(nlohmann::json& j, const CurriculumConfig& c) {
  j = {{"sizes", c.sizes}, {"epochs_per_size", c.epochs_per_size}, {"replay_prob", c.replay_prob}};
}
inline void from_json(const nlohmann::json& j, CurriculumConfig& c) {
  CurriculumConfig d;
  c.sizes = j.at("sizes").get<std::vector<std::uint32_t>>();
  c.epochs_per_size = j.value("epochs_per_size", d.epochs_per_size);
  c.replay_prob = j.value("replay_prob", d.replay_prob);
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = {{"optimizer", t.optimizer},
       {"lr", t.lr},
       {"decay_schedule", t.decay_schedule},
       {"decay_factor", t.decay_factor},
       {"epochs", t.epochs},
       {"grad_clip_norm", t.grad_clip_norm ? nlohmann::json(*t.grad_clip_norm) : nlohmann::json(nullptr)},
       {"weight_decay", t.weight_decay},
       {"dropout_std", t.dropout_std},
       {"dropout_gal", t.dropout_gal},
       {"curriculum", t.curriculum ? nlohmann::json(*t.curriculum) : nlohmann::json(nullptr)},
       {"train_iters", t.train_iters},
       {"batch_size", t.batch_size},
       {"seed", t.seed},
       {"val_iters", t.val_iters},
       {"max_val_examples", t.max_val_examples}};
}

/// Missing keys keep the values already in `t` (e.g. task defaults).
inline void merge_json(const nlohmann::json& j, TrainConfig& t) {
  if (j.contains("optimizer")) t.optimizer = j.at("optimizer").get<OptimizerKind>();
  t.lr = j.value("lr", t.lr);
  t.decay_schedule = j.value("decay_schedule", t.decay_schedule);
  t.decay_factor = j.value("decay_factor", t.decay_factor);
  t.epochs = j.value("epochs", t.epochs);
  if (j.contains("grad_clip_norm")) {
    t.grad_clip_norm = j["grad_clip_norm"].is_null() ? std::nullopt : std::optional<double>(j["grad_clip_norm"].get<double>());
  }
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.dropout_std = j.value("dropout_std", t.dropout_std);
  t.dropout_gal = j.value("dropout_gal", t.dropout_gal);
  if (j.contains("curriculum")) {
    t.curriculum = j["curriculum"].is_null() ? std::nullopt : std::optional(j["curriculum"].get<CurriculumConfig>());
  }
  t.train_iters = j.value("train_iters", t.train_iters);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.seed = j.value("seed", t.seed);
  t.val_iters = j.value("val_iters", t.val_iters);
  t.max_val_examples = j.value("max_val_examples", t.max_val_examples);
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
  t = TrainConfig{};
  merge_json(j, t);
}

// ------------------------------------------------------------------ curriculum

inline std::size_t curriculum_base_index(std::size_t epoch, const CurriculumConfig& c) {
  return std::min(epoch / c.epochs_per_size, c.sizes.size() - 1);
}

/// Size for one minibatch at a 0-based epoch: the scheduled size, or with
/// probability replay_prob a uniformly chosen strictly earlier size.
inline std::uint32_t curriculum_size_for_batch(std::size_t epoch, Rng& rng, const CurriculumConfig& c) {
  const std::size_t base = curriculum_base_index(epoch, c);
  if (base > 0 && bernoulli(rng, c.replay_prob)) return c.sizes[uniform_index(rng, base)];
  return c.sizes[base];
}

// ------------------------------------------------------------------ optimizers

template <class T>
using Gradients = std::vector<Tensor<T>>;

template <class T>
struct OptimizerState {
  std::vector<Tensor<T>> m, v;  // Adam moments, or SGD momentum in m
  std::size_t step = 0;
};

namespace detail {
template <class T>
void ensure_state(const ParameterSet<T>& p, OptimizerState<T>& s, bool second_moment) {
  if (s.m.size() == p.size()) return;
  s.m.clear(), s.v.clear();
  for (const auto& e : p) {
    s.m.emplace_back(e.value.shape());
    if (second_moment) s.v.emplace_back(e.value.shape());
  }
}
template <class T>
void check_grads(const ParameterSet<T>& p, const Gradients<T>& g) {
  if (g.size() != p.size()) throw ShapeError("gradient count does not match parameters");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i].shape() != p.tensor(i).shape()) throw ShapeError("gradient shape mismatch for " + p.entry(i).name);
}
}  // namespace detail

/// Adam (beta 0.9/0.999, eps 1e-8, bias-corrected) with decoupled weight decay.
template <class T>
void adam_step(ParameterSet<T>& p, const Gradients<T>& g, OptimizerState<T>& s, double lr, double weight_decay) {
  detail::check_grads(p, g);
  detail::ensure_state(p, s, true);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++s.step;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    T* w = p.tensor(i).data();
    T* m = s.m[i].data();
    T* v = s.v[i].data();
    const T* gi = g[i].data();
    for (std::size_t k = 0; k < g[i].size(); ++k) {
      m[k] = static_cast<T>(b1 * m[k] + (1 - b1) * gi[k]);
      v[k] = static_cast<T>(b2 * v[k] + (1 - b2) * gi[k] * gi[k]);
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      w[k] = static_cast<T>(w[k] - lr * weight_decay * w[k] - lr * update);
    }
  }
}

/// SGD with heavy-ball momentum and decoupled weight decay.
template <class T>
void sgd_step(ParameterSet<T>& p, const Gradients<T>& g, OptimizerState<T>& s, double lr, double weight_decay,
              double momentum = 0.9) {
  detail::check_grads(p, g);
  detail::ensure_state(p, s, false);
  ++s.step;
  for (std::size_t i = 0; i < p.size(); ++i) {
    T* w = p.tensor(i).data();
    T* m = s.m[i].data();
    const T* gi = g[i].data();
    for (std::size_t k = 0; k < g[i].size(); ++k) {
      m[k] = static_cast<T>(momentum * m[k] + gi[k]);
      w[k] = static_cast<T>(w[k] - lr * weight_decay * w[k] - lr * m[k]);
    }
  }
}

/// Rescales gradients so their global L2 norm is at most max_norm. Returns
/// the norm before clipping.
template <class T>
double clip_grad_norm(Gradients<T>& g, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("max_norm must be > 0");
  double sq = 0.0;
  for (const auto& t : g)
    for (T v : t.values()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& t : g)
      for (auto& v : t.span()) v = static_cast<T>(v * s);
  }
  return norm;
}

// ------------------------------------------------------------------ loss

/// Inverted-dropout mask (values 0 or 1/(1-rate)).
template <class T>
Tensor<T> dropout_mask(const Shape& shape, double rate, Rng& rng) {
  Tensor<T> m(shape, T{1});
  if (rate <= 0.0) return m;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& v : m.span()) v = bernoulli(rng, rate) ? T{0} : keep;
  return m;
}

template <class T>
struct BatchLoss {
  double loss = 0.0;
  Gradients<T> grads;
};

/// Final-iteration cross-entropy of one single-size batch and its gradient
/// w.r.t. every parameter. Dropout masks are drawn from `rng` when given.
template <class T>
BatchLoss<T> batch_loss(const SolverConfig& cfg, const ParameterSet<T>& params, std::span<const Example* const> batch,
                        std::size_t iters, double dropout_std, double dropout_gal, Rng* rng) {
  Tape<T> tape;
  SolverGraph<T> graph(tape, cfg, params, true);
  auto state = graph.begin(tape.constant(stack_inputs<T>(batch)));
  Shape hidden_shape = state.hidden[0].shape();
  std::optional<Var<T>> gal, std_mask;
  if (rng && dropout_gal > 0.0) gal = tape.constant(dropout_mask<T>(hidden_shape, dropout_gal, *rng));
  for (std::size_t t = 0; t < iters; ++t) state = graph.step(state, gal);
  if (rng && dropout_std > 0.0) std_mask = tape.constant(dropout_mask<T>(hidden_shape, dropout_std, *rng));
  const auto targets = stack_targets(batch);
  Var<T> loss = softmax_cross_entropy(graph.head(state.hidden.back(), std_mask), std::span<const std::uint32_t>(targets));
  tape.backward(loss);
  BatchLoss<T> out;
  out.loss = static_cast<double>(loss.value().item());
  for (const auto& v : graph.parameter_vars()) out.grads.push_back(v.grad());
  return out;
}

/// Exact-match accuracy (percent) after `iters` iterations, in fixed-size chunks.
template <class T>
double batched_accuracy(const SolverConfig& cfg, const ParameterSet<T>& params, const std::vector<const Example*>& examples,
                        std::size_t iters, std::size_t chunk = 64) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < examples.size(); lo += chunk) {
    std::span<const Example* const> part(examples.data() + lo, std::min(chunk, examples.size() - lo));
    rollout<T>(cfg, params, stack_inputs<T>(part), iters, 0, [&](std::size_t, const Tensor<T>& logits, const Tensor<T>&) {
      for (bool ok : exact_match(logits, part)) correct += ok;
    });
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(examples.size());
}

// ------------------------------------------------------------------ training loop

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::uint32_t size = 0; // scheduled (largest seen) size
  double loss = 0.0;      // mean training loss over the epoch's batches
  double val_acc = 0.0;
  double lr = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "epoch,size,loss,val_acc,lr\n";
    for (const auto& e : epochs) os << e.epoch << ',' << e.size << ',' << e.loss << ',' << e.val_acc << ',' << e.lr << '\n';
    return os.str();
  }
  nlohmann::json summary() const {
    return {{"epochs", epochs.size()},
            {"best_epoch", best_epoch},
            {"best_val_acc", best_val_acc},
            {"final_loss", epochs.empty() ? 0.0 : epochs.back().loss}};
  }
};

/// Index of the best score; ties go to the later entry.
inline std::size_t select_checkpoint(const std::vector<double>& history) {
  if (history.empty()) throw std::invalid_argument("empty validation history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i] >= history[best]) best = i;
  return best;
}

template <class T>
struct TrainResult {
  ParameterSet<T> final_params;
  ParameterSet<T> best_params;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Learning rate in effect during a 0-based epoch.
inline double scheduled_lr(const TrainConfig& t, std::size_t epoch) {
  double lr = t.lr;
  for (auto e : t.decay_schedule)
    if (epoch >= e) lr *= t.decay_factor;
  return lr;
}

template <class T>
TrainResult<T> train(const SolverConfig& cfg, ParameterSet<T> params, const tasks::Dataset& data, const TrainConfig& tc,
                     const EpochCallback& on_epoch = {}) {
  tc.validate();
  cfg.validate();
  const auto split = tasks::split_indices(data);
  std::map<std::uint32_t, std::vector<std::size_t>> train_by_size, val_by_size;
  for (auto i : split.train) train_by_size[data.examples[i].size].push_back(i);
  for (auto i : split.validation) val_by_size[data.examples[i].size].push_back(i);
  const std::vector<std::uint32_t> sizes = tc.curriculum ? tc.curriculum->sizes : data.manifest.sizes;
  for (auto s : sizes) {
    if (train_by_size[s].empty()) throw std::invalid_argument("dataset has no training examples of size " + std::to_string(s));
  }

  Rng rng(substream(tc.seed, "train"));
  OptimizerState<T> opt;
  TrainResult<T> result;
  result.best_params = params;
  // Accuracies are only comparable at one size, so the running history
  // restarts whenever the validation size grows.
  std::vector<double> history;
  std::size_t history_start = 0;
  std::uint32_t history_size = 0;
  // Per-size cursor over a reshuffled pool, so every example is visited.
  std::map<std::uint32_t, std::size_t> cursor;
  std::map<std::uint32_t, std::vector<std::size_t>> pool = train_by_size;
  for (auto& [s, v] : pool) shuffle(v.begin(), v.end(), rng);
  auto draw_batch = [&](std::uint32_t size) {
    auto& v = pool[size];
    std::vector<const Example*> batch;
    for (std::size_t k = 0; k < std::min(tc.batch_size, v.size()); ++k) {
      if (cursor[size] == v.size()) {
        shuffle(v.begin(), v.end(), rng);
        cursor[size] = 0;
      }
      batch.push_back(&data.examples[v[cursor[size]++]]);
    }
    return batch;
  };

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const double lr = scheduled_lr(tc, epoch);
    std::vector<std::uint32_t> plan;  // one size per batch
    std::uint32_t val_size = sizes.back();
    if (tc.curriculum) {
      val_size = tc.curriculum->sizes[curriculum_base_index(epoch, *tc.curriculum)];
      const std::size_t n = (train_by_size[val_size].size() + tc.batch_size - 1) / tc.batch_size;
      for (std::size_t b = 0; b < n; ++b) plan.push_back(curriculum_size_for_batch(epoch, rng, *tc.curriculum));
    } else {
      for (auto s : sizes)
        for (std::size_t b = 0; b < (train_by_size[s].size() + tc.batch_size - 1) / tc.batch_size; ++b) plan.push_back(s);
      shuffle(plan.begin(), plan.end(), rng);
    }

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto batch = draw_batch(plan[b]);
      BatchLoss<T> bl;
      try {
        bl = batch_loss<T>(cfg, params, batch, tc.train_iters, tc.dropout_std, tc.dropout_gal, &rng);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b + 1) +
                           " (size " + std::to_string(plan[b]) + "): " + e.what());
      }
      loss_sum += bl.loss;
      if (tc.grad_clip_norm) clip_grad_norm(bl.grads, *tc.grad_clip_norm);
      if (tc.optimizer == OptimizerKind::adam) adam_step(params, bl.grads, opt, lr, tc.weight_decay);
      else sgd_step(params, bl.grads, opt, lr, tc.weight_decay);
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params.tensor(i).all_finite()) {
          throw NumericError("parameter " + params.entry(i).name + " became non-finite at epoch " + std::to_string(epoch + 1));
        }
      }
    }

    std::vector<const Example*> val;
    const auto& vidx = val_by_size[val_size];
    const std::size_t nval = tc.max_val_examples ? std::min(tc.max_val_examples, vidx.size()) : vidx.size();
    for (std::size_t k = 0; k < nval; ++k) val.push_back(&data.examples[vidx[k]]);
    EpochRecord rec{epoch + 1, val_size, plan.empty() ? 0.0 : loss_sum / static_cast<double>(plan.size()),
                    batched_accuracy<T>(cfg, params, val, tc.val_iters ? tc.val_iters : tc.train_iters), lr};
    result.log.epochs.push_back(rec);
    if (rec.size != history_size) history.clear(), history_start = epoch, history_size = rec.size;
    history.push_back(rec.val_acc);
    if (history_start + select_checkpoint(history) == epoch) {
      result.best_params = params;
      result.log.best_epoch = epoch + 1;
      result.log.best_val_acc = rec.val_acc;
    }
    if (on_epoch) on_epoch(rec);
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace nsolver
