#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsolver/batch.hpp"
#include "nsolver/io.hpp"
#include "nsolver/model.hpp"
#include "nsolver/parallel.hpp"
#include "nsolver/tasks/doorkey.hpp"
#include "nsolver/tasks/registry.hpp"

namespace nsolver {

struct EvalReport {
  std::string task;
  std::vector<std::uint32_t> train_sizes;
  std::uint32_t eval_size = 0;
  std::size_t max_iters = 0;
  std::size_t examples = 0;
  std::vector<std::size_t> iterations;  // emitted iterations, ascending, last = max_iters
  std::vector<double> curve;            // accuracy (%) at each emitted iteration
  double best_accuracy = 0.0;
  std::size_t best_iteration = 0;
  std::map<std::string, double> per_seed;  // optional breakdown (seed -> best accuracy)

  double accuracy_at(std::size_t iteration) const {
    auto it = std::find(iterations.begin(), iterations.end(), iteration);
    if (it == iterations.end()) throw std::out_of_range("iteration " + std::to_string(iteration) + " not in curve");
    return curve[static_cast<std::size_t>(it - iterations.begin())];
  }

  std::string curve_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "iteration,accuracy\n";
    for (std::size_t i = 0; i < curve.size(); ++i) os << iterations[i] << ',' << curve[i] << '\n';
    return os.str();
  }
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"task", r.task},
       {"train_sizes", r.train_sizes},
       {"eval_size", r.eval_size},
       {"max_iters", r.max_iters},
       {"examples", r.examples},
       {"iterations", r.iterations},
       {"curve", r.curve},
       {"best_accuracy", r.best_accuracy},
       {"best_iteration", r.best_iteration},
       {"per_seed", r.per_seed}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.task = j.at("task").get<std::string>();
  r.train_sizes = j.at("train_sizes").get<std::vector<std::uint32_t>>();
  r.eval_size = j.at("eval_size").get<std::uint32_t>();
  r.max_iters = j.at("max_iters").get<std::size_t>();
  r.examples = j.at("examples").get<std::size_t>();
  r.iterations = j.at("iterations").get<std::vector<std::size_t>>();
  r.curve = j.at("curve").get<std::vector<double>>();
  r.best_accuracy = j.at("best_accuracy").get<double>();
  r.best_iteration = j.at("best_iteration").get<std::size_t>();
  r.per_seed = j.value("per_seed", std::map<std::string, double>{});
}

/// Receives batched logits ([K, N, positions...] or pooled [K, N]) at each
/// emitted iteration t.
using LogitsVisitor = std::function<void(std::size_t t, const Tensor<float>& logits)>;

/// Anything that maps a single-size batch to logits per emitted iteration.
/// `every` follows rollout(): 0 emits the final iteration only.
using BatchPredictor = std::function<void(std::span<const Example* const> batch, std::size_t max_iters, std::size_t every,
                                          const LogitsVisitor& visit)>;

inline BatchPredictor model_predictor(const SolverConfig& cfg, const ParameterSet<float>& params) {
  return [&cfg, &params](std::span<const Example* const> batch, std::size_t max_iters, std::size_t every,
                         const LogitsVisitor& visit) {
    rollout<float>(cfg, params, stack_inputs<float>(batch), max_iters, every,
                   [&](std::size_t t, const Tensor<float>& logits, const Tensor<float>&) { visit(t, logits); });
  };
}

struct EvalOptions {
  std::size_t every = 1;        // curve resolution in iterations
  std::size_t chunk = 32;       // examples per forward batch
  std::size_t workers = 1;
};

/// Exact-match accuracy of every example at every emitted iteration. Chunks
/// are fixed before work is split, and per-chunk counts are summed in chunk
/// order, so the report does not depend on the worker count.
inline EvalReport evaluate_with(const BatchPredictor& predict, const std::vector<Example>& examples, std::size_t max_iters,
                                const EvalOptions& opt = {}) {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (examples.empty()) throw std::invalid_argument("nothing to evaluate");
  if (opt.chunk < 1) throw std::invalid_argument("chunk must be >= 1");
  std::vector<std::size_t> iterations;
  for (std::size_t t = 1; t <= max_iters; ++t)
    if (t == max_iters || (opt.every > 0 && t % opt.every == 0)) iterations.push_back(t);

  // Examples of different sizes cannot share a batch.
  std::map<std::uint32_t, std::vector<const Example*>> by_size;
  for (const auto& e : examples) by_size[e.size].push_back(&e);
  std::vector<std::vector<const Example*>> chunks;
  for (auto& [size, list] : by_size)
    for (std::size_t lo = 0; lo < list.size(); lo += opt.chunk)
      chunks.emplace_back(list.begin() + static_cast<std::ptrdiff_t>(lo),
                          list.begin() + static_cast<std::ptrdiff_t>(std::min(lo + opt.chunk, list.size())));

  std::vector<std::vector<std::size_t>> correct(chunks.size(), std::vector<std::size_t>(iterations.size(), 0));
  parallel_for(chunks.size(), opt.workers, [&](std::size_t c) {
    std::size_t k = 0;
    predict(chunks[c], max_iters, opt.every, [&](std::size_t t, const Tensor<float>& logits) {
      if (k >= iterations.size() || iterations[k] != t) throw std::logic_error("predictor emitted an unexpected iteration");
      const auto ok = exact_match(logits, std::span<const Example* const>(chunks[c]));
      correct[c][k++] = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), true));
    });
    if (k != iterations.size()) throw std::logic_error("predictor skipped iterations");
  });

  EvalReport r;
  r.max_iters = max_iters;
  r.examples = examples.size();
  r.eval_size = examples.front().size;
  r.iterations = iterations;
  r.curve.assign(iterations.size(), 0.0);
  for (std::size_t k = 0; k < iterations.size(); ++k) {
    std::size_t sum = 0;
    for (const auto& c : correct) sum += c[k];
    r.curve[k] = 100.0 * static_cast<double>(sum) / static_cast<double>(examples.size());
  }
  // First iteration reaching the maximum.
  const auto best = std::max_element(r.curve.begin(), r.curve.end());
  r.best_accuracy = *best;
  r.best_iteration = iterations[static_cast<std::size_t>(best - r.curve.begin())];
  return r;
}

inline EvalReport evaluate(const SolverConfig& cfg, const ParameterSet<float>& params, const std::vector<Example>& examples,
                           std::size_t max_iters, const EvalOptions& opt = {}) {
  return evaluate_with(model_predictor(cfg, params), examples, max_iters, opt);
}

/// Emits one-hot logits of each example's own target at every iteration.
/// A stand-in for a perfect model when checking the evaluation pipeline.
inline BatchPredictor label_echo_predictor(std::size_t classes) {
  return [classes](std::span<const Example* const> batch, std::size_t max_iters, std::size_t every, const LogitsVisitor& visit) {
    const std::size_t N = batch.size(), P = batch[0]->target.size();
    Tensor<float> logits({classes, N, P});
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < P; ++p) {
        if (batch[n]->target[p] >= classes) throw std::invalid_argument("target class out of range");
        logits[(batch[n]->target[p] * N + n) * P + p] = 1.0f;
      }
    for (std::size_t t = 1; t <= max_iters; ++t)
      if (t == max_iters || (every > 0 && t % every == 0)) visit(t, logits);
  };
}

// ------------------------------------------------------------------ iteration scaling

/// Evaluation iterations for `size`, scaled linearly from a nominal count at a
/// nominal size. Nominal counts assume a single recurrent layer; a block of L
/// layers propagates L pixels per iteration and needs 1/L of the iterations.
inline std::size_t scaled_iterations(std::size_t nominal_iters, std::uint32_t nominal_size, std::uint32_t size,
                                     std::size_t recurrent_layers = 1) {
  if (nominal_size == 0 || recurrent_layers == 0) throw std::invalid_argument("nominal size and layer count must be positive");
  const double v = static_cast<double>(nominal_iters) * size / nominal_size / static_cast<double>(recurrent_layers);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(v - 1e-9)));
}

/// Nominal evaluation iterations at the task's test size.
inline std::size_t nominal_eval_iterations(std::string_view task) {
  static const std::map<std::string, std::size_t, std::less<>> table{
      {"1s-maze", 2000}, {"pong", 1000},     {"goto", 500},     {"doorkey", 1000},
      {"prefix-sum", 500}, {"maze", 1000}, {"thin-maze", 1000}, {"chess", 200}};
  auto it = table.find(task);
  if (it == table.end()) throw std::invalid_argument("unknown task '" + std::string(task) + "'");
  return it->second;
}

inline std::size_t task_eval_iterations(std::string_view task, std::uint32_t size, std::size_t recurrent_layers = 1) {
  return scaled_iterations(nominal_eval_iterations(task), tasks::task_info(task).test_size, size, recurrent_layers);
}

/// Evaluates each size with its own iteration budget. Keys are the sizes of
/// the supplied example sets.
inline std::map<std::uint32_t, EvalReport> extrapolation_sweep(const BatchPredictor& predict,
                                                               const std::map<std::uint32_t, std::vector<Example>>& sets,
                                                               const std::function<std::size_t(std::uint32_t)>& iters_for_size,
                                                               const EvalOptions& opt = {}) {
  std::map<std::uint32_t, EvalReport> out;
  for (const auto& [size, examples] : sets) out.emplace(size, evaluate_with(predict, examples, iters_for_size(size), opt));
  return out;
}

// ------------------------------------------------------------------ overthinking

struct OverthinkingResult {
  bool overthinking = false;
  double best = 0.0;
  double final_quarter_mean = 0.0;
  double tolerance = 1.0;
};

/// Flags a report whose mean accuracy over the final quarter of iterations
/// falls more than `tolerance` points below the curve maximum.
inline OverthinkingResult overthinking_curve(const EvalReport& r, double tolerance = 1.0) {
  if (r.curve.empty()) throw std::invalid_argument("report has no curve");
  OverthinkingResult o;
  o.tolerance = tolerance;
  o.best = *std::max_element(r.curve.begin(), r.curve.end());
  const double start = 0.75 * static_cast<double>(r.max_iters);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < r.curve.size(); ++k)
    if (static_cast<double>(r.iterations[k]) > start) sum += r.curve[k], ++n;
  o.final_quarter_mean = n ? sum / static_cast<double>(n) : r.curve.back();
  o.overthinking = o.final_quarter_mean < o.best - tolerance;
  return o;
}

// ------------------------------------------------------------------ closed-loop rollouts

struct RolloutReport {
  std::uint32_t env_size = 0;
  std::size_t iters_per_step = 0;
  std::vector<double> rewards;     // terminal reward per episode, in [0, 1]
  std::vector<std::size_t> steps;  // episode lengths
  std::size_t looped = 0;          // episodes cut short by a repeated configuration
  double mean = 0.0;               // x100
  double stddev = 0.0;             // x100, population

  void summarize() {
    if (rewards.empty()) return;
    const double m = std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
    double v = 0.0;
    for (double r : rewards) v += (r - m) * (r - m);
    mean = 100.0 * m;
    stddev = 100.0 * std::sqrt(v / static_cast<double>(rewards.size()));
  }
};

inline void to_json(nlohmann::json& j, const RolloutReport& r) {
  j = {{"env_size", r.env_size}, {"iters_per_step", r.iters_per_step}, {"episodes", r.rewards.size()},
       {"mean_reward_x100", r.mean}, {"std_x100", r.stddev}, {"rewards", r.rewards}, {"steps", r.steps},
       {"looped_episodes", r.looped}};
}

/// Chooses one action for each of a batch of same-size states.
using Policy = std::function<std::vector<std::uint32_t>(const std::vector<const tasks::GridWorldState*>& states)>;

inline std::uint64_t episode_seed(std::uint64_t seed, std::size_t episode) {
  return derive_seed(substream(seed, "rollout"), {episode});
}

inline std::uint64_t configuration_key(const tasks::GridWorldState& s) {
  const auto cell = static_cast<std::uint64_t>(s.agent.r) * static_cast<std::uint64_t>(s.n) + static_cast<std::uint64_t>(s.agent.c);
  return (((cell * 4 + static_cast<std::uint64_t>(s.dir)) * 2 + s.carrying_key) * 2 + s.door_locked) * 2 + s.door_open;
}

/// Runs `episodes` Doorkey episodes in lockstep: every step queries the policy
/// once for all unfinished episodes.
///
/// With a `memoryless` policy (action a function of the current observation)
/// an episode that revisits a configuration is in a cycle and can only time
/// out, so it is scored as a timeout right away.
inline RolloutReport rollout_policy(const Policy& policy, std::uint32_t env_size, std::size_t episodes, std::uint64_t seed,
                                    bool memoryless = true) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  std::vector<tasks::GridWorldState> envs;
  for (std::size_t e = 0; e < episodes; ++e) envs.push_back(tasks::doorkey_reset(static_cast<int>(env_size), episode_seed(seed, e)));
  RolloutReport r;
  r.env_size = env_size;
  r.rewards.assign(episodes, 0.0);
  r.steps.assign(episodes, 0);
  std::vector<std::unordered_set<std::uint64_t>> seen(episodes);
  if (memoryless)
    for (std::size_t e = 0; e < episodes; ++e) seen[e].insert(configuration_key(envs[e]));
  while (true) {
    std::vector<std::size_t> live;
    std::vector<const tasks::GridWorldState*> states;
    for (std::size_t e = 0; e < episodes; ++e)
      if (!envs[e].done) live.push_back(e), states.push_back(&envs[e]);
    if (live.empty()) break;
    const auto actions = policy(states);
    if (actions.size() != live.size()) throw std::logic_error("policy returned the wrong number of actions");
    for (std::size_t k = 0; k < live.size(); ++k) {
      auto& env = envs[live[k]];
      const auto res = tasks::doorkey_step(env, actions[k]);
      if (res.done) {
        r.rewards[live[k]] = res.reward, r.steps[live[k]] = static_cast<std::size_t>(env.t);
      } else if (memoryless && !seen[live[k]].insert(configuration_key(env)).second) {
        env.done = true;
        r.steps[live[k]] = static_cast<std::size_t>(env.T);
        ++r.looped;
      }
    }
  }
  r.summarize();
  return r;
}

inline Policy oracle_policy() {
  return [](const std::vector<const tasks::GridWorldState*>& states) {
    std::vector<std::uint32_t> a;
    for (const auto* s : states) a.push_back(tasks::doorkey_oracle(*s));
    return a;
  };
}

/// The solver as a policy: each observation is processed from a zero state for
/// `iters_per_step` iterations and the argmax of the pooled logits is taken.
/// Observations are split into fixed chunks spread over `workers` threads.
inline Policy model_policy(const SolverConfig& cfg, const ParameterSet<float>& params, std::size_t iters_per_step,
                           std::size_t workers = 1, std::size_t chunk = 32) {
  return [&cfg, &params, iters_per_step, workers, chunk](const std::vector<const tasks::GridWorldState*>& states) {
    std::vector<Example> obs(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) obs[i].input = tasks::doorkey_observation(*states[i]);
    const std::size_t n_chunks = (states.size() + chunk - 1) / chunk;
    std::vector<std::uint32_t> actions(states.size(), 0);
    parallel_for(n_chunks, workers, [&](std::size_t c) {
      const std::size_t lo = c * chunk, hi = std::min(states.size(), lo + chunk);
      std::vector<const Example*> part;
      for (std::size_t i = lo; i < hi; ++i) part.push_back(&obs[i]);
      rollout<float>(cfg, params, stack_inputs<float>(part), iters_per_step, 0,
                     [&](std::size_t, const Tensor<float>& logits, const Tensor<float>&) {
                       const auto a = argmax_classes(logits);
                       std::copy(a.begin(), a.end(), actions.begin() + static_cast<std::ptrdiff_t>(lo));
                     });
    });
    return actions;
  };
}

inline RolloutReport rollout_eval(const SolverConfig& cfg, const ParameterSet<float>& params, std::uint32_t env_size,
                                  std::size_t episodes, std::uint64_t seed, std::size_t iters_per_step, std::size_t workers = 1) {
  if (iters_per_step < 1) throw std::invalid_argument("iters_per_step must be >= 1");
  auto r = rollout_policy(model_policy(cfg, params, iters_per_step, workers), env_size, episodes, seed);
  r.iters_per_step = iters_per_step;
  return r;
}

// ------------------------------------------------------------------ images

/// Binary PGM (P5) of a [H, W] map, values scaled from [lo, hi] to 0..255.
inline std::string encode_pgm(const std::vector<double>& values, std::size_t h, std::size_t w, double lo, double hi) {
  if (values.size() != h * w) throw ShapeError("pgm: value count does not match " + std::to_string(h) + "x" + std::to_string(w));
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp((v - lo) / span, 0.0, 1.0)))));
  return out;
}

/// Binary PPM (P6) of a [3, H, W] image in [0, 1].
inline std::string encode_ppm(const Tensor<float>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("ppm: expected [3,H,W], got " + to_string(rgb.shape()));
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp<double>(rgb[c * h * w + p], 0.0, 1.0)))));
  return out;
}

}  // namespace nsolver
