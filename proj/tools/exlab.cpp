#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nsolver/checkpoint.hpp"
#include "nsolver/evaluation.hpp"
#include "nsolver/runtime.hpp"
#include "nsolver/stats.hpp"
#include "nsolver/tasks/dataset.hpp"
#include "nsolver/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nsolver;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void echo_config(const fs::path& out, const json& cfg) {
  fs::create_directories(out);
  io::write_text(out / "run_config.json", cfg.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Shared options -------------------------------------------------------------

struct Common {
  std::size_t workers = 0;  // 0: EXLAB_WORKERS, else 1
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--workers", c.workers, "worker threads (default: $EXLAB_WORKERS or 1)");
  cmd->add_option("--seed", c.seed, "master seed");
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) o->required();
}

/// Where evaluation examples come from: a dataset directory or on-the-fly
/// generation.
struct ExampleSource {
  std::string data;
  std::string task;
  std::vector<std::uint32_t> sizes;
  std::size_t count = 100;

  void add(CLI::App* cmd, bool many_sizes) {
    cmd->add_option("--data", data, "dataset directory");
    cmd->add_option("--task", task, "task for generated examples");
    if (many_sizes) cmd->add_option("--sizes", sizes, "sizes")->delimiter(',');
    else cmd->add_option("--size", sizes, "size")->expected(1);
    cmd->add_option("--count", count, "generated examples per size");
  }

  json to_json() const { return {{"data", data}, {"task", task}, {"sizes", sizes}, {"count", count}}; }

  /// Examples grouped by size. Generated sets use the run seed.
  std::map<std::uint32_t, std::vector<Example>> load(std::uint64_t seed, std::size_t workers, std::string& resolved_task) const {
    std::map<std::uint32_t, std::vector<Example>> out;
    if (!data.empty()) {
      auto d = tasks::read_dataset(data);
      if (!task.empty() && task != d.manifest.task) throw UsageError("dataset task '" + d.manifest.task + "' does not match --task " + task);
      resolved_task = d.manifest.task;
      for (auto& e : d.examples)
        if (sizes.empty() || std::find(sizes.begin(), sizes.end(), e.size) != sizes.end()) out[e.size].push_back(std::move(e));
      for (auto s : sizes)
        if (!out.count(s)) throw UsageError("dataset has no examples of size " + std::to_string(s));
    } else {
      if (task.empty() || sizes.empty()) throw UsageError("need --data, or --task with sizes");
      tasks::task_info(task);
      resolved_task = task;
      for (auto s : sizes) out[s] = tasks::generate(task, s, count, substream(seed, "data"), workers);
    }
    if (out.empty()) throw UsageError("no examples selected");
    return out;
  }
};

/// A trained model, or the label-echo oracle.
struct ModelSource {
  std::string checkpoint;
  bool oracle = false;

  void add(CLI::App* cmd) {
    auto* c = cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    auto* o = cmd->add_flag("--oracle", oracle, "use the label oracle instead of a model");
    c->excludes(o);
  }
  json to_json() const { return {{"checkpoint", checkpoint}, {"oracle", oracle}}; }

  std::optional<Checkpoint> load() const {
    if (oracle) return std::nullopt;
    if (checkpoint.empty()) throw UsageError("need --checkpoint or --oracle");
    return read_checkpoint(checkpoint);
  }
};

std::size_t layers_of(const std::optional<Checkpoint>& ck) { return ck ? ck->config.recurrent_layers : 1; }

void check_task(const std::optional<Checkpoint>& ck, const std::string& task) {
  if (!ck) return;
  const std::string trained = ck->extra.value("task", std::string());
  if (!trained.empty() && trained != task) throw UsageError("checkpoint was trained on '" + trained + "', data is '" + task + "'");
}

BatchPredictor predictor_for(const std::optional<Checkpoint>& ck, const std::string& task) {
  if (ck) return model_predictor(ck->config, ck->params);
  return label_echo_predictor(tasks::task_info(task).classes);
}

// gen / validate ---------------------------------------------------------------

struct GenArgs {
  Common c;
  std::string task;
  std::vector<std::uint32_t> sizes;
  std::size_t count = 0;
};

int cmd_gen(const GenArgs& a) {
  tasks::task_info(a.task);
  if (a.count == 0) throw UsageError("--count must be positive");
  const std::size_t workers = resolve_workers(a.c.workers);
  auto d = tasks::generate_dataset(a.task, a.sizes, a.count, a.c.seed, workers);
  tasks::write_dataset(d, a.c.out);
  echo_config(a.c.out, {{"command", "gen"}, {"task", a.task}, {"sizes", d.manifest.sizes}, {"count", a.count},
                        {"seed", a.c.seed}, {"workers", workers}, {"out", a.c.out}});
  std::cout << "wrote " << d.examples.size() << " examples to " << a.c.out << " crc32 " << d.manifest.crc32 << "\n";
  return 0;
}

struct ValidateArgs {
  std::string data;
  std::size_t workers = 0;
};

int cmd_validate(const ValidateArgs& a) {
  const auto d = tasks::read_dataset(a.data);
  std::vector<char> ok(d.examples.size(), 0);
  parallel_for(d.examples.size(), resolve_workers(a.workers),
               [&](std::size_t i) { ok[i] = tasks::check_example(d.manifest.task, d.examples[i]) ? 1 : 0; });
  const auto good = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
  std::cout << "valid " << good << "/" << d.examples.size() << "\n";
  if (good != d.examples.size()) {
    const auto first = static_cast<std::size_t>(std::find(ok.begin(), ok.end(), 0) - ok.begin());
    throw FormatError(std::to_string(d.examples.size() - good) + " examples fail their oracle (first: index " + std::to_string(first) + ")");
  }
  return 0;
}

// train ------------------------------------------------------------------------

struct TrainArgs {
  Common c;
  std::string config;
  std::string task, data;
  std::optional<std::size_t> epochs, width, batch_size, train_iters;
  std::optional<double> lr;
  bool seed_given = false;
  bool quiet = false;
};

/// Resolved run configuration: file values over task defaults, flags over both.
json resolve_train_config(const TrainArgs& a) {
  json file = a.config.empty() ? json::object() : read_json_file(a.config);
  if (!file.is_object()) throw FormatError("config must be a JSON object");
  const std::string task = !a.task.empty() ? a.task : file.value("task", std::string());
  if (task.empty()) throw UsageError("no task given (config 'task' or --task)");
  tasks::task_info(task);
  const std::string data = !a.data.empty() ? a.data : file.value("data", std::string());
  if (data.empty()) throw UsageError("no dataset given (config 'data' or --data)");
  const std::string out = !a.c.out.empty() ? a.c.out : file.value("out", std::string());
  if (out.empty()) throw UsageError("no output directory given (config 'out' or --out)");
  const std::uint64_t seed = a.seed_given ? a.c.seed : file.value("seed", std::uint64_t{0});

  json model_over = file.value("model", json::object());
  std::size_t width = a.width.value_or(model_over.value("width", std::size_t{0}));
  SolverConfig cfg = default_solver_config(task, width);
  json mj = cfg;
  mj.update(model_over);
  if (a.width) mj["width"] = *a.width;
  cfg = mj.get<SolverConfig>();
  cfg.validate();

  TrainConfig tc = TrainConfig::for_task(task);
  merge_json(file.value("train", json::object()), tc);
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.lr) tc.lr = *a.lr;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.train_iters) tc.train_iters = *a.train_iters;
  tc.seed = seed;
  tc.validate();

  return {{"command", "train"}, {"task", task}, {"data", data}, {"out", out}, {"seed", seed},
          {"workers", resolve_workers(a.c.workers)}, {"model", cfg}, {"train", tc}};
}

int cmd_train(const TrainArgs& a) {
  const json run = resolve_train_config(a);
  const std::string task = run["task"];
  const fs::path out = run["out"].get<std::string>();
  const SolverConfig cfg = run["model"].get<SolverConfig>();
  const TrainConfig tc = run["train"].get<TrainConfig>();
  const auto data = tasks::read_dataset(run["data"].get<std::string>());
  if (data.manifest.task != task) throw UsageError("dataset task '" + data.manifest.task + "' does not match '" + task + "'");
  echo_config(out, run);

  const std::uint64_t seed = run["seed"];
  auto params = init_parameters<float>(cfg, substream(seed, "init"));
  auto result = train<float>(cfg, std::move(params), data, tc, [&](const EpochRecord& r) {
    if (!a.quiet)
      std::cerr << "epoch " << r.epoch << " size " << r.size << " loss " << r.loss << " val_acc " << fixed2(r.val_acc) << " lr " << r.lr
                << "\n";
  });

  const std::vector<std::uint32_t> sizes = tc.curriculum ? tc.curriculum->sizes : data.manifest.sizes;
  const json extra = {{"task", task}, {"train_sizes", sizes}, {"train_iters", tc.train_iters}};
  write_checkpoint({cfg, seed, result.log.best_epoch, result.log.best_val_acc, extra, result.best_params}, out / "best.ckpt");
  const auto& last = result.log.epochs.back();
  write_checkpoint({cfg, seed, last.epoch, last.val_acc, extra, result.final_params}, out / "final.ckpt");
  io::write_text(out / "train_log.csv", result.log.to_csv());
  std::cout << "best epoch " << result.log.best_epoch << " val_acc " << fixed2(result.log.best_val_acc) << "\n";
  return 0;
}

// eval / sweep -----------------------------------------------------------------

struct EvalArgs {
  Common c;
  ExampleSource src;
  ModelSource model;
  std::size_t iters = 0;
  double scale = 1.0;
  std::size_t every = 1;
  std::size_t chunk = 32;
};

std::size_t iterations_for(const EvalArgs& a, const std::string& task, std::uint32_t size, std::size_t layers) {
  if (a.iters) return a.iters;
  if (!(a.scale > 0.0)) throw UsageError("--scale must be positive");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(a.scale * static_cast<double>(task_eval_iterations(task, size, layers)))));
}

EvalReport run_eval(const EvalArgs& a, const BatchPredictor& predict, const std::optional<Checkpoint>& ck, const std::string& task,
                    std::uint32_t size, const std::vector<Example>& examples, std::size_t workers) {
  EvalOptions opt{a.every, a.chunk, workers};
  auto r = evaluate_with(predict, examples, iterations_for(a, task, size, layers_of(ck)), opt);
  r.task = task;
  if (ck) r.train_sizes = ck->extra.value("train_sizes", std::vector<std::uint32_t>{});
  return r;
}

int cmd_eval(const EvalArgs& a) {
  const std::size_t workers = resolve_workers(a.c.workers);
  const auto ck = a.model.load();
  std::string task;
  auto sets = a.src.load(a.c.seed, workers, task);
  check_task(ck, task);
  if (sets.size() != 1) throw UsageError("eval takes one size; use sweep for several");
  const auto& [size, examples] = *sets.begin();
  json run = {{"command", "eval"}, {"task", task}, {"source", a.src.to_json()}, {"model", a.model.to_json()}, {"seed", a.c.seed},
              {"workers", workers}, {"iters", iterations_for(a, task, size, layers_of(ck))}, {"every", a.every}, {"chunk", a.chunk}};
  const auto r = run_eval(a, predictor_for(ck, task), ck, task, size, examples, workers);
  if (!a.c.out.empty()) {
    echo_config(a.c.out, run);
    io::write_text(fs::path(a.c.out) / "eval.json", json(r).dump(2) + "\n");
    io::write_text(fs::path(a.c.out) / "curve.csv", r.curve_csv());
  }
  std::cout << "size " << size << " examples " << r.examples << " iterations " << r.max_iters << " best_accuracy "
            << fixed2(r.best_accuracy) << " best_iteration " << r.best_iteration << " final_accuracy " << fixed2(r.curve.back()) << "\n";
  return 0;
}

int cmd_sweep(const EvalArgs& a) {
  const std::size_t workers = resolve_workers(a.c.workers);
  const auto ck = a.model.load();
  std::string task;
  const auto sets = a.src.load(a.c.seed, workers, task);
  check_task(ck, task);
  json run = {{"command", "sweep"}, {"task", task}, {"source", a.src.to_json()}, {"model", a.model.to_json()}, {"seed", a.c.seed},
              {"workers", workers}, {"iters", a.iters}, {"scale", a.scale}, {"every", a.every}, {"chunk", a.chunk}};
  echo_config(a.c.out, run);
  const auto predict = predictor_for(ck, task);
  std::ostringstream csv;
  csv << "size,examples,iterations,best_accuracy,best_iteration,final_accuracy,final_quarter_mean,overthinking\n";
  json all = json::object();
  for (const auto& [size, examples] : sets) {
    const auto r = run_eval(a, predict, ck, task, size, examples, workers);
    const auto o = overthinking_curve(r);
    csv << size << ',' << r.examples << ',' << r.max_iters << ',' << fixed2(r.best_accuracy) << ',' << r.best_iteration << ','
        << fixed2(r.curve.back()) << ',' << fixed2(o.final_quarter_mean) << ',' << (o.overthinking ? 1 : 0) << '\n';
    all[std::to_string(size)] = {{"report", r}, {"final_quarter_mean", o.final_quarter_mean}, {"overthinking", o.overthinking}};
    std::cout << "size " << size << " best_accuracy " << fixed2(r.best_accuracy) << " best_iteration " << r.best_iteration
              << " final_quarter_mean " << fixed2(o.final_quarter_mean) << (o.overthinking ? " overthinking" : "") << "\n";
  }
  io::write_text(fs::path(a.c.out) / "sweep.csv", csv.str());
  io::write_text(fs::path(a.c.out) / "sweep.json", all.dump(2) + "\n");
  return 0;
}

// rollout ----------------------------------------------------------------------

struct RolloutArgs {
  Common c;
  ModelSource model;
  std::uint32_t size = 0;
  std::size_t episodes = 100;
  std::size_t iters_per_step = 0;
};

int cmd_rollout(const RolloutArgs& a) {
  const std::size_t workers = resolve_workers(a.c.workers);
  if (a.size < 6) throw UsageError("--size must be >= 6");
  const auto ck = a.model.load();
  check_task(ck, "doorkey");
  const std::size_t iters = ck ? (a.iters_per_step ? a.iters_per_step : task_eval_iterations("doorkey", a.size, layers_of(ck))) : 0;
  json run = {{"command", "rollout"}, {"model", a.model.to_json()}, {"size", a.size}, {"episodes", a.episodes},
              {"iters_per_step", iters}, {"seed", a.c.seed}, {"workers", workers}};
  const auto r = ck ? rollout_eval(ck->config, ck->params, a.size, a.episodes, a.c.seed, iters, workers)
                    : rollout_policy(oracle_policy(), a.size, a.episodes, a.c.seed);
  if (!a.c.out.empty()) {
    echo_config(a.c.out, run);
    io::write_text(fs::path(a.c.out) / "rollout.json", json(r).dump(2) + "\n");
  }
  std::cout << "size " << a.size << " episodes " << a.episodes << " mean " << fixed2(r.mean) << " sd " << fixed2(r.stddev) << "\n";
  return 0;
}

// aso --------------------------------------------------------------------------

struct AsoArgs {
  Common c;
  std::vector<std::string> scores;
  double alpha = 0.05;
  std::size_t bootstrap = 1000;
};

int cmd_aso(const AsoArgs& a) {
  std::vector<stats::ScoreSet> sets;
  for (const auto& f : a.scores)
    for (auto& s : stats::read_scores_csv(io::read_text(f))) {
      for (const auto& have : sets)
        if (have.label == s.label) throw UsageError("model '" + s.label + "' appears in more than one scores file");
      sets.push_back(std::move(s));
    }
  const auto m = stats::pairwise_matrix(sets, a.alpha, a.bootstrap, a.c.seed);
  if (!a.c.out.empty()) {
    echo_config(a.c.out, {{"command", "aso"}, {"scores", a.scores}, {"alpha", a.alpha}, {"bootstrap", a.bootstrap}, {"seed", a.c.seed}});
    io::write_text(fs::path(a.c.out) / "aso.csv", m.to_csv());
    io::write_text(fs::path(a.c.out) / "aso.json", m.to_json().dump(2) + "\n");
  }
  for (std::size_t i = 0; i < m.labels.size(); ++i)
    for (std::size_t j = 0; j < m.labels.size(); ++j)
      if (i != j)
        std::cout << m.labels[i] << " vs " << m.labels[j] << " eps_min " << fixed2(m.eps[i][j]) << " " << json(stats::classify(m.eps[i][j])).get<std::string>()
                  << "\n";
  return 0;
}

// viz --------------------------------------------------------------------------

struct VizArgs {
  Common c;
  ExampleSource src;
  std::string checkpoint;
  std::size_t index = 0;
  std::size_t iters = 0;
};

int cmd_viz(const VizArgs& a) {
  const std::size_t workers = resolve_workers(a.c.workers);
  if (a.checkpoint.empty()) throw UsageError("need --checkpoint");
  const auto ck = read_checkpoint(a.checkpoint);
  std::string task;
  const auto sets = a.src.load(a.c.seed, workers, task);
  check_task(ck, task);
  const auto& examples = sets.begin()->second;
  if (a.index >= examples.size()) throw UsageError("--index " + std::to_string(a.index) + " out of range (" + std::to_string(examples.size()) + " examples)");
  const std::size_t iters = a.iters ? a.iters : ck.extra.value("train_iters", std::size_t{30});
  echo_config(a.c.out, {{"command", "viz"}, {"task", task}, {"source", a.src.to_json()}, {"checkpoint", a.checkpoint}, {"index", a.index},
                        {"iters", iters}, {"seed", a.c.seed}});
  const auto maps = propagation_diff<float>(ck.config, ck.params, examples[a.index].input, iters);
  for (std::size_t t = 0; t < maps.size(); ++t) {
    const auto& m = maps[t];
    const std::size_t h = m.rank() == 2 ? m.dim(0) : 1, w = m.size() / h;
    std::vector<double> v(m.values().begin(), m.values().end());
    char name[32];
    std::snprintf(name, sizeof name, "diff_%04zu.pgm", t + 1);
    const std::string bytes = encode_pgm(v, h, w, 0.0, 1.0);
    io::write_file(fs::path(a.c.out) / name, std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  }
  std::cout << "wrote " << maps.size() << " images to " << a.c.out << "\n";
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int fail(const char* kind, const std::string& msg, int code) {
  std::cerr << "error: " << kind << ": " << one_line(msg) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"exlab: recurrent solver experiments"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a dataset");
  add_common(g, gen.c, true);
  g->add_option("--task", gen.task, "task name")->required();
  g->add_option("--sizes", gen.sizes, "sizes")->delimiter(',')->required();
  g->add_option("--count", gen.count, "examples per size")->required();

  ValidateArgs val;
  auto* v = app.add_subcommand("validate", "check every example of a dataset against its oracle");
  v->add_option("--data", val.data, "dataset directory")->required();
  v->add_option("--workers", val.workers, "worker threads (default: $EXLAB_WORKERS or 1)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a solver");
  add_common(t, tr.c, false);
  t->add_option("--config", tr.config, "JSON run config");
  t->add_option("--task", tr.task, "task name");
  t->add_option("--data", tr.data, "dataset directory");
  t->add_option("--epochs", tr.epochs, "epochs");
  t->add_option("--lr", tr.lr, "learning rate");
  t->add_option("--width", tr.width, "recurrent width");
  t->add_option("--batch-size", tr.batch_size, "batch size");
  t->add_option("--train-iters", tr.train_iters, "recurrent iterations during training");
  t->add_flag("--quiet", tr.quiet, "no per-epoch progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "accuracy curve at one size");
  add_common(e, ev.c, false);
  ev.src.add(e, false);
  ev.model.add(e);
  e->add_option("--iters", ev.iters, "iterations (default: scaled from the task's nominal count)");
  e->add_option("--scale", ev.scale, "multiplier on the default iteration count");
  e->add_option("--every", ev.every, "curve resolution");
  e->add_option("--chunk", ev.chunk, "examples per batch");

  EvalArgs sw;
  auto* s = app.add_subcommand("sweep", "accuracy curves over several sizes");
  add_common(s, sw.c, true);
  sw.src.add(s, true);
  sw.model.add(s);
  s->add_option("--iters", sw.iters, "iterations for every size (default: scaled per size)");
  s->add_option("--scale", sw.scale, "multiplier on the default iteration count");
  s->add_option("--every", sw.every, "curve resolution");
  s->add_option("--chunk", sw.chunk, "examples per batch");

  RolloutArgs ro;
  auto* r = app.add_subcommand("rollout", "closed-loop doorkey episodes");
  add_common(r, ro.c, false);
  ro.model.add(r);
  r->add_option("--size", ro.size, "environment size")->required();
  r->add_option("--episodes", ro.episodes, "episodes");
  r->add_option("--iters-per-step", ro.iters_per_step, "solver iterations per action");

  AsoArgs as;
  auto* a = app.add_subcommand("aso", "pairwise almost stochastic order test");
  add_common(a, as.c, false);
  a->add_option("--scores", as.scores, "CSV files with model,seed,score rows")->required();
  a->add_option("--alpha", as.alpha, "significance level before correction");
  a->add_option("--bootstrap", as.bootstrap, "bootstrap samples");

  VizArgs vz;
  auto* z = app.add_subcommand("viz", "per-iteration hidden-state change maps");
  add_common(z, vz.c, true);
  vz.src.add(z, false);
  z->add_option("--checkpoint", vz.checkpoint, "checkpoint file")->required();
  z->add_option("--index", vz.index, "example index");
  z->add_option("--iters", vz.iters, "iterations (default: training iterations)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return fail("usage", ex.what(), 2);
  }
  tr.seed_given = t->count("--seed") > 0;

  try {
    if (*g) return cmd_gen(gen);
    if (*v) return cmd_validate(val);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*s) return cmd_sweep(sw);
    if (*r) return cmd_rollout(ro);
    if (*a) return cmd_aso(as);
    if (*z) return cmd_viz(vz);
  } catch (const ShapeError& ex) {
    return fail("shape", ex.what(), 1);
  } catch (const std::invalid_argument& ex) {
    return fail("usage", ex.what(), 2);
  } catch (const FormatError& ex) {
    return fail("format", ex.what(), 3);
  } catch (const fs::filesystem_error& ex) {
    return fail("io", ex.what(), 3);
  } catch (const NumericError& ex) {
    return fail("numeric", ex.what(), 4);
  } catch (const json::exception& ex) {
    return fail("config", ex.what(), 2);
  } catch (const std::exception& ex) {
    return fail("internal", ex.what(), 1);
  }
  return fail("usage", "no subcommand", 2);
}
