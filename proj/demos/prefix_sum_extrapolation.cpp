// Train a small solver on short bit strings, then run it longer on a much
// longer string and print the accuracy curve.
#include <cstdio>

#include "nsolver/evaluation.hpp"
#include "nsolver/training.hpp"

using namespace nsolver;

int main() {
  const std::uint64_t seed = 0;
  const auto data = tasks::generate_dataset("prefix-sum", {8, 10, 12}, 600, seed);
  const auto cfg = default_solver_config("prefix-sum", 24);
  auto tc = TrainConfig::for_task("prefix-sum");
  tc.epochs = 15;
  tc.seed = seed;
  auto result = train<float>(cfg, init_parameters<float>(cfg, substream(seed, "init")), data, tc,
                             [](const EpochRecord& r) { std::printf("epoch %zu loss %.4f val %.2f\n", r.epoch, r.loss, r.val_acc); });

  const auto test = tasks::generate("prefix-sum", 32, 100, substream(seed, "test"));
  const auto report = evaluate(cfg, result.best_params, test, 120, {20});
  for (std::size_t i = 0; i < report.iterations.size(); ++i)
    std::printf("length 32, iteration %3zu: %6.2f%%\n", report.iterations[i], report.curve[i]);
  std::printf("best %.2f%% at iteration %zu\n", report.best_accuracy, report.best_iteration);
}
