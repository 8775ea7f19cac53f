#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nsolver/parallel.hpp"
#include "nsolver/tasks/common.hpp"
#include "nsolver/tasks/doorkey.hpp"
#include "nsolver/tasks/goto_pong.hpp"
#include "nsolver/tasks/maze.hpp"
#include "nsolver/tasks/prefix_sum.hpp"

namespace nsolver::tasks {

struct TaskInfo {
  std::string name;
  int rank = 2;  // spatial rank of the input
  std::size_t in_channels = 3;
  std::size_t classes = 2;
  bool same_size = true;
  bool generated = true;  // false: loaded from an external corpus
  std::vector<std::uint32_t> train_sizes;
  std::uint32_t test_size = 0;
};

inline const std::vector<TaskInfo>& task_table() {
  static const std::vector<TaskInfo> table{
      {"prefix-sum", 1, 1, 2, true, true, {32}, 512},
      {"maze", 2, 3, 2, true, true, {24}, 124},
      {"thin-maze", 2, 3, 2, true, true, {11}, 61},
      {"1s-maze", 2, 3, 4, false, true, {5, 7, 9, 11, 13}, 121},
      {"goto", 2, 3, 4, false, true, {6, 8, 10, 12, 15, 17, 20}, 128},
      {"pong", 2, 3, 3, false, true, {6, 8, 10, 12, 15, 17, 20}, 128},
      {"doorkey", 2, 3, 4, false, true, {6, 8, 10, 12, 15, 17, 20}, 128},
      {"chess", 2, 12, 2, true, false, {8}, 8},
  };
  return table;
}

inline const TaskInfo& task_info(std::string_view name) {
  for (const auto& t : task_table())
    if (t.name == name) return t;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

/// Seed of one example, independent of generation order.
inline std::uint64_t example_seed(std::uint64_t master, std::string_view task, std::uint32_t size, std::uint64_t index) {
  return derive_seed(master, {fnv1a(task), size, index});
}

inline Example make_example(std::string_view task, std::uint32_t size, std::uint64_t seed) {
  const int n = static_cast<int>(size);
  if (task == "prefix-sum") return make_prefix_sum(size, seed);
  if (task == "maze") return make_maze(MazeGeometry::thick(n), seed);
  if (task == "thin-maze") return make_maze(MazeGeometry::thin(n), seed);
  if (task == "1s-maze") return make_one_step_maze(n, seed);
  if (task == "goto") return make_goto(n, seed);
  if (task == "pong") return make_pong(n, seed);
  if (task == "doorkey") return make_doorkey(n, seed);
  if (task == "chess") throw std::invalid_argument("chess examples are loaded, not generated");
  throw std::invalid_argument("unknown task '" + std::string(task) + "'");
}

/// Recomputes an example's label from its rendered input.
inline bool check_example(std::string_view task, const Example& ex) {
  try {
    if (task == "prefix-sum") return check_prefix_sum(ex);
    if (task == "maze") return check_maze(ex, MazeGeometry::thick(static_cast<int>(ex.size)));
    if (task == "thin-maze") return check_maze(ex, MazeGeometry::thin(static_cast<int>(ex.size)));
    if (task == "1s-maze") return check_one_step_maze(ex);
    if (task == "goto") return check_goto(ex);
    if (task == "pong") return check_pong(ex);
    if (task == "doorkey") return check_doorkey(ex);
  } catch (const FormatError&) {
    return false;
  }
  throw std::invalid_argument("no validator for task '" + std::string(task) + "'");
}

inline std::vector<Example> generate(std::string_view task, std::uint32_t size, std::size_t count, std::uint64_t master,
                                     std::size_t workers = 1) {
  std::vector<Example> out(count);
  parallel_for(count, workers, [&](std::size_t i) { out[i] = make_example(task, size, example_seed(master, task, size, i)); });
  return out;
}

}  // namespace nsolver::tasks
