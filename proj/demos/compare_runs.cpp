// Compare per-seed scores of three configurations with the almost
// stochastic order test, Bonferroni-corrected over all ordered pairs.
#include <cstdio>

#include "nsolver/stats.hpp"

using namespace nsolver;
using namespace nsolver::stats;

int main() {
  const std::vector<ScoreSet> runs = {
      {"width64", {97.1, 98.4, 96.9, 99.0, 98.2}},
      {"width32", {93.5, 95.0, 91.2, 94.8, 96.1}},
      {"no-curriculum", {71.0, 88.3, 64.9, 90.2, 79.5}},
  };
  const auto m = pairwise_matrix(runs, 0.05, 1000, 7);
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (std::size_t j = 0; j < runs.size(); ++j)
      if (i != j) std::printf("%-14s vs %-14s eps_min %.3f\n", runs[i].label.c_str(), runs[j].label.c_str(), m.eps[i][j]);
}
