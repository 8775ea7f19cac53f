#pragma once

// Test-side reference labelers. None of these call the generators' own
// labeling code; they read the rendered input and recompute the answer.

#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <vector>

#include "nsolver/tasks/doorkey.hpp"

namespace nsolver::oracle {

using tasks::Cell;
using tasks::kMoveDelta;

inline std::vector<std::uint32_t> double_loop_parity(const std::vector<std::uint32_t>& bits) {
  std::vector<std::uint32_t> out(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    unsigned s = 0;
    for (std::size_t j = 0; j <= i; ++j) s += bits[j];
    out[i] = s % 2;
  }
  return out;
}

// Unit lattice of a rendered maze, read from the pixels.
struct Lattice {
  int n = 0;
  std::vector<int> open;
  Cell agent{-1, -1}, goal{-1, -1};
  bool ok(Cell p) const { return p.r >= 0 && p.c >= 0 && p.r < n && p.c < n && open[p.r * n + p.c]; }
};

inline Lattice read_lattice(const Tensor<float>& img, int unit, int border) {
  const int side = static_cast<int>(img.dim(1));
  const int n = (side - 2 * border) / unit;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  Lattice l{n, std::vector<int>(n * n, 0)};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::size_t px = static_cast<std::size_t>(border + r * unit) * side + border + c * unit;
      const float R = img[px], G = img[plane + px], B = img[2 * plane + px];
      l.open[r * n + c] = R + G + B > 0;
      if (R == 0 && G == 1 && B == 0) l.agent = {r, c};
      if (R == 1 && G == 0 && B == 0) l.goal = {r, c};
    }
  }
  return l;
}

// Dead-end filling: in a tree, pruning leaves other than the endpoints
// leaves exactly the path between them.
inline std::vector<int> dead_end_fill(Lattice l) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r < l.n; ++r) {
      for (int c = 0; c < l.n; ++c) {
        const Cell p{r, c};
        if (!l.ok(p) || p == l.agent || p == l.goal) continue;
        int deg = 0;
        for (auto d : kMoveDelta) deg += l.ok({r + d.r, c + d.c});
        if (deg <= 1) l.open[r * l.n + c] = 0, changed = true;
      }
    }
  }
  return l.open;
}

// A spanning tree of the open units has edges = nodes - 1.
inline bool is_tree(const Lattice& l) {
  int nodes = 0, edges = 0;
  for (int r = 0; r < l.n; ++r) {
    for (int c = 0; c < l.n; ++c) {
      if (!l.ok({r, c})) continue;
      ++nodes;
      edges += l.ok({r + 1, c}) + l.ok({r, c + 1});
    }
  }
  return edges == nodes - 1;
}

/// Per-pixel path mask of a same-size maze, or nothing if the picture is not
/// a perfect maze with one agent and one goal.
inline std::optional<std::vector<std::uint32_t>> maze_mask(const tasks::Example& ex, int unit, int border) {
  const auto size = static_cast<std::uint32_t>(ex.input.dim(1));
  const auto l = read_lattice(ex.input, unit, border);
  if (l.agent.r < 0 || l.goal.r < 0 || !is_tree(l)) return std::nullopt;
  const auto path = dead_end_fill(l);
  std::vector<std::uint32_t> want(size * size, 0);
  for (std::uint32_t r = 0; r < size; ++r)
    for (std::uint32_t c = 0; c < size; ++c) {
      const int ur = static_cast<int>(r) - border, uc = static_cast<int>(c) - border;
      if (ur < 0 || uc < 0 || ur >= l.n * unit || uc >= l.n * unit) continue;
      want[r * size + c] = path[(ur / unit) * l.n + uc / unit];
    }
  return want;
}

/// Step toward the goal along a distance-to-goal map. `candidates` receives
/// the number of equally good moves (1 in a perfect maze).
inline std::uint32_t reverse_bfs_label(const Lattice& l, int* candidates = nullptr) {
  std::vector<int> dist(l.n * l.n, -1);
  std::queue<Cell> q;
  q.push(l.goal);
  dist[l.goal.r * l.n + l.goal.c] = 0;
  while (!q.empty()) {
    auto p = q.front();
    q.pop();
    for (auto d : kMoveDelta) {
      const Cell nb{p.r + d.r, p.c + d.c};
      if (l.ok(nb) && dist[nb.r * l.n + nb.c] < 0) {
        dist[nb.r * l.n + nb.c] = dist[p.r * l.n + p.c] + 1;
        q.push(nb);
      }
    }
  }
  const int here = dist[l.agent.r * l.n + l.agent.c];
  std::uint32_t label = 99;
  int count = 0;
  for (std::uint32_t a = 0; a < 4; ++a) {
    const Cell nb{l.agent.r + kMoveDelta[a].r, l.agent.c + kMoveDelta[a].c};
    if (l.ok(nb) && dist[nb.r * l.n + nb.c] == here - 1) label = a, ++count;
  }
  if (candidates) *candidates = count;
  return label;
}

/// GoTo: move vertically first, then horizontally. 99 if the picture is malformed.
inline std::uint32_t goto_rule(const tasks::Example& ex) {
  const std::size_t size = ex.input.dim(1), plane = size * size;
  int ar = -1, ac = -1, gr = -1, gc = -1, agents = 0, goals = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const float R = ex.input[p], G = ex.input[plane + p], B = ex.input[2 * plane + p];
    if (R == 0 && G == 1 && B == 0) ar = static_cast<int>(p / size), ac = static_cast<int>(p % size), ++agents;
    if (R == 1 && G == 0 && B == 0) gr = static_cast<int>(p / size), gc = static_cast<int>(p % size), ++goals;
  }
  if (agents != 1 || goals != 1) return 99;
  return ar != gr ? (ar < gr ? 1u : 0u) : (ac > gc ? 2u : 3u);
}

/// Pong: move the paddle center under the ball. 99 if malformed.
inline std::uint32_t pong_rule(const tasks::Example& ex) {
  const std::size_t size = ex.input.dim(1), plane = size * size;
  int ball = -1, balls = 0;
  std::vector<int> paddle;
  for (std::size_t p = 0; p < plane; ++p) {
    const float R = ex.input[p], G = ex.input[plane + p], B = ex.input[2 * plane + p];
    if (R == 1 && G == 0 && B == 0) ball = static_cast<int>(p % size), ++balls;
    if (R == 0 && G == 1 && B == 0) {
      if (p / size != size - 2) return 99;
      paddle.push_back(static_cast<int>(p % size));
    }
  }
  if (balls != 1 || paddle.size() != 3) return 99;
  const int center = (paddle[0] + paddle[2]) / 2;
  return ball == center ? 2u : ball < center ? 0u : 1u;
}

/// Doorkey by one-step lookahead through the simulator: every action is
/// tried on a copy of the state and scored by 1 + the forward-BFS distance
/// (over simulated forward / rotate-right moves) from the successor to the
/// current stage's completion. Ties go to the lower action index.
inline std::uint32_t doorkey_lookahead(const tasks::GridWorldState& s) {
  using namespace tasks;
  auto stage = [](const GridWorldState& g) { return !g.carrying_key ? 0 : !g.door_open ? 1 : 2; };
  const int st = stage(s);
  auto stage_done = [&](const GridWorldState& g) { return stage(g) > st || (st == 2 && g.at(g.agent) == Tile::goal); };
  auto key = [n = s.n](const GridWorldState& g) { return (g.agent.r * n + g.agent.c) * 4 + g.dir; };
  // Moves that finish the stage without walking: grab / toggle from here.
  auto finishing_move = [&](const GridWorldState& g) {
    for (std::uint32_t a : {grab, toggle}) {
      GridWorldState c = g;
      c.T = 1 << 30;
      doorkey_step(c, a);
      if (stage_done(c)) return true;
    }
    return false;
  };
  auto distance = [&](const GridWorldState& from) {
    if (stage_done(from)) return 0;
    std::vector<int> seen(static_cast<std::size_t>(s.n) * s.n * 4, -1);
    std::deque<GridWorldState> q{from};
    seen[key(from)] = 0;
    while (!q.empty()) {
      GridWorldState g = q.front();
      q.pop_front();
      const int d = seen[key(g)];
      if (finishing_move(g)) return d + 1;
      for (std::uint32_t a : {tasks::forward, tasks::rotate_right}) {
        GridWorldState c = g;
        c.T = 1 << 30;
        doorkey_step(c, a);
        if (stage_done(c)) return d + 1;
        if (seen[key(c)] < 0) {
          seen[key(c)] = d + 1;
          q.push_back(c);
        }
      }
    }
    return 1 << 29;
  };
  std::uint32_t best = 0;
  int best_cost = 1 << 30;
  for (std::uint32_t a : {tasks::forward, tasks::rotate_right, tasks::grab, tasks::toggle}) {
    GridWorldState c = s;
    c.T = 1 << 30;
    doorkey_step(c, a);
    if (key(c) == key(s) && stage(c) == st) continue;  // no effect
    const int cost = 1 + distance(c);
    if (cost < best_cost) best = a, best_cost = cost;
  }
  return best;
}

}  // namespace nsolver::oracle
