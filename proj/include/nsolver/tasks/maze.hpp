#pragma once

#include <cstdint>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsolver/tasks/common.hpp"

namespace nsolver::tasks {

/// Pixel geometry of a rendered maze: the maze lives on an odd `units` x
/// `units` lattice (cells at even coordinates, walls or passages between),
/// each unit drawn as `unit_px` pixels inside a border of `border_px`.
struct MazeGeometry {
  int units = 0;
  int unit_px = 1;
  int border_px = 1;

  int image_side() const { return units * unit_px + 2 * border_px; }
  int cells_per_side() const { return (units + 1) / 2; }

  /// Thick style: 2-pixel corridors and a 3-pixel border (24 = 9*2 + 3*2).
  static MazeGeometry thick(int image_side) {
    MazeGeometry g{(image_side - 6) / 2, 2, 3};
    if (image_side < 12 || g.image_side() != image_side || g.units % 2 == 0) {
      throw std::invalid_argument("thick maze size must be 2*u + 6 with odd u >= 3, got " + std::to_string(image_side));
    }
    return g;
  }

  /// Thin style: 1-pixel corridors and border.
  static MazeGeometry thin(int image_side) {
    MazeGeometry g{image_side - 2, 1, 1};
    if (image_side < 5 || image_side % 2 == 0) {
      throw std::invalid_argument("thin maze size must be odd and >= 5, got " + std::to_string(image_side));
    }
    return g;
  }
};

/// A perfect maze on the unit lattice: open[u] is true for corridor units.
struct Maze {
  int units = 0;
  std::vector<char> open;

  bool is_open(Cell u) const { return u.r >= 0 && u.c >= 0 && u.r < units && u.c < units && open[idx(u)]; }
  std::size_t idx(Cell u) const { return static_cast<std::size_t>(u.r) * units + u.c; }

  std::vector<Cell> corridor_units() const {
    std::vector<Cell> out;
    for (int r = 0; r < units; ++r)
      for (int c = 0; c < units; ++c)
        if (open[idx({r, c})]) out.push_back({r, c});
    return out;
  }
};

/// Randomized depth-first carving from a random cell.
inline Maze carve_maze(int units, Rng& rng) {
  if (units < 1 || units % 2 == 0) throw std::invalid_argument("maze lattice must have odd extent");
  Maze m{units, std::vector<char>(static_cast<std::size_t>(units) * units, 0)};
  const int cells = (units + 1) / 2;
  Cell start{2 * static_cast<int>(uniform_index(rng, cells)), 2 * static_cast<int>(uniform_index(rng, cells))};
  std::vector<Cell> stack{start};
  m.open[m.idx(start)] = 1;
  while (!stack.empty()) {
    const Cell cur = stack.back();
    std::vector<int> dirs;
    for (int d = 0; d < 4; ++d) {
      const Cell nxt{cur.r + 2 * kMoveDelta[d].r, cur.c + 2 * kMoveDelta[d].c};
      if (nxt.r >= 0 && nxt.c >= 0 && nxt.r < units && nxt.c < units && !m.open[m.idx(nxt)]) dirs.push_back(d);
    }
    if (dirs.empty()) {
      stack.pop_back();
      continue;
    }
    const int d = pick(rng, dirs);
    const Cell wall{cur.r + kMoveDelta[d].r, cur.c + kMoveDelta[d].c};
    const Cell nxt{cur.r + 2 * kMoveDelta[d].r, cur.c + 2 * kMoveDelta[d].c};
    m.open[m.idx(wall)] = 1;
    m.open[m.idx(nxt)] = 1;
    stack.push_back(nxt);
  }
  return m;
}

/// Shortest path between two open units (inclusive of both ends), by BFS.
inline std::vector<Cell> maze_path(const Maze& m, Cell from, Cell to) {
  std::vector<int> parent(m.open.size(), -1);
  std::queue<Cell> q;
  q.push(from);
  parent[m.idx(from)] = static_cast<int>(m.idx(from));
  while (!q.empty()) {
    const Cell cur = q.front();
    q.pop();
    if (cur == to) break;
    for (const auto& d : kMoveDelta) {
      const Cell nxt{cur.r + d.r, cur.c + d.c};
      if (m.is_open(nxt) && parent[m.idx(nxt)] < 0) {
        parent[m.idx(nxt)] = static_cast<int>(m.idx(cur));
        q.push(nxt);
      }
    }
  }
  if (parent[m.idx(to)] < 0) throw std::logic_error("maze goal unreachable");
  std::vector<Cell> path{to};
  while (!(path.back() == from)) {
    const int p = parent[m.idx(path.back())];
    path.push_back({p / m.units, p % m.units});
  }
  return {path.rbegin(), path.rend()};
}

inline Move step_direction(Cell from, Cell to) {
  for (std::uint32_t d = 0; d < 4; ++d) {
    if (from.r + kMoveDelta[d].r == to.r && from.c + kMoveDelta[d].c == to.c) return static_cast<Move>(d);
  }
  throw std::logic_error("cells are not adjacent");
}

/// Corridors white, walls black, agent green, goal red; each marker covers
/// its whole unit.
inline Canvas render_maze(const Maze& m, const MazeGeometry& g, Cell agent, Cell goal) {
  const int n = g.image_side();
  Canvas img(n, n);
  auto paint = [&](Cell u, Color col) {
    img.fill_rect(g.border_px + u.r * g.unit_px, g.border_px + u.c * g.unit_px, g.unit_px, g.unit_px, col);
  };
  for (const auto& u : m.corridor_units()) paint(u, color::white);
  paint(agent, color::green);
  paint(goal, color::red);
  return img;
}

/// Same-size maze: target marks every pixel of the start-to-goal path.
inline Example make_maze(const MazeGeometry& g, std::uint64_t seed) {
  Rng rng(seed);
  const Maze m = carve_maze(g.units, rng);
  const int cells = g.cells_per_side();
  auto random_cell = [&] {
    return Cell{2 * static_cast<int>(uniform_index(rng, cells)), 2 * static_cast<int>(uniform_index(rng, cells))};
  };
  const Cell start = random_cell();
  Cell goal = random_cell();
  while (goal == start) goal = random_cell();
  const int n = g.image_side();
  Example ex;
  ex.size = static_cast<std::uint32_t>(n);
  ex.target.assign(static_cast<std::size_t>(n) * n, 0);
  for (const auto& u : maze_path(m, start, goal)) {
    for (int i = 0; i < g.unit_px; ++i)
      for (int j = 0; j < g.unit_px; ++j)
        ex.target[static_cast<std::size_t>(g.border_px + u.r * g.unit_px + i) * n + g.border_px + u.c * g.unit_px + j] = 1;
  }
  ex.input = std::move(render_maze(m, g, start, goal)).tensor();
  return ex;
}

/// Different-size maze (thin style): agent uniform over corridor units other
/// than the goal; label is the first move of the shortest path.
inline Example make_one_step_maze(int image_side, std::uint64_t seed) {
  const MazeGeometry g = MazeGeometry::thin(image_side);
  Rng rng(seed);
  const Maze m = carve_maze(g.units, rng);
  const int cells = g.cells_per_side();
  const Cell goal{2 * static_cast<int>(uniform_index(rng, cells)), 2 * static_cast<int>(uniform_index(rng, cells))};
  std::vector<Cell> starts;
  for (const auto& u : m.corridor_units())
    if (!(u == goal)) starts.push_back(u);
  const Cell agent = pick(rng, starts);
  const auto path = maze_path(m, agent, goal);
  Example ex;
  ex.size = static_cast<std::uint32_t>(image_side);
  ex.target = {step_direction(path[0], path[1])};
  ex.input = std::move(render_maze(m, g, agent, goal)).tensor();
  return ex;
}

namespace detail {

/// Unit lattice read back from an image (top-left pixel of each unit).
inline Maze parse_maze(const Canvas& img, const MazeGeometry& g, Cell& agent, Cell& goal) {
  if (img.h() != g.image_side() || img.w() != g.image_side()) throw FormatError("maze image has the wrong size");
  Maze m{g.units, std::vector<char>(static_cast<std::size_t>(g.units) * g.units, 0)};
  int n_agent = 0, n_goal = 0;
  for (int r = 0; r < g.units; ++r) {
    for (int c = 0; c < g.units; ++c) {
      const Color col = img.get(g.border_px + r * g.unit_px, g.border_px + c * g.unit_px);
      m.open[m.idx({r, c})] = col != color::black;
      if (col == color::green) agent = {r, c}, ++n_agent;
      if (col == color::red) goal = {r, c}, ++n_goal;
    }
  }
  if (n_agent != 1 || n_goal != 1) throw FormatError("maze image needs exactly one agent and one goal");
  return m;
}

}  // namespace detail

inline bool check_maze(const Example& ex, const MazeGeometry& g) {
  Cell agent, goal;
  const Maze m = detail::parse_maze(Canvas(ex.input), g, agent, goal);
  const int n = g.image_side();
  std::vector<std::uint32_t> want(static_cast<std::size_t>(n) * n, 0);
  for (const auto& u : maze_path(m, agent, goal))
    for (int i = 0; i < g.unit_px; ++i)
      for (int j = 0; j < g.unit_px; ++j)
        want[static_cast<std::size_t>(g.border_px + u.r * g.unit_px + i) * n + g.border_px + u.c * g.unit_px + j] = 1;
  return want == ex.target;
}

inline bool check_one_step_maze(const Example& ex) {
  const auto g = MazeGeometry::thin(static_cast<int>(ex.input.dim(1)));
  Cell agent, goal;
  const Maze m = detail::parse_maze(Canvas(ex.input), g, agent, goal);
  const auto path = maze_path(m, agent, goal);
  return ex.target.size() == 1 && ex.target[0] == step_direction(path[0], path[1]);
}

}  // namespace nsolver::tasks
