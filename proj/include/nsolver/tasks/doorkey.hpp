#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsolver/tasks/common.hpp"

namespace nsolver::tasks {

enum class Tile : std::uint8_t { floor, wall, goal, key, door };

enum DoorKeyAction : std::uint32_t { forward = 0, rotate_right = 1, grab = 2, toggle = 3 };

/// Facing directions in rotate-right order: east, south, west, north.
inline constexpr std::array<Cell, 4> kFacing{{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};

/// Agent color per facing direction, so the pose is visible in the image.
inline constexpr std::array<Color, 4> kAgentColor{{{0, 1, 0}, {0.5f, 1, 0}, {0, 1, 0.5f}, {0.5f, 1, 0.5f}}};

struct GridWorldState {
  int n = 0;
  std::vector<Tile> tiles;  // row-major n x n; the key tile disappears once carried
  Cell agent;
  int dir = 0;
  bool carrying_key = false;
  bool door_locked = true;
  bool door_open = false;
  int t = 0;
  int T = 0;
  bool done = false;

  Tile at(Cell p) const { return tiles[static_cast<std::size_t>(p.r) * n + p.c]; }
  Tile& at(Cell p) { return tiles[static_cast<std::size_t>(p.r) * n + p.c]; }
  Cell front() const { return {agent.r + kFacing[dir].r, agent.c + kFacing[dir].c}; }
  bool passable(Cell p) const {
    const Tile k = at(p);
    return k == Tile::floor || k == Tile::goal || (k == Tile::door && door_open);
  }
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

inline double doorkey_reward(int t, int T) { return 1.0 - 0.9 * static_cast<double>(t) / static_cast<double>(T); }

/// Two rooms split by a vertical wall with one locked door; the agent and the
/// key start in the left room, the goal sits in the bottom-right corner.
inline GridWorldState doorkey_reset(int n, std::uint64_t seed) {
  if (n < 5) throw std::invalid_argument("doorkey size must be >= 5, got " + std::to_string(n));
  Rng rng(seed);
  GridWorldState s;
  s.n = n;
  s.T = 10 * n * n;
  s.tiles.assign(static_cast<std::size_t>(n) * n, Tile::floor);
  for (int i = 0; i < n; ++i) {
    s.at({0, i}) = s.at({n - 1, i}) = s.at({i, 0}) = s.at({i, n - 1}) = Tile::wall;
  }
  s.at({n - 2, n - 2}) = Tile::goal;
  const int split = 2 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - 4)));
  for (int r = 0; r < n; ++r) s.at({r, split}) = Tile::wall;
  auto left_room_cell = [&] {
    for (;;) {
      const Cell p{1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - 2))),
                   1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(split - 1)))};
      if (s.at(p) == Tile::floor && !(p == s.agent)) return p;
    }
  };
  s.agent = {-1, -1};
  s.agent = left_room_cell();
  s.dir = static_cast<int>(uniform_index(rng, 4));
  const int door_row = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - 3)));
  s.at({door_row, split}) = Tile::door;
  s.at(left_room_cell()) = Tile::key;
  return s;
}

inline StepResult doorkey_step(GridWorldState& s, std::uint32_t action) {
  if (s.done) throw std::logic_error("step after the episode ended");
  if (action > toggle) throw std::invalid_argument("unknown doorkey action " + std::to_string(action));
  ++s.t;
  StepResult out;
  const Cell f = s.front();
  switch (action) {
    case forward:
      if (s.passable(f)) {
        s.agent = f;
        if (s.at(f) == Tile::goal) {
          out = {doorkey_reward(s.t, s.T), true};
        }
      }
      break;
    case rotate_right:
      s.dir = (s.dir + 1) % 4;
      break;
    case grab:
      if (!s.carrying_key && s.at(f) == Tile::key) {
        s.carrying_key = true;
        s.at(f) = Tile::floor;
      }
      break;
    case toggle:
      if (s.at(f) == Tile::door) {
        if (s.door_locked) {
          if (s.carrying_key) s.door_locked = false, s.door_open = true;
        } else {
          s.door_open = !s.door_open;
        }
      }
      break;
  }
  if (!out.done && s.t >= s.T) out = {0.0, true};
  s.done = out.done;
  return out;
}

/// Walls white, floor and open door black, goal red, key yellow, closed door
/// blue, agent colored by facing direction.
inline Tensor<float> doorkey_observation(const GridWorldState& s) {
  Canvas img(s.n, s.n);
  for (int r = 0; r < s.n; ++r) {
    for (int c = 0; c < s.n; ++c) {
      switch (s.at({r, c})) {
        case Tile::floor: break;
        case Tile::wall: img.set(r, c, color::white); break;
        case Tile::goal: img.set(r, c, color::red); break;
        case Tile::key: img.set(r, c, color::yellow); break;
        case Tile::door:
          if (!s.door_open) img.set(r, c, color::blue);
          break;
      }
    }
  }
  img.set(s.agent.r, s.agent.c, kAgentColor[s.dir]);
  return std::move(img).tensor();
}

/// Scripted controller: reach a pose facing the key, grab it, reach a pose
/// facing the door, open it, walk to the goal. Each leg is a shortest path
/// over (cell, facing) with forward and rotate-right moves; forward wins ties.
inline DoorKeyAction doorkey_oracle(const GridWorldState& s) {
  enum { to_key, to_door, to_goal } stage = !s.carrying_key ? to_key : !s.door_open ? to_door : to_goal;
  const Cell f = s.front();
  if (stage == to_key && s.at(f) == Tile::key) return grab;
  if (stage == to_door && s.at(f) == Tile::door) return toggle;

  const int n = s.n;
  auto id = [n](Cell p, int d) { return (static_cast<std::size_t>(p.r) * n + p.c) * 4 + d; };
  std::vector<int> dist(static_cast<std::size_t>(n) * n * 4, -1);
  std::deque<std::pair<Cell, int>> q;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Cell p{r, c};
      if (!s.passable(p)) continue;
      for (int d = 0; d < 4; ++d) {
        const Cell fp{r + kFacing[d].r, c + kFacing[d].c};
        const bool target = stage == to_goal ? s.at(p) == Tile::goal
                                             : s.at(fp) == (stage == to_key ? Tile::key : Tile::door);
        if (target) {
          dist[id(p, d)] = 0;
          q.emplace_back(p, d);
        }
      }
    }
  }
  // Reverse breadth-first search: predecessors via rotate-right and forward.
  while (!q.empty()) {
    const auto [p, d] = q.front();
    q.pop_front();
    const int k = dist[id(p, d)];
    const int back_dir = (d + 3) % 4;
    if (dist[id(p, back_dir)] < 0) {
      dist[id(p, back_dir)] = k + 1;
      q.emplace_back(p, back_dir);
    }
    const Cell prev{p.r - kFacing[d].r, p.c - kFacing[d].c};
    if (s.passable(prev) && s.at(prev) != Tile::goal && dist[id(prev, d)] < 0) {
      dist[id(prev, d)] = k + 1;
      q.emplace_back(prev, d);
    }
  }
  const int here = dist[id(s.agent, s.dir)];
  if (here < 0) throw std::logic_error("doorkey target unreachable");
  if (s.passable(f) && dist[id(f, s.dir)] == here - 1) return forward;
  return rotate_right;
}

/// A state drawn uniformly from the oracle's trajectory, labeled with the
/// oracle's action there.
inline Example make_doorkey(int n, std::uint64_t seed) {
  if (n < 6) throw std::invalid_argument("doorkey dataset size must be >= 6, got " + std::to_string(n));
  GridWorldState s = doorkey_reset(n, seed);
  std::vector<GridWorldState> visited;
  while (!s.done) {
    visited.push_back(s);
    doorkey_step(s, doorkey_oracle(s));
  }
  Rng rng(derive_seed(seed, {1}));
  const GridWorldState& pickd = visited[uniform_index(rng, visited.size())];
  return {doorkey_observation(pickd), {doorkey_oracle(pickd)}, static_cast<std::uint32_t>(n)};
}

/// Rebuilds the simulator state an observation shows. Step counters are not
/// visible and are reset.
inline GridWorldState parse_doorkey(const Tensor<float>& obs) {
  const Canvas img(obs);
  if (img.h() != img.w()) throw FormatError("doorkey observation must be square");
  GridWorldState s;
  s.n = img.h();
  s.T = 10 * s.n * s.n;
  s.tiles.assign(static_cast<std::size_t>(s.n) * s.n, Tile::floor);
  int agents = 0;
  bool key_seen = false, door_seen = false;
  for (int r = 0; r < s.n; ++r) {
    for (int c = 0; c < s.n; ++c) {
      const Color col = img.get(r, c);
      if (col == color::white) s.at({r, c}) = Tile::wall;
      else if (col == color::red) s.at({r, c}) = Tile::goal;
      else if (col == color::yellow) s.at({r, c}) = Tile::key, key_seen = true;
      else if (col == color::blue) s.at({r, c}) = Tile::door, door_seen = true;
      else if (col != color::black) {
        bool matched = false;
        for (int d = 0; d < 4; ++d) {
          if (col == kAgentColor[d]) s.agent = {r, c}, s.dir = d, matched = true, ++agents;
        }
        if (!matched) throw FormatError("doorkey observation has an unknown color");
      }
    }
  }
  if (agents != 1) throw FormatError("doorkey observation needs exactly one agent");
  s.carrying_key = !key_seen;
  s.door_open = !door_seen;
  s.door_locked = door_seen && key_seen;
  return s;
}

inline bool check_doorkey(const Example& ex) {
  return ex.target.size() == 1 && ex.target[0] == doorkey_oracle(parse_doorkey(ex.input));
}

}  // namespace nsolver::tasks
