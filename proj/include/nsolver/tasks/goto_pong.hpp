#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "nsolver/tasks/common.hpp"

namespace nsolver::tasks {

/// Close the vertical gap first, then the horizontal one.
inline Move goto_action(Cell agent, Cell goal) {
  if (agent.r < goal.r) return Move::down;
  if (agent.r > goal.r) return Move::up;
  return agent.c > goal.c ? Move::left : Move::right;
}

/// Black room inside a 1-pixel white border; green agent, red goal.
inline Example make_goto(int size, std::uint64_t seed) {
  if (size < 4) throw std::invalid_argument("goto size must be >= 4, got " + std::to_string(size));
  Rng rng(seed);
  const std::uint64_t interior = static_cast<std::uint64_t>(size - 2) * (size - 2);
  const auto a = uniform_index(rng, interior);
  auto g = uniform_index(rng, interior - 1);
  if (g >= a) ++g;
  const Cell agent{1 + static_cast<int>(a / (size - 2)), 1 + static_cast<int>(a % (size - 2))};
  const Cell goal{1 + static_cast<int>(g / (size - 2)), 1 + static_cast<int>(g % (size - 2))};
  Canvas img(size, size, color::white);
  img.fill_rect(1, 1, size - 2, size - 2, color::black);
  img.set(agent.r, agent.c, color::green);
  img.set(goal.r, goal.c, color::red);
  return {std::move(img).tensor(), {goto_action(agent, goal)}, static_cast<std::uint32_t>(size)};
}

inline bool check_goto(const Example& ex) {
  const Canvas img(ex.input);
  const Cell agent = find_unique(img, color::green, "agent");
  const Cell goal = find_unique(img, color::red, "goal");
  return ex.target.size() == 1 && ex.target[0] == goto_action(agent, goal);
}

enum PongAction : std::uint32_t { pong_left = 0, pong_right = 1, pong_stay = 2 };

inline constexpr int kPaddleWidth = 3;

inline PongAction pong_action(int ball_col, int paddle_center) {
  if (ball_col < paddle_center) return pong_left;
  if (ball_col > paddle_center) return pong_right;
  return pong_stay;
}

/// White walls on top, left and right; green paddle on the row above the open
/// bottom edge; red ball anywhere above the paddle row.
inline Example make_pong(int size, std::uint64_t seed) {
  if (size < kPaddleWidth + 2) throw std::invalid_argument("pong size must be >= 5, got " + std::to_string(size));
  Rng rng(seed);
  const int center = 2 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(size - 4)));
  const Cell ball{1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(size - 3))),
                  1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(size - 2)))};
  Canvas img(size, size);
  img.fill_rect(0, 0, 1, size, color::white);
  img.fill_rect(0, 0, size, 1, color::white);
  img.fill_rect(0, size - 1, size, 1, color::white);
  img.fill_rect(size - 2, center - 1, 1, kPaddleWidth, color::green);
  img.set(ball.r, ball.c, color::red);
  return {std::move(img).tensor(), {pong_action(ball.c, center)}, static_cast<std::uint32_t>(size)};
}

inline bool check_pong(const Example& ex) {
  const Canvas img(ex.input);
  const auto paddle = img.find(color::green);
  if (paddle.size() != kPaddleWidth) throw FormatError("pong paddle must be 3 pixels wide");
  const Cell ball = find_unique(img, color::red, "ball");
  return ex.target.size() == 1 && ex.target[0] == pong_action(ball.c, paddle[1].c);
}

}  // namespace nsolver::tasks
