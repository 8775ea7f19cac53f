#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nsolver/error.hpp"
#include "nsolver/rng.hpp"
#include "nsolver/tensor.hpp"

namespace nsolver::tasks {

/// One (input, target) pair. Same-size tasks carry one class per position in
/// row-major order; different-size tasks carry exactly one class.
struct Example {
  Tensor<float> input;  // [C, L] or [C, H, W], values in [0, 1]
  std::vector<std::uint32_t> target;
  std::uint32_t size = 0;  // the generator's nominal size

  friend bool operator==(const Example&, const Example&) = default;
};

using Color = std::array<float, 3>;

namespace color {
inline constexpr Color black{0, 0, 0};
inline constexpr Color white{1, 1, 1};
inline constexpr Color green{0, 1, 0};
inline constexpr Color red{1, 0, 0};
inline constexpr Color yellow{1, 1, 0};
inline constexpr Color blue{0, 0, 1};
}  // namespace color

/// Action indices of the grid-navigation tasks (GoTo, 1S-Maze).
enum Move : std::uint32_t { up = 0, down = 1, left = 2, right = 3 };

struct Cell {
  int r = 0, c = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline constexpr std::array<Cell, 4> kMoveDelta{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

/// RGB image helpers over a [3, H, W] tensor.
class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w, Color fill = color::black) : t_({3, h, w}) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) set(static_cast<int>(r), static_cast<int>(c), fill);
  }
  explicit Canvas(Tensor<float> t) : t_(std::move(t)) {
    if (t_.rank() != 3 || t_.dim(0) != 3) throw ShapeError("expected an RGB [3,H,W] image, got " + to_string(t_.shape()));
  }

  int h() const { return static_cast<int>(t_.dim(1)); }
  int w() const { return static_cast<int>(t_.dim(2)); }
  bool inside(int r, int c) const { return r >= 0 && c >= 0 && r < h() && c < w(); }

  void set(int r, int c, Color col) {
    for (std::size_t k = 0; k < 3; ++k) t_[index(k, r, c)] = col[k];
  }
  void fill_rect(int r, int c, int nh, int nw, Color col) {
    for (int i = 0; i < nh; ++i)
      for (int j = 0; j < nw; ++j) set(r + i, c + j, col);
  }
  Color get(int r, int c) const { return {t_[index(0, r, c)], t_[index(1, r, c)], t_[index(2, r, c)]}; }

  /// All pixels of exactly this color, row-major.
  std::vector<Cell> find(Color col) const {
    std::vector<Cell> out;
    for (int r = 0; r < h(); ++r)
      for (int c = 0; c < w(); ++c)
        if (get(r, c) == col) out.push_back({r, c});
    return out;
  }

  const Tensor<float>& tensor() const& { return t_; }
  Tensor<float> tensor() && { return std::move(t_); }

 private:
  std::size_t index(std::size_t k, int r, int c) const {
    return (k * t_.dim(1) + static_cast<std::size_t>(r)) * t_.dim(2) + static_cast<std::size_t>(c);
  }
  Tensor<float> t_;
};

/// The single pixel of a color, or a FormatError.
inline Cell find_unique(const Canvas& img, Color col, std::string_view what) {
  auto cells = img.find(col);
  if (cells.size() != 1) {
    throw FormatError("expected exactly one " + std::string(what) + " pixel, found " + std::to_string(cells.size()));
  }
  return cells[0];
}

template <class Seq>
auto pick(Rng& rng, const Seq& items) -> decltype(items[0]) {
  if (items.empty()) throw std::logic_error("pick from an empty set");
  return items[uniform_index(rng, items.size())];
}

}  // namespace nsolver::tasks
