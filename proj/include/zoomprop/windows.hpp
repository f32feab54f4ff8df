#pragma once

#include <vector>

#include "zoomprop/geometry.hpp"

namespace zoomprop {

// Square sliding-window family: each ratio gives a side as a fraction of the
// frame's shorter side, stepped by step_fraction of that side.
struct WindowSpec {
  std::vector<double> side_ratios;
  double step_fraction = 0.25;
  // Append a window flush with the far edge when the grid stops short of it.
  bool flush_edges = true;
  // Ratios whose rounded side falls below this are skipped.
  int min_side = 8;

  void validate() const;
};

struct Frame {
  double x = 0, y = 0;
  double width = 0, height = 0;

  Frame() = default;
  Frame(double x0, double y0, double w, double h);
  static Frame of(const Box& b) { return Frame(b.x1(), b.y1(), b.width(), b.height()); }
  double shorter_side() const { return width < height ? width : height; }
  Box as_box() const { return Box(x, y, x + width, y + height); }
};

// Ordered by ratio descending, then y, then x; duplicates removed.
std::vector<Box> sliding_windows(const Frame& frame, const WindowSpec& spec);

WindowSpec coarse_spec();
WindowSpec dense_spec();
WindowSpec cover_spec();

std::vector<Box> coarse_windows(const Frame& image);
std::vector<Box> dense_windows(const Frame& image);
std::vector<Box> cover_regions(const Frame& image);

// Rounded integer side a ratio produces in the given frame.
int window_side(const Frame& frame, double ratio);

}  // namespace zoomprop
