#include "zoomprop/windows.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace zoomprop {

void WindowSpec::validate() const {
  if (side_ratios.empty()) throw ConfigError("window spec has no side ratios");
  for (double r : side_ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("window side ratio must lie in (0,1]");
  }
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) {
    throw ConfigError("window step fraction must lie in (0,1]");
  }
}

Frame::Frame(double x0, double y0, double w, double h) : x(x0), y(y0), width(w), height(h) {
  if (!(w > 0 && h > 0)) throw InvalidBox("frame must have positive extent");
}

int window_side(const Frame& frame, double ratio) {
  const double shorter = frame.shorter_side();
  auto side = static_cast<int>(std::lround(ratio * shorter));
  // Rounding up must not push the window past a fractional frame edge.
  if (side > shorter) side = static_cast<int>(std::floor(shorter));
  return side;
}

namespace {

// Grid offsets along one axis of length `extent`.
std::vector<double> axis_offsets(double extent, int side, double stride, bool flush) {
  std::vector<double> offsets;
  for (int i = 0;; ++i) {
    const double off = std::round(i * stride);
    if (off + side > extent) break;
    offsets.push_back(off);
  }
  if (flush && !offsets.empty() && offsets.back() + side < extent) {
    offsets.push_back(extent - side);
  }
  return offsets;
}

}  // namespace

std::vector<Box> sliding_windows(const Frame& frame, const WindowSpec& spec) {
  spec.validate();
  std::vector<double> ratios = spec.side_ratios;
  std::sort(ratios.begin(), ratios.end(), std::greater<>());

  std::vector<Box> out;
  std::set<Box> seen;
  for (double r : ratios) {
    const int side = window_side(frame, r);
    if (side < spec.min_side || side < 1) continue;
    const double stride = spec.step_fraction * side;
    const auto xs = axis_offsets(frame.width, side, stride, spec.flush_edges);
    const auto ys = axis_offsets(frame.height, side, stride, spec.flush_edges);
    for (double oy : ys) {
      for (double ox : xs) {
        Box b(frame.x + ox, frame.y + oy, frame.x + ox + side, frame.y + oy + side);
        if (seen.insert(b).second) out.push_back(b);
      }
    }
  }
  if (out.empty()) {
    std::ostringstream os;
    os << "no window of at least " << spec.min_side << " px fits a " << frame.width << "x"
       << frame.height << " frame";
    throw EmptyResult(os.str());
  }
  return out;
}

WindowSpec coarse_spec() { return {{1.0 / 2, 1.0 / 4}, 0.25}; }
WindowSpec dense_spec() { return {{1.0 / 2, 1.0 / 4, 1.0 / 8, 1.0 / 16}, 0.25}; }
WindowSpec cover_spec() { return {{1.0 / 4}, 0.5}; }

std::vector<Box> coarse_windows(const Frame& image) { return sliding_windows(image, coarse_spec()); }
std::vector<Box> dense_windows(const Frame& image) { return sliding_windows(image, dense_spec()); }
std::vector<Box> cover_regions(const Frame& image) { return sliding_windows(image, cover_spec()); }

}  // namespace zoomprop
