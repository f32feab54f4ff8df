#pragma once

#include <array>
#include <optional>

#include "zoomprop/errors.hpp"

namespace zoomprop {

// Axis-aligned rectangle in pixel coordinates, (x1, y1) top-left and
// (x2, y2) bottom-right. Always has strictly positive width and height.
class Box {
 public:
  Box(double x1, double y1, double x2, double y2);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }

  // Non-strict: shared edges count as containment.
  bool contains(const Box& other) const;

  friend bool operator==(const Box&, const Box&) = default;
  friend auto operator<=>(const Box&, const Box&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

// Clip to [0,width]x[0,height]. Returns nullopt if nothing remains.
std::optional<Box> clip_to(const Box& b, double width, double height);

// Overlap-pattern taxonomy: 3 inclusion kinds x 4 center quadrants, plus one
// ideal-overlap category.
enum class Inclusion { kRoiContainsObject = 0, kRoiInsideObject = 1, kMutualOverlap = 2 };
enum class Quadrant { kUpperLeft = 0, kUpperRight = 1, kBottomLeft = 2, kBottomRight = 3 };

class PatternIndex {
 public:
  static constexpr int kCount = 13;
  static constexpr int kIdeal = 12;

  explicit PatternIndex(int value);
  PatternIndex(Inclusion inclusion, Quadrant quadrant);
  static PatternIndex ideal() { return PatternIndex(kIdeal); }

  int value() const { return value_; }
  bool is_ideal() const { return value_ == kIdeal; }

  friend bool operator==(PatternIndex, PatternIndex) = default;

 private:
  int value_;
};

struct OverlapThresholds {
  double low = 0.1;   // iou below this: no pattern
  double high = 0.7;  // iou strictly above this: ideal category
};

std::optional<PatternIndex> classify_overlap_pattern(const Box& roi, const Box& gt,
                                                     OverlapThresholds thresholds = {});

// Target corners expressed in the RoI's normalized frame.
struct CornerDeltas {
  double dx1 = 0, dy1 = 0, dx2 = 0, dy2 = 0;

  std::array<double, 4> as_array() const { return {dx1, dy1, dx2, dy2}; }
  friend bool operator==(const CornerDeltas&, const CornerDeltas&) = default;
};

CornerDeltas roi_relative_corners(const Box& roi, const Box& target);

// Inverse of roi_relative_corners. Throws InvalidBox when the decoded corners
// are degenerate.
Box apply_deltas(const Box& roi, const CornerDeltas& d);

}  // namespace zoomprop
