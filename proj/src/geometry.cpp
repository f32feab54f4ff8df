#include "zoomprop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace zoomprop {

Box::Box(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2)) ||
      !(x1 < x2) || !(y1 < y2)) {
    std::ostringstream os;
    os << "degenerate box (" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << ")";
    throw InvalidBox(os.str());
  }
}

bool Box::contains(const Box& o) const {
  return x1_ <= o.x1_ && y1_ <= o.y1_ && o.x2_ <= x2_ && o.y2_ <= y2_;
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

std::optional<Box> clip_to(const Box& b, double width, double height) {
  const double x1 = std::clamp(b.x1(), 0.0, width);
  const double y1 = std::clamp(b.y1(), 0.0, height);
  const double x2 = std::clamp(b.x2(), 0.0, width);
  const double y2 = std::clamp(b.y2(), 0.0, height);
  if (!(x1 < x2) || !(y1 < y2)) return std::nullopt;
  return Box(x1, y1, x2, y2);
}

PatternIndex::PatternIndex(int value) : value_(value) {
  if (value < 0 || value >= kCount) throw std::out_of_range("pattern index out of range");
}

PatternIndex::PatternIndex(Inclusion inclusion, Quadrant quadrant)
    : value_(4 * static_cast<int>(inclusion) + static_cast<int>(quadrant)) {}

std::optional<PatternIndex> classify_overlap_pattern(const Box& roi, const Box& gt,
                                                     OverlapThresholds thresholds) {
  const double overlap = iou(roi, gt);
  if (overlap < thresholds.low) return std::nullopt;
  if (overlap > thresholds.high) return PatternIndex::ideal();

  Inclusion inclusion = Inclusion::kMutualOverlap;
  if (roi.contains(gt)) {
    inclusion = Inclusion::kRoiContainsObject;
  } else if (gt.contains(roi)) {
    inclusion = Inclusion::kRoiInsideObject;
  }

  // Ties resolve toward upper / left.
  const bool left = gt.center_x() <= roi.center_x();
  const bool upper = gt.center_y() <= roi.center_y();
  Quadrant quadrant;
  if (upper) {
    quadrant = left ? Quadrant::kUpperLeft : Quadrant::kUpperRight;
  } else {
    quadrant = left ? Quadrant::kBottomLeft : Quadrant::kBottomRight;
  }
  return PatternIndex(inclusion, quadrant);
}

CornerDeltas roi_relative_corners(const Box& roi, const Box& target) {
  const double w = roi.width();
  const double h = roi.height();
  return {(target.x1() - roi.x1()) / w, (target.y1() - roi.y1()) / h,
          (target.x2() - roi.x2()) / w, (target.y2() - roi.y2()) / h};
}

Box apply_deltas(const Box& roi, const CornerDeltas& d) {
  const double w = roi.width();
  const double h = roi.height();
  return Box(roi.x1() + d.dx1 * w, roi.y1() + d.dy1 * h, roi.x2() + d.dx2 * w,
             roi.y2() + d.dy2 * h);
}

}  // namespace zoomprop
