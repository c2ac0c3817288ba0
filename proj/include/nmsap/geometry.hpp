#pragma once

#include <algorithm>
#include <array>

namespace nmsap {

/// Axis-aligned box in pixel coordinates, corner form (x_min, y_min, x_max, y_max).
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  /// Builds a box from the COCO wire form [x, y, width, height].
  static constexpr BBox from_xywh(double x, double y, double w, double h) noexcept {
    return BBox{x, y, x + w, y + h};
  }

  constexpr std::array<double, 4> to_xywh() const noexcept {
    return {x_min, y_min, x_max - x_min, y_max - y_min};
  }

  constexpr double width() const noexcept { return x_max - x_min; }
  constexpr double height() const noexcept { return y_max - y_min; }

  constexpr bool is_canonical() const noexcept { return x_min <= x_max && y_min <= y_max; }

  /// Swaps reversed corners so that min <= max on both axes.
  constexpr BBox canonical() const noexcept {
    return BBox{std::min(x_min, x_max), std::min(y_min, y_max), std::max(x_min, x_max),
                std::max(y_min, y_max)};
  }

  constexpr BBox scaled(double s) const noexcept {
    return BBox{x_min * s, y_min * s, x_max * s, y_max * s};
  }

  constexpr BBox translated(double dx, double dy) const noexcept {
    return BBox{x_min + dx, y_min + dy, x_max + dx, y_max + dy};
  }

  friend constexpr bool operator==(const BBox&, const BBox&) = default;
};

constexpr double area(const BBox& b) noexcept {
  return (b.x_max - b.x_min) * (b.y_max - b.y_min);
}

constexpr double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

/// Intersection over union; 0 when the union is empty, so degenerate boxes
/// overlap nothing.
constexpr double iou(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  const double uni = area(a) + area(b) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace nmsap
