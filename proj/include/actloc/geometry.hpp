#pragma once

// Box geometry. Boxes are half-open pixel rectangles [x, x+w) x [y, y+h),
// so integer boxes measure exactly like rasterized pixel sets.

#include <algorithm>
#include <cmath>
#include <optional>

#include "actloc/common.hpp"

namespace actloc {

struct BoundingBox {
  double x = 0.0;  // top-left
  double y = 0.0;
  double w = 0.0;  // must stay > 0
  double h = 0.0;

  double area() const { return w * h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double x2() const { return x + w; }
  double y2() const { return y + h; }

  bool operator==(const BoundingBox& o) const {
    return x == o.x && y == o.y && w == o.w && h == o.h;
  }
};

inline BoundingBox make_box(double x, double y, double w, double h) {
  ACTLOC_CHECK(w > 0.0 && h > 0.0, "box width/height must be positive");
  return BoundingBox{x, y, w, h};
}

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
  double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double box_iou(const BoundingBox& a, const BoundingBox& b) {
  double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

inline bool intersects_frame(const BoundingBox& b, int frame_w, int frame_h) {
  return b.x < frame_w && b.y < frame_h && b.x2() > 0.0 && b.y2() > 0.0;
}

// Intersection with the frame rectangle; empty when the clip has no area.
inline std::optional<BoundingBox> clip_to_frame(const BoundingBox& b,
                                                int frame_w, int frame_h) {
  double x1 = std::max(b.x, 0.0);
  double y1 = std::max(b.y, 0.0);
  double x2 = std::min(b.x2(), double(frame_w));
  double y2 = std::min(b.y2(), double(frame_h));
  if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) return std::nullopt;
  return BoundingBox{x1, y1, x2 - x1, y2 - y1};
}

// Integer pixel range covered by a box after clipping: [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

inline PixelRect pixel_rect(const BoundingBox& b, int frame_w, int frame_h) {
  PixelRect r;
  r.x0 = std::max(0, int(std::floor(b.x)));
  r.y0 = std::max(0, int(std::floor(b.y)));
  r.x1 = std::min(frame_w, int(std::ceil(b.x2())));
  r.y1 = std::min(frame_h, int(std::ceil(b.y2())));
  return r;
}

}  // namespace actloc
