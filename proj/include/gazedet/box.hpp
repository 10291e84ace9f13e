#pragma once

#include <algorithm>

namespace gazedet {

// Normalized center/size box. Valid boxes keep their center inside the unit
// square and have positive extent.
struct Box {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;

  double x0() const { return cx - w / 2.0; }
  double y0() const { return cy - h / 2.0; }
  double x1() const { return cx + w / 2.0; }
  double y1() const { return cy + h / 2.0; }
  double area() const { return w * h; }

  bool contains(double x, double y) const {
    return x >= x0() && x <= x1() && y >= y0() && y <= y1();
  }

  static Box from_corners(double x0, double y0, double x1, double y1) {
    return Box{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
  }

  // Intersect with the unit square; callers guarantee some overlap exists.
  Box clipped_to_unit() const {
    const double nx0 = std::clamp(x0(), 0.0, 1.0);
    const double ny0 = std::clamp(y0(), 0.0, 1.0);
    const double nx1 = std::clamp(x1(), 0.0, 1.0);
    const double ny1 = std::clamp(y1(), 0.0, 1.0);
    return from_corners(nx0, ny0, nx1, ny1);
  }
};

struct GroundTruthObject {
  int class_id = 0;
  Box box;
};

struct Detection {
  Box box;
  int class_id = 0;
  double confidence = 0.0;
};

}  // namespace gazedet
