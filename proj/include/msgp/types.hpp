#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace msgp {

/// Support scale of an observation or prediction target. Block layouts order
/// coarse before fine, matching the stacked observation vector [y_c; y_f].
enum class Scale : int { Coarse = 0, Fine = 1 };

inline const char* to_string(Scale s) { return s == Scale::Coarse ? "coarse" : "fine"; }

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct TaggedPoint {
  Point p;
  Scale scale = Scale::Fine;
};

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(const Point& p) const {
    return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
  }
  /// Intersection with another rectangle; empty intersections collapse to zero area.
  Rect clip(const Rect& o) const {
    Rect r;
    r.x0 = std::max(x0, o.x0);
    r.y0 = std::max(y0, o.y0);
    r.x1 = std::max(r.x0, std::min(x1, o.x1));
    r.y1 = std::max(r.y0, std::min(y1, o.y1));
    return r;
  }
};

} // namespace msgp
