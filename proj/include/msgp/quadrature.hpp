#pragma once

#include <functional>
#include <vector>

#include "msgp/types.hpp"

namespace msgp::quadrature {

struct Rule1d {
  std::vector<double> nodes;    // in (-1, 1)
  std::vector<double> weights;  // sum to 2
};

/// Gauss-Legendre rule of the given order; cached per order.
const Rule1d& gauss_legendre(int order);

/// Tensor-product integral of f over an axis-aligned rectangle.
double integrate_rect(const Rect& r, int order, const std::function<double(const Point&)>& f);

/// Same, but if `split` lies strictly inside `r`, the rectangle is divided
/// into the (up to four) subrectangles meeting at `split` before applying the
/// rule. Used to keep kernels with a kink at `split` away from quadrature
/// panel interiors.
double integrate_rect_split(const Rect& r, const Point& split, int order,
                            const std::function<double(const Point&)>& f);

} // namespace msgp::quadrature
