#include "msgp/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "msgp/errors.hpp"

namespace msgp::quadrature {
namespace {

Rule1d compute_gauss_legendre(int n) {
  Rule1d rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Newton from the Chebyshev-like initial guess.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

} // namespace

const Rule1d& gauss_legendre(int order) {
  if (order < 1) throw config_error("gauss_legendre: order must be >= 1");
  static std::map<int, Rule1d> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, compute_gauss_legendre(order)).first;
  return it->second;
}

double integrate_rect(const Rect& r, int order, const std::function<double(const Point&)>& f) {
  if (r.width() <= 0.0 || r.height() <= 0.0) return 0.0;
  const Rule1d& rule = gauss_legendre(order);
  const double cx = 0.5 * (r.x0 + r.x1), hx = 0.5 * r.width();
  const double cy = 0.5 * (r.y0 + r.y1), hy = 0.5 * r.height();
  double sum = 0.0;
  for (int i = 0; i < order; ++i) {
    const double x = cx + hx * rule.nodes[i];
    double row = 0.0;
    for (int j = 0; j < order; ++j) {
      row += rule.weights[j] * f({x, cy + hy * rule.nodes[j]});
    }
    sum += rule.weights[i] * row;
  }
  return sum * hx * hy;
}

double integrate_rect_split(const Rect& r, const Point& split, int order,
                            const std::function<double(const Point&)>& f) {
  const bool inside_x = split.x > r.x0 && split.x < r.x1;
  const bool inside_y = split.y > r.y0 && split.y < r.y1;
  if (!inside_x && !inside_y) return integrate_rect(r, order, f);
  const double xs[] = {r.x0, inside_x ? split.x : r.x1, r.x1};
  const double ys[] = {r.y0, inside_y ? split.y : r.y1, r.y1};
  double sum = 0.0;
  for (int i = 0; i < (inside_x ? 2 : 1); ++i)
    for (int j = 0; j < (inside_y ? 2 : 1); ++j)
      sum += integrate_rect({xs[i], ys[j], xs[i + 1], ys[j + 1]}, order, f);
  return sum;
}

} // namespace msgp::quadrature
