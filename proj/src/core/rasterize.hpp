#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace sculpt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double edge_function(Vec2 a, Vec2 b, Vec2 p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); }

// Top-left ownership for edge a->b of a triangle normalized to positive
// edge-function area in y-down pixel coordinates (clockwise on screen).
inline bool owns_edge(Vec2 a, Vec2 b) {
  const double dy = b.y - a.y;
  const double dx = b.x - a.x;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

// Visits every pixel of a width×height grid whose center (col + 0.5,
// row + 0.5) lies inside triangle (p0, p1, p2), given in pixel units. Centers
// exactly on an edge belong to the triangle only under the top-left rule, so
// triangles sharing an edge never both claim a pixel. `fn(row, col, bary)`
// receives barycentric weights in the caller's vertex order. Returns false
// for zero-area triangles (nothing visited).
template <class Fn>
bool rasterize_triangle(Vec2 p0, Vec2 p1, Vec2 p2, int width, int height, Fn&& fn) {
  std::array<Vec2, 3> q{p0, p1, p2};
  std::array<int, 3> order{0, 1, 2};
  double area = edge_function(q[0], q[1], q[2]);
  if (area == 0.0 || !std::isfinite(area)) return false;
  if (area < 0.0) {
    std::swap(q[1], q[2]);
    std::swap(order[1], order[2]);
    area = -area;
  }
  const double min_x = std::min({q[0].x, q[1].x, q[2].x});
  const double max_x = std::max({q[0].x, q[1].x, q[2].x});
  const double min_y = std::min({q[0].y, q[1].y, q[2].y});
  const double max_y = std::max({q[0].y, q[1].y, q[2].y});
  const int c0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  const int c1 = std::min(width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
  const int r0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int r1 = std::min(height - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  const bool own0 = owns_edge(q[1], q[2]);
  const bool own1 = owns_edge(q[2], q[0]);
  const bool own2 = owns_edge(q[0], q[1]);
  const double inv_area = 1.0 / area;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const Vec2 p{c + 0.5, r + 0.5};
      const double w0 = edge_function(q[1], q[2], p);
      const double w1 = edge_function(q[2], q[0], p);
      const double w2 = edge_function(q[0], q[1], p);
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      if ((w0 == 0.0 && !own0) || (w1 == 0.0 && !own1) || (w2 == 0.0 && !own2)) continue;
      std::array<double, 3> bary{};
      bary[order[0]] = w0 * inv_area;
      bary[order[1]] = w1 * inv_area;
      bary[order[2]] = w2 * inv_area;
      fn(r, c, bary);
    }
  }
  return true;
}

}  // namespace sculpt
