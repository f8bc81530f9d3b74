#pragma once

#include <cmath>
#include <limits>

#include "peanut/grid.hpp"

namespace peanut {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

/// Wraps to [0, 360).
inline double wrap_degrees(double a) {
  a = std::fmod(a, 360.0);
  if (a < 0.0) a += 360.0;
  return a;
}

/// Wraps to (-180, 180].
inline double wrap_signed_degrees(double a) {
  a = wrap_degrees(a);
  if (a > 180.0) a -= 360.0;
  return a;
}

/// Continuous allocentric pose; theta in degrees, 0 = +x, counter-clockwise.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  bool operator==(const Pose&) const = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 heading_vec(double theta_deg) {
  double r = deg_to_rad(theta_deg);
  return {std::cos(r), std::sin(r)};
}

inline Cell cell_of(double x, double y, double resolution) {
  return Cell{static_cast<int>(std::floor(y / resolution)),
              static_cast<int>(std::floor(x / resolution))};
}

inline Vec2 cell_center(Cell c, double resolution) {
  return {(c.j + 0.5) * resolution, (c.i + 0.5) * resolution};
}

/// Amanatides-Woo grid traversal. Visits each cell entered by the ray,
/// starting with the cell containing the origin (entry distance 0), in
/// order of increasing entry distance, until `visit` returns false, the
/// ray leaves the grid, or the entry distance exceeds max_range.
/// visit: (int i, int j, double t_entry_meters) -> bool (continue?).
template <typename Visit>
void march_ray(double x, double y, double dir_deg, double max_range, double resolution, int h,
               int w, Visit&& visit) {
  double r = deg_to_rad(dir_deg);
  double dx = std::cos(r);
  double dy = std::sin(r);
  int j = static_cast<int>(std::floor(x / resolution));
  int i = static_cast<int>(std::floor(y / resolution));
  if (i < 0 || i >= h || j < 0 || j >= w) return;
  if (!visit(i, j, 0.0)) return;

  int step_j = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
  int step_i = dy > 0.0 ? 1 : (dy < 0.0 ? -1 : 0);
  double inf = std::numeric_limits<double>::infinity();
  // Distance along the ray to the first vertical / horizontal cell boundary.
  double t_max_x = inf, t_max_y = inf, t_dx = inf, t_dy = inf;
  if (step_j != 0) {
    double next_x = (step_j > 0 ? (j + 1) : j) * resolution;
    t_max_x = (next_x - x) / dx;
    t_dx = resolution / std::abs(dx);
  }
  if (step_i != 0) {
    double next_y = (step_i > 0 ? (i + 1) : i) * resolution;
    t_max_y = (next_y - y) / dy;
    t_dy = resolution / std::abs(dy);
  }

  while (true) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      t_max_x += t_dx;
      j += step_j;
    } else {
      t = t_max_y;
      t_max_y += t_dy;
      i += step_i;
    }
    if (t > max_range) return;
    if (i < 0 || i >= h || j < 0 || j >= w) return;
    if (!visit(i, j, t)) return;
  }
}

/// True if the straight segment from (x, y) to the center of `target` meets
/// no blocked cell before reaching `target`. The origin cell and the target
/// cell itself are not treated as blockers.
template <typename BlockedFn>
bool line_of_sight(double x, double y, Cell target, double resolution, int h, int w,
                   BlockedFn&& blocked) {
  Vec2 c = cell_center(target, resolution);
  double ddx = c.x - x;
  double ddy = c.y - y;
  double dist = std::hypot(ddx, ddy);
  if (dist < 1e-9) return true;
  double dir = rad_to_deg(std::atan2(ddy, ddx));
  bool visible = false;
  bool first = true;
  march_ray(x, y, dir, dist + resolution, resolution, h, w,
            [&](int i, int j, double) {
              if (i == target.i && j == target.j) {
                visible = true;
                return false;
              }
              if (!first && blocked(i, j)) return false;
              first = false;
              return true;
            });
  return visible;
}

}  // namespace peanut
