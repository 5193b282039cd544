#include <algorithm>
#include <cmath>

#include "isap/scene.hpp"

namespace isap::scene {

namespace {

struct Grid {
  std::size_t size;
  double res;  // metres per pixel

  double x_of(std::size_t col) const { return (double(col) + 0.5 - 0.5 * double(size)) * res; }
  double y_of(std::size_t row) const { return kRasterAhead - (double(row) + 0.5) * res; }
};

enum class Cell { off, road, divider };

Cell classify(const Scene& s, double x, double y, double res) {
  const RoadLayout& r = s.road;
  const double w = r.lane_width;
  const double tol = 0.5 * res;
  if (s.map_kind == MapKind::roundabout) {
    const double sign = s.drive_side == DriveSide::right ? 1.0 : -1.0;
    const double cx = -sign * r.feature_distance;
    const double d = std::hypot(x - cx, y);
    const double inner = r.feature_distance - 0.5 * w;
    const double outer = inner + r.feature_width;
    if (d < inner || d > outer) return Cell::off;
    return std::abs(d - (r.feature_distance + 0.5 * w)) < tol ? Cell::divider : Cell::road;
  }
  const double left_edge = -(double(r.lanes_left) + 0.5) * w;
  const double right_edge = (double(r.lanes_right) + 0.5) * w;
  const bool on_main = x >= left_edge && x <= right_edge;
  const bool on_cross = s.map_kind == MapKind::intersection &&
                        std::abs(y - r.feature_distance) <= 0.5 * r.feature_width;
  if (on_cross) return Cell::road;
  if (!on_main) return Cell::off;
  for (int i = -int(r.lanes_left); i < int(r.lanes_right); ++i)
    if (std::abs(x - (double(i) + 0.5) * w) < tol) return Cell::divider;
  return Cell::road;
}

// Max-composites a fading polyline: waypoint k of n has intensity (k+1)/n.
void draw_trail(std::span<const Point> pts, const Grid& g, float* plane) {
  const std::size_t n = pts.size();
  auto stamp = [&](Point p, double intensity) {
    if (auto px = to_pixel(p, g.size)) {
      float& v = plane[(*px)[0] * g.size + (*px)[1]];
      v = std::max(v, float(intensity));
    }
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double ik = double(k + 1) / double(n);
    stamp(pts[k], ik);
    if (k + 1 == n) break;
    const Point a = pts[k], b = pts[k + 1];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const std::size_t steps = std::size_t(std::ceil(len / (0.25 * g.res)));
    const double i_next = double(k + 2) / double(n);
    for (std::size_t j = 1; j < steps; ++j) {
      const double t = double(j) / double(steps);
      stamp({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])}, ik + t * (i_next - ik));
    }
  }
}

}  // namespace

std::optional<std::array<std::size_t, 2>> to_pixel(Point p, std::size_t size) {
  const double res = kRasterWidth / double(size);
  const double col = std::floor(p[0] / res + 0.5 * double(size));
  const double row = std::floor((kRasterAhead - p[1]) / res);
  if (!(col >= 0 && row >= 0 && col < double(size) && row < double(size))) return std::nullopt;
  return std::array<std::size_t, 2>{std::size_t(row), std::size_t(col)};
}

Raster rasterize(const Scene& scene, std::size_t size) {
  Raster r;
  r.size = size;
  r.pixels.assign(3 * size * size, 0.0f);
  const Grid g{size, kRasterWidth / double(size)};
  float* map = r.pixels.data();
  for (std::size_t row = 0; row < size; ++row)
    for (std::size_t col = 0; col < size; ++col) {
      const Cell c = classify(scene, g.x_of(col), g.y_of(row), g.res);
      map[row * size + col] = c == Cell::road ? 1.0f : c == Cell::divider ? 0.5f : 0.0f;
    }
  for (const PastTrack& tr : scene.neighbors) draw_trail(tr, g, map + size * size);
  draw_trail(scene.past, g, map + 2 * size * size);
  return r;
}

}  // namespace isap::scene
