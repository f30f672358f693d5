#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lanegraph {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Closest point to `p` on segment [a, b]; `t` receives the segment parameter.
inline Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b, double* t = nullptr) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double s = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  if (t) *t = s;
  return a + ab * s;
}

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  return distance(p, closest_on_segment(p, a, b));
}

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

/// SE(2) pose of the ego vehicle in the world frame. The ego x-axis points
/// along the heading.
struct EgoPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  EgoPose() = default;
  EgoPose(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(normalize_angle(yaw_)) {}

  Vec2 position() const { return {x, y}; }
  bool operator==(const EgoPose&) const = default;
};

inline Vec2 world_to_ego(const EgoPose& pose, Vec2 p) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const Vec2 d = p - pose.position();
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

inline Vec2 ego_to_world(const EgoPose& pose, Vec2 p) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  return {pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y};
}

/// Square-ish ego-centred raster geometry. The grid centre is the ego origin.
struct GridSpec {
  int height = 200;
  int width = 200;
  double resolution = 0.25;  // meters per pixel

  void validate() const {
    if (!(resolution > 0.0)) throw std::invalid_argument("GridSpec: resolution must be > 0");
    if (height <= 0 || width <= 0 || height % 2 != 0 || width % 2 != 0)
      throw std::invalid_argument("GridSpec: height and width must be positive and even");
  }
  bool operator==(const GridSpec&) const = default;
};

/// Continuous pixel coordinate. Integer values are pixel centres.
struct PixelCoord {
  double row = 0.0;
  double col = 0.0;
  bool in_bounds = true;
};

inline bool pixel_in_bounds(double row, double col, const GridSpec& spec) {
  return row >= 0.0 && col >= 0.0 && row <= spec.height - 1 && col <= spec.width - 1;
}

/// Ego +x maps to increasing col, ego +y to increasing row.
inline PixelCoord ego_to_pixel(Vec2 p, const GridSpec& spec) {
  PixelCoord px;
  px.row = spec.height / 2 + p.y / spec.resolution;
  px.col = spec.width / 2 + p.x / spec.resolution;
  px.in_bounds = pixel_in_bounds(px.row, px.col, spec);
  return px;
}

inline Vec2 pixel_to_ego(double row, double col, const GridSpec& spec) {
  return {(col - spec.width / 2) * spec.resolution, (row - spec.height / 2) * spec.resolution};
}

inline PixelCoord world_to_pixel(const EgoPose& pose, Vec2 p, const GridSpec& spec) {
  return ego_to_pixel(world_to_ego(pose, p), spec);
}

inline Vec2 pixel_to_world(const EgoPose& pose, double row, double col, const GridSpec& spec) {
  return ego_to_world(pose, pixel_to_ego(row, col, spec));
}

}  // namespace lanegraph
