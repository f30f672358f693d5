#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/temporal_fusion.hpp"

namespace lanegraph {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

class Image {
 public:
  Image(int width, int height, Rgb fill = {}) : width_(width), height_(height), px_(std::size_t(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  Rgb& at(int x, int y) { return px_[std::size_t(y) * width_ + x]; }
  Rgb at(int x, int y) const { return px_[std::size_t(y) * width_ + x]; }
  void put(int x, int y, Rgb c) {
    if (contains(x, y)) at(x, y) = c;
  }

 private:
  int width_, height_;
  std::vector<Rgb> px_;
};

inline std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + std::size_t(img.width()) * img.height() * 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb c = img.at(x, y);
      out.push_back(static_cast<char>(c.r));
      out.push_back(static_cast<char>(c.g));
      out.push_back(static_cast<char>(c.b));
    }
  return out;
}

inline void save_ppm(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_ppm(img)); }

/// Distinct, saturated colours spaced by the golden angle in hue.
inline Rgb instance_colour(int k) {
  const double h = std::fmod(k * 137.50776405, 360.0) / 60.0;
  const double s = 0.85, v = 0.95;
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h, 2.0) - 1)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  auto q = [&](double t) { return static_cast<std::uint8_t>(std::lround((t + m) * 255)); };
  return {q(r), q(g), q(b)};
}

inline void draw_line(Image& img, Vec2 a, Vec2 b, Rgb colour, int width = 1) {
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len * 2)));
  const int lo = -(width - 1) / 2, hi = width / 2;
  for (int i = 0; i <= n; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / n);
    const int x = static_cast<int>(std::lround(p.x)), y = static_cast<int>(std::lround(p.y));
    for (int dy = lo; dy <= hi; ++dy)
      for (int dx = lo; dx <= hi; ++dx) img.put(x + dx, y + dy, colour);
  }
}

inline void draw_border(Image& img, Rgb colour = {90, 90, 90}) {
  for (int x = 0; x < img.width(); ++x) {
    img.put(x, 0, colour);
    img.put(x, img.height() - 1, colour);
  }
  for (int y = 0; y < img.height(); ++y) {
    img.put(0, y, colour);
    img.put(img.width() - 1, y, colour);
  }
}

enum class GraphStyle { kSolid, kInstances };

struct GraphLayer {
  const CenterlineGraph* graph = nullptr;
  GraphStyle style = GraphStyle::kInstances;
  Rgb colour{200, 200, 200};  // kSolid only
  int width = 1;
  bool vertices = false;      // mark vertices with a small cross
};

/// Canvas over a world grid with +y pointing up. Heatmap values in [0, 1]
/// become a dark-blue to white underlay.
class WorldCanvas {
 public:
  explicit WorldCanvas(WorldGridSpec spec, Rgb background = {16, 16, 24})
      : spec_(spec), img_(std::max(1, spec.width), std::max(1, spec.height), background) {}

  const Image& image() const { return img_; }
  Vec2 to_image(Vec2 world) const {
    const Vec2 p = spec_.to_pixel(world);
    return {p.x, spec_.height - 1 - p.y};
  }

  void underlay(const Raster& heat) {
    for (int r = 0; r < std::min(heat.height(), spec_.height); ++r)
      for (int c = 0; c < std::min(heat.width(), spec_.width); ++c) {
        const double v = std::clamp(static_cast<double>(heat.at(r, c)), 0.0, 1.0);
        if (v <= 0.0) continue;
        const Rgb bg = img_.at(c, spec_.height - 1 - r);
        auto mix = [&](std::uint8_t from, double to) { return static_cast<std::uint8_t>(std::lround(from + (to - from) * v)); };
        img_.at(c, spec_.height - 1 - r) = {mix(bg.r, 150), mix(bg.g, 160), mix(bg.b, 190)};
      }
  }

  void draw(const GraphLayer& layer) {
    const CenterlineGraph& g = *layer.graph;
    const auto comp = weak_components(g);
    auto colour_of = [&](int v) { return layer.style == GraphStyle::kSolid ? layer.colour : instance_colour(comp[v]); };
    for (const auto& e : g.edges())
      draw_line(img_, to_image(g.vertex(e.src)), to_image(g.vertex(e.dst)), colour_of(e.src), layer.width);
    if (layer.vertices)
      for (int v = 0; v < g.vertex_count(); ++v) {
        const Vec2 p = to_image(g.vertex(v));
        const int x = static_cast<int>(std::lround(p.x)), y = static_cast<int>(std::lround(p.y));
        for (int d = -1; d <= 1; ++d) {
          img_.put(x + d, y, {255, 255, 255});
          img_.put(x, y + d, {255, 255, 255});
        }
      }
  }

  void frame() { draw_border(img_); }

 private:
  WorldGridSpec spec_;
  Image img_;
};

/// World grid tightly covering a set of graphs (meters), padded by `margin`.
inline WorldGridSpec world_spec_for_graphs(const std::vector<const CenterlineGraph*>& graphs, double resolution,
                                           double margin = 2.0) {
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  for (const auto* g : graphs)
    for (Vec2 p : g->vertices()) {
      lo_x = std::min(lo_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_x = std::max(hi_x, p.x);
      hi_y = std::max(hi_y, p.y);
    }
  if (lo_x > hi_x) lo_x = lo_y = -25.0, hi_x = hi_y = 25.0;
  WorldGridSpec ws;
  ws.resolution = resolution;
  ws.origin_x = lo_x - margin;
  ws.origin_y = lo_y - margin;
  ws.width = static_cast<int>(std::ceil((hi_x - lo_x + 2 * margin) / resolution)) + 1;
  ws.height = static_cast<int>(std::ceil((hi_y - lo_y + 2 * margin) / resolution)) + 1;
  return ws;
}

}  // namespace lanegraph
