#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/temporal_fusion.hpp"

namespace lanegraph {

struct VectorizeConfig {
  double threshold = 0.3;       // theta_b
  int min_component = 10;       // px
  double spur_length = 5.0;     // px
  double simplify_tolerance = 0.75;  // px

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("vectorize.threshold must be in (0,1)");
    if (min_component < 0 || spur_length < 0 || simplify_tolerance < 0)
      throw std::invalid_argument("vectorize lengths must be >= 0");
  }
};

/// Binary raster stored as 0/1 bytes.
class Mask {
 public:
  Mask() = default;
  Mask(int h, int w) : h_(h), w_(w), bits_(static_cast<std::size_t>(h) * w, 0) {}
  int height() const { return h_; }
  int width() const { return w_; }
  bool get(int r, int c) const { return r >= 0 && c >= 0 && r < h_ && c < w_ && bits_[idx(r, c)]; }
  void set(int r, int c, bool v) { bits_[idx(r, c)] = v ? 1 : 0; }
  long count() const { return std::count(bits_.begin(), bits_.end(), 1); }
  bool operator==(const Mask&) const = default;

 private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * w_ + c; }
  int h_ = 0, w_ = 0;
  std::vector<unsigned char> bits_;
};

inline constexpr std::array<std::pair<int, int>, 8> kNeighbours8 = {
    {{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

inline int neighbour_count(const Mask& m, int r, int c) {
  int n = 0;
  for (auto [dr, dc] : kNeighbours8) n += m.get(r + dr, c + dc);
  return n;
}

/// 8-connected components as lists of (row, col).
inline std::vector<std::vector<std::pair<int, int>>> connected_components(const Mask& m) {
  std::vector<std::vector<std::pair<int, int>>> comps;
  Mask seen(m.height(), m.width());
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) {
      if (!m.get(r, c) || seen.get(r, c)) continue;
      std::vector<std::pair<int, int>> comp, stack{{r, c}};
      seen.set(r, c, true);
      while (!stack.empty()) {
        auto [pr, pc] = stack.back();
        stack.pop_back();
        comp.push_back({pr, pc});
        for (auto [dr, dc] : kNeighbours8) {
          const int nr = pr + dr, nc = pc + dc;
          if (m.get(nr, nc) && !seen.get(nr, nc)) {
            seen.set(nr, nc, true);
            stack.push_back({nr, nc});
          }
        }
      }
      comps.push_back(std::move(comp));
    }
  return comps;
}

/// mask = raster >= threshold, minus components smaller than min_component.
inline Mask binarize(const Raster& raster, double threshold, int min_component = 0) {
  Mask m(raster.height(), raster.width());
  for (int r = 0; r < raster.height(); ++r)
    for (int c = 0; c < raster.width(); ++c) m.set(r, c, raster.at(r, c) >= threshold);
  if (min_component > 0)
    for (const auto& comp : connected_components(m))
      if (static_cast<int>(comp.size()) < min_component)
        for (auto [r, c] : comp) m.set(r, c, false);
  return m;
}

/// Two-subiteration morphological thinning (Zhang-Suen).
inline Mask skeletonize(const Mask& input) {
  Mask m = input;
  std::vector<std::pair<int, int>> remove;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      remove.clear();
      for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c) {
          if (!m.get(r, c)) continue;
          // P2..P9 clockwise from north.
          std::array<int, 8> p{};
          for (int k = 0; k < 8; ++k) p[k] = m.get(r + kNeighbours8[k].first, c + kNeighbours8[k].second);
          const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
          if (a != 1) continue;
          const int n = p[0], e = p[2], s = p[4], w = p[6];
          if (pass == 0 ? (n * e * s == 0 && e * s * w == 0) : (n * e * w == 0 && n * s * w == 0))
            remove.push_back({r, c});
        }
      for (auto [r, c] : remove) m.set(r, c, false);
      changed = changed || !remove.empty();
    }
  }
  return m;
}

namespace detail {

inline void douglas_peucker(const std::vector<Vec2>& pts, std::size_t lo, std::size_t hi, double tol,
                            std::vector<bool>& keep) {
  if (hi <= lo + 1) return;
  double worst = -1.0;
  std::size_t at = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = segment_distance(pts[i], pts[lo], pts[hi]);
    if (d > worst) {
      worst = d;
      at = i;
    }
  }
  if (worst > std::max(tol, 1e-9)) {  // collinear points never split, even at tol 0
    keep[at] = true;
    douglas_peucker(pts, lo, at, tol, keep);
    douglas_peucker(pts, at, hi, tol, keep);
  }
}

}  // namespace detail

inline std::vector<Vec2> simplify_polyline(const std::vector<Vec2>& pts, double tol) {
  if (pts.size() <= 2) return pts;
  std::vector<bool> keep(pts.size(), false);
  keep.front() = keep.back() = true;
  detail::douglas_peucker(pts, 0, pts.size() - 1, tol, keep);
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (keep[i]) out.push_back(pts[i]);
  return out;
}

/// Converts a 1-px skeleton into a graph in pixel coordinates (x=col, y=row).
/// Endpoints and junction clusters become vertices, pixel runs between them
/// become simplified polylines.
inline CenterlineGraph skeleton_to_graph(const Mask& skel, double spur_length = 0.0, double tolerance = 0.0) {
  const int h = skel.height(), w = skel.width();
  // Node id per pixel: endpoints, junction clusters (merged), -1 otherwise.
  std::vector<int> node(static_cast<std::size_t>(h) * w, -1);
  auto id = [&](int r, int c) { return static_cast<std::size_t>(r) * w + c; };
  std::vector<Vec2> node_pos;
  std::vector<int> node_pixels;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!skel.get(r, c) || node[id(r, c)] >= 0) continue;
      const int deg = neighbour_count(skel, r, c);
      if (deg == 2) continue;
      const int nid = static_cast<int>(node_pos.size());
      if (deg >= 3) {
        // Flood the adjacent junction pixels into one cluster.
        std::vector<std::pair<int, int>> stack{{r, c}}, members;
        node[id(r, c)] = nid;
        while (!stack.empty()) {
          auto [pr, pc] = stack.back();
          stack.pop_back();
          members.push_back({pr, pc});
          for (auto [dr, dc] : kNeighbours8) {
            const int nr = pr + dr, nc = pc + dc;
            if (skel.get(nr, nc) && node[id(nr, nc)] < 0 && neighbour_count(skel, nr, nc) >= 3) {
              node[id(nr, nc)] = nid;
              stack.push_back({nr, nc});
            }
          }
        }
        Vec2 sum;
        for (auto [pr, pc] : members) sum = sum + Vec2{static_cast<double>(pc), static_cast<double>(pr)};
        node_pos.push_back(sum / static_cast<double>(members.size()));
        node_pixels.push_back(static_cast<int>(members.size()));
      } else {
        node[id(r, c)] = nid;
        node_pos.push_back({static_cast<double>(c), static_cast<double>(r)});
        node_pixels.push_back(1);
      }
    }

  struct Path {
    int a, b;
    std::vector<Vec2> pts;
  };
  std::vector<Path> paths;
  std::set<std::pair<std::size_t, std::size_t>> used;  // traversed pixel steps
  auto mark = [&](std::size_t p, std::size_t q) {
    used.insert({std::min(p, q), std::max(p, q)});
  };
  auto is_used = [&](std::size_t p, std::size_t q) { return used.count({std::min(p, q), std::max(p, q)}) > 0; };
  auto pt = [](int r, int c) { return Vec2{static_cast<double>(c), static_cast<double>(r)}; };
  // Marks every step between pixel (r, c) and pixels of node n.
  auto mark_node_adjacent = [&](int r, int c, int n) {
    if (node[id(r, c)] == n) return;
    for (auto [dr, dc] : kNeighbours8) {
      const int nr = r + dr, nc = c + dc;
      if (skel.get(nr, nc) && node[id(nr, nc)] == n) mark(id(r, c), id(nr, nc));
    }
  };

  auto trace = [&](int r0, int c0, int r1, int c1, int start_node) {
    Path path{start_node, -1, {node_pos[start_node]}};
    mark(id(r0, c0), id(r1, c1));
    mark_node_adjacent(r1, c1, start_node);
    int pr = r0, pc = c0, cr = r1, cc = c1;
    while (true) {
      const int n = node[id(cr, cc)];
      if (n >= 0) {
        mark_node_adjacent(pr, pc, n);
        path.b = n;
        path.pts.push_back(node_pos[n]);
        break;
      }
      path.pts.push_back(pt(cr, cc));
      int nr = -1, nc = -1;
      for (auto [dr, dc] : kNeighbours8) {
        const int tr = cr + dr, tc = cc + dc;
        if (!skel.get(tr, tc) || (tr == pr && tc == pc) || is_used(id(cr, cc), id(tr, tc))) continue;
        // Prefer 4-neighbours so diagonal shortcuts do not skip pixels.
        if (nr < 0 || (dr == 0 || dc == 0)) {
          nr = tr;
          nc = tc;
        }
      }
      if (nr < 0) {  // ring closed back on itself or dead end
        path.b = -1;
        break;
      }
      mark(id(cr, cc), id(nr, nc));
      pr = cr;
      pc = cc;
      cr = nr;
      cc = nc;
    }
    return path;
  };

  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int n = node[id(r, c)];
      if (n < 0) continue;
      for (auto [dr, dc] : kNeighbours8) {
        const int nr = r + dr, nc = c + dc;
        if (!skel.get(nr, nc) || node[id(nr, nc)] == n || is_used(id(r, c), id(nr, nc))) continue;
        Path p = trace(r, c, nr, nc, n);
        if (p.b >= 0 && !(p.b == p.a && p.pts.size() <= 2)) paths.push_back(std::move(p));
      }
    }

  // Closed rings with no node pixel.
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!skel.get(r, c) || node[id(r, c)] >= 0) continue;
      bool touched = false;
      for (auto [dr, dc] : kNeighbours8)
        if (skel.get(r + dr, c + dc) && is_used(id(r, c), id(r + dr, c + dc))) touched = true;
      if (touched) continue;
      const int nid = static_cast<int>(node_pos.size());
      node[id(r, c)] = nid;
      node_pos.push_back(pt(r, c));
      node_pixels.push_back(1);
      for (auto [dr, dc] : kNeighbours8) {
        if (!skel.get(r + dr, c + dc)) continue;
        Path p = trace(r, c, r + dr, c + dc, nid);
        if (p.b >= 0) paths.push_back(std::move(p));
        break;
      }
    }

  // Spur pruning: short paths that end in a free endpoint at a junction.
  std::vector<int> degree(node_pos.size(), 0);
  for (const auto& p : paths) {
    ++degree[p.a];
    ++degree[p.b];
  }
  auto path_length = [](const Path& p) {
    double s = 0.0;
    for (std::size_t i = 1; i < p.pts.size(); ++i) s += distance(p.pts[i - 1], p.pts[i]);
    return s;
  };
  std::vector<bool> drop(paths.size(), false);
  if (spur_length > 0.0)
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto& p = paths[i];
      const bool a_free = degree[p.a] == 1, b_free = degree[p.b] == 1;
      if ((a_free && degree[p.b] >= 3) || (b_free && degree[p.a] >= 3))
        if (path_length(p) < spur_length) drop[i] = true;
    }

  CenterlineGraph g;
  std::vector<int> vid(node_pos.size(), -1);
  auto vertex_of = [&](int n) {
    if (vid[n] < 0) vid[n] = g.add_vertex(node_pos[n]);
    return vid[n];
  };
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (drop[i]) continue;
    const auto pts = simplify_polyline(paths[i].pts, tolerance);
    if (pts.size() == 2 && vid[paths[i].a] >= 0 && vid[paths[i].b] >= 0 &&
        (g.has_edge(vid[paths[i].a], vid[paths[i].b]) || g.has_edge(vid[paths[i].b], vid[paths[i].a])))
      continue;
    int prev = vertex_of(paths[i].a);
    for (std::size_t k = 1; k + 1 < pts.size(); ++k) {
      const int v = g.add_vertex(pts[k]);
      g.add_edge(prev, v);
      prev = v;
    }
    const int last = vertex_of(paths[i].b);
    if (last != prev) g.add_edge(prev, last);
  }
  return g;
}

/// Per-raster vectorization: binarize, thin, extract a pixel-frame graph.
inline CenterlineGraph vectorize_raster(const Raster& raster, const VectorizeConfig& cfg) {
  cfg.validate();
  return skeleton_to_graph(skeletonize(binarize(raster, cfg.threshold, cfg.min_component)), cfg.spur_length,
                           cfg.simplify_tolerance);
}

/// Skeletonization baseline: merge all frames into a world raster, vectorize,
/// and return the graph in world meters.
inline CenterlineGraph baseline_pipeline(const std::vector<BevGrid>& frames, const VectorizeConfig& cfg,
                                         WorldRaster* world_out = nullptr) {
  if (frames.empty()) return {};
  std::vector<EgoPose> poses;
  for (const auto& f : frames) poses.push_back(f.pose);
  const WorldGridSpec ws = world_spec_covering(poses, frames.front().spec);
  WorldRaster world = accumulate_world(frames, ws);
  CenterlineGraph px = vectorize_raster(world.value, cfg);
  if (world_out) *world_out = std::move(world);
  return px.transformed([&](Vec2 p) { return ws.to_world(p.y, p.x); });
}

}  // namespace lanegraph
