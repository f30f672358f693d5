#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lanegraph/geometry.hpp"

namespace lanegraph {

inline constexpr double kMergeRadius = 1e-6;

struct Edge {
  int src = 0;
  int dst = 0;
  bool operator==(const Edge&) const = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directed geometric graph of lane centerlines. Vertices carry an optional
/// instance tag (-1 when untagged).
class CenterlineGraph {
 public:
  int add_vertex(Vec2 p, int tag = -1) {
    vertices_.push_back(p);
    tags_.push_back(tag);
    out_.emplace_back();
    in_.emplace_back();
    return static_cast<int>(vertices_.size()) - 1;
  }

  /// Adds src->dst. Duplicate edges are ignored; returns false in that case.
  bool add_edge(int src, int dst) {
    if (src < 0 || dst < 0 || src >= vertex_count() || dst >= vertex_count())
      throw GraphError("edge references a missing vertex");
    if (src == dst) throw GraphError("self-loop edges are not allowed");
    if (has_edge(src, dst)) return false;
    edges_.push_back({src, dst});
    out_[src].push_back(dst);
    in_[dst].push_back(src);
    return true;
  }

  bool has_edge(int src, int dst) const {
    const auto& o = out_[src];
    return std::find(o.begin(), o.end(), dst) != o.end();
  }

  int vertex_count() const { return static_cast<int>(vertices_.size()); }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  bool empty() const { return vertices_.empty(); }

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& tags() const { return tags_; }
  Vec2 vertex(int i) const { return vertices_[i]; }
  int tag(int i) const { return tags_[i]; }
  void set_tag(int i, int tag) { tags_[i] = tag; }
  const std::vector<int>& successors(int v) const { return out_[v]; }
  const std::vector<int>& predecessors(int v) const { return in_[v]; }
  int out_degree(int v) const { return static_cast<int>(out_[v].size()); }
  int in_degree(int v) const { return static_cast<int>(in_[v].size()); }
  int degree(int v) const { return out_degree(v) + in_degree(v); }
  bool is_junction(int v) const { return degree(v) >= 3; }

  double edge_length(const Edge& e) const { return distance(vertices_[e.src], vertices_[e.dst]); }
  double total_length() const {
    double s = 0.0;
    for (const auto& e : edges_) s += edge_length(e);
    return s;
  }

  /// Checks the structural invariants; throws GraphError on violation.
  void validate() const {
    for (const auto& e : edges_) {
      if (e.src < 0 || e.dst < 0 || e.src >= vertex_count() || e.dst >= vertex_count())
        throw GraphError("edge references a missing vertex");
      if (e.src == e.dst) throw GraphError("self-loop edge");
    }
    std::vector<int> order(vertices_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return vertices_[a].x < vertices_[b].x; });
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        if (vertices_[order[j]].x - vertices_[order[i]].x > kMergeRadius) break;
        if (distance(vertices_[order[i]], vertices_[order[j]]) <= kMergeRadius)
          throw GraphError("duplicated vertex within merge radius");
      }
    }
  }

  template <class F>
  CenterlineGraph transformed(F&& f) const {
    CenterlineGraph g = *this;
    for (auto& v : g.vertices_) v = f(v);
    return g;
  }

  bool operator==(const CenterlineGraph& o) const {
    return vertices_ == o.vertices_ && edges_ == o.edges_ && tags_ == o.tags_;
  }

 private:
  std::vector<Vec2> vertices_;
  std::vector<int> tags_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> out_;
  std::vector<std::vector<int>> in_;
};

/// Uniform-cell bucket index over a fixed point set.
class PointIndex {
 public:
  PointIndex() = default;
  PointIndex(const std::vector<Vec2>& pts, double cell) : pts_(&pts), cell_(cell) {
    for (int i = 0; i < static_cast<int>(pts.size()); ++i) buckets_[key(cell_of(pts[i]))].push_back(i);
  }

  /// Nearest point; ties resolved by lowest index. Returns index -1 on an
  /// empty set.
  std::pair<int, double> nearest(Vec2 p) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    auto consider = [&](int i) {
      const Vec2 d = (*pts_)[i] - p;
      const double d2 = d.dot(d);
      if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
        best_d2 = d2;
        best = i;
      }
    };
    if (!pts_ || pts_->empty()) return {best, best_d2};
    const auto [cx, cy] = cell_of(p);
    for (long r = 0; r <= kMaxRings; ++r) {
      for (long dx = -r; dx <= r; ++dx) {
        for (long dy = -r; dy <= r; ++dy) {
          if (std::max(std::labs(dx), std::labs(dy)) != r) continue;
          auto it = buckets_.find(key({cx + dx, cy + dy}));
          if (it == buckets_.end()) continue;
          for (int i : it->second) consider(i);
        }
      }
      // Points outside rings 0..r are at least r*cell away.
      if (best >= 0 && std::sqrt(best_d2) < static_cast<double>(r) * cell_) return {best, std::sqrt(best_d2)};
    }
    for (int i = 0; i < static_cast<int>(pts_->size()); ++i) consider(i);
    return {best, std::sqrt(best_d2)};
  }

  /// True when some point lies strictly closer than `radius`.
  bool any_within(Vec2 p, double radius) const {
    bool found = false;
    for_each_within(p, radius, [&](int) { found = true; return false; });
    return found;
  }

  /// Calls f(i) for points with distance < radius; f returns false to stop.
  template <class F>
  void for_each_within(Vec2 p, double radius, F&& f) const {
    const long lo_x = static_cast<long>(std::floor((p.x - radius) / cell_));
    const long hi_x = static_cast<long>(std::floor((p.x + radius) / cell_));
    const long lo_y = static_cast<long>(std::floor((p.y - radius) / cell_));
    const long hi_y = static_cast<long>(std::floor((p.y + radius) / cell_));
    for (long x = lo_x; x <= hi_x; ++x)
      for (long y = lo_y; y <= hi_y; ++y) {
        auto it = buckets_.find(key({x, y}));
        if (it == buckets_.end()) continue;
        for (int i : it->second)
          if (distance((*pts_)[i], p) < radius && !f(i)) return;
      }
  }

 private:
  std::pair<long, long> cell_of(Vec2 p) const {
    return {static_cast<long>(std::floor(p.x / cell_)), static_cast<long>(std::floor(p.y / cell_))};
  }
  static long long key(std::pair<long, long> c) {
    return (static_cast<long long>(c.first) << 32) ^ static_cast<long long>(static_cast<unsigned>(c.second));
  }

  const std::vector<Vec2>* pts_ = nullptr;
  double cell_ = 1.0;
  static constexpr long kMaxRings = 48;
  std::unordered_map<long long, std::vector<int>> buckets_;
};

/// Subdivides every edge so no edge exceeds `spacing`. Original vertices keep
/// their indices and coordinates.
inline CenterlineGraph resample(const CenterlineGraph& g, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("resample: spacing must be > 0");
  CenterlineGraph out;
  for (int i = 0; i < g.vertex_count(); ++i) out.add_vertex(g.vertex(i), g.tag(i));
  for (const auto& e : g.edges()) {
    const Vec2 a = g.vertex(e.src), b = g.vertex(e.dst);
    const double len = distance(a, b);
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    int prev = e.src;
    for (int k = 1; k < pieces; ++k) {
      const double t = static_cast<double>(k) / pieces;
      const int v = out.add_vertex(a + (b - a) * t, g.tag(e.src));
      out.add_edge(prev, v);
      prev = v;
    }
    out.add_edge(prev, e.dst);
  }
  return out;
}

enum class Reach { kDirected, kUndirected };

/// Vertices whose shortest-path distance from `source` is <= radius, sorted.
inline std::vector<int> geodesic_ball(const CenterlineGraph& g, int source, double radius,
                                      Reach reach = Reach::kDirected) {
  if (source < 0 || source >= g.vertex_count()) throw GraphError("geodesic_ball: bad source vertex");
  std::unordered_map<int, double> dist;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = 0.0;
  pq.push({0.0, source});
  std::vector<int> ball;
  auto relax = [&](int u, int v, double du) {
    const double nd = du + distance(g.vertex(u), g.vertex(v));
    if (nd > radius) return;
    auto it = dist.find(v);
    if (it == dist.end() || nd < it->second) {
      dist[v] = nd;
      pq.push({nd, v});
    }
  };
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    ball.push_back(u);
    for (int v : g.successors(u)) relax(u, v, d);
    if (reach == Reach::kUndirected)
      for (int v : g.predecessors(u)) relax(u, v, d);
  }
  std::sort(ball.begin(), ball.end());
  ball.erase(std::unique(ball.begin(), ball.end()), ball.end());
  return ball;
}

struct NearestResult {
  int index = -1;
  double distance = 0.0;
};

inline NearestResult nearest_vertex(const CenterlineGraph& g, Vec2 p) {
  if (g.empty()) throw GraphError("nearest_vertex: empty graph");
  NearestResult best{0, std::numeric_limits<double>::infinity()};
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.vertex_count(); ++i) {
    const Vec2 d = g.vertex(i) - p;
    const double d2 = d.dot(d);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.index = i;
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

/// Shortest distance from `p` to any edge (or isolated vertex) of `g`.
inline double distance_to_graph(const CenterlineGraph& g, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : g.edges()) best = std::min(best, segment_distance(p, g.vertex(e.src), g.vertex(e.dst)));
  for (int i = 0; i < g.vertex_count(); ++i)
    if (g.degree(i) == 0) best = std::min(best, distance(p, g.vertex(i)));
  return best;
}

/// Weakly connected component id per vertex, numbered by first vertex index.
inline std::vector<int> weak_components(const CenterlineGraph& g) {
  std::vector<int> comp(g.vertex_count(), -1);
  int next = 0;
  for (int s = 0; s < g.vertex_count(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack{s};
    comp[s] = next;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      auto visit = [&](int v) {
        if (comp[v] < 0) {
          comp[v] = next;
          stack.push_back(v);
        }
      };
      for (int v : g.successors(u)) visit(v);
      for (int v : g.predecessors(u)) visit(v);
    }
    ++next;
  }
  return comp;
}

/// Keeps the vertices selected by `keep` and the edges between them.
inline CenterlineGraph induced_subgraph(const CenterlineGraph& g, const std::vector<bool>& keep) {
  CenterlineGraph out;
  std::vector<int> remap(g.vertex_count(), -1);
  for (int i = 0; i < g.vertex_count(); ++i)
    if (keep[i]) remap[i] = out.add_vertex(g.vertex(i), g.tag(i));
  for (const auto& e : g.edges())
    if (remap[e.src] >= 0 && remap[e.dst] >= 0) out.add_edge(remap[e.src], remap[e.dst]);
  return out;
}

// ---------------------------------------------------------------------------
// Text serialization.
//
//   lanegraph-graph 1
//   vertices <N>
//   <id> <x> <y> <tag>
//   edges <M>
//   <src> <dst>
//
// Coordinates are written with 17 significant digits so they round-trip exactly.

inline std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_graph(std::ostream& os, const CenterlineGraph& g) {
  os << "lanegraph-graph 1\n";
  os << "vertices " << g.vertex_count() << "\n";
  for (int i = 0; i < g.vertex_count(); ++i)
    os << i << ' ' << format_coord(g.vertex(i).x) << ' ' << format_coord(g.vertex(i).y) << ' ' << g.tag(i) << "\n";
  os << "edges " << g.edge_count() << "\n";
  for (const auto& e : g.edges()) os << e.src << ' ' << e.dst << "\n";
}

inline std::string graph_to_string(const CenterlineGraph& g) {
  std::ostringstream os;
  write_graph(os, g);
  return os.str();
}

inline CenterlineGraph read_graph(std::istream& is) {
  auto fail = [](const std::string& what) { throw GraphError("graph parse error: " + what); };
  std::string magic, word;
  int version = 0;
  if (!(is >> magic >> version) || magic != "lanegraph-graph" || version != 1) fail("bad header");
  long n = 0;
  if (!(is >> word >> n) || word != "vertices" || n < 0) fail("bad vertex count");
  CenterlineGraph g;
  for (long i = 0; i < n; ++i) {
    long id;
    std::string xs, ys;
    int tag;
    if (!(is >> id >> xs >> ys >> tag) || id != i) fail("bad vertex line " + std::to_string(i));
    g.add_vertex({std::stod(xs), std::stod(ys)}, tag);
  }
  long m = 0;
  if (!(is >> word >> m) || word != "edges" || m < 0) fail("bad edge count");
  for (long i = 0; i < m; ++i) {
    int s, d;
    if (!(is >> s >> d)) fail("bad edge line " + std::to_string(i));
    g.add_edge(s, d);
  }
  return g;
}

inline CenterlineGraph graph_from_string(const std::string& s) {
  std::istringstream is(s);
  return read_graph(is);
}

inline CenterlineGraph load_graph(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw GraphError("cannot open graph file: " + path);
  return read_graph(is);
}

}  // namespace lanegraph
