#pragma once

// Brute-force reference implementations used by the unit tests and the
// acceptance suite. The scoring oracles share no code with the library
// beyond the graph container itself.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "lanegraph/evaluation.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/temporal_fusion.hpp"

namespace oracle {

using lanegraph::CenterlineGraph;
using lanegraph::Reach;
using lanegraph::ScoreTriple;
using lanegraph::Vec2;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// All-pairs shortest path lengths (Floyd-Warshall).
inline std::vector<std::vector<double>> all_pairs(const CenterlineGraph& g, Reach reach) {
  const int n = g.vertex_count();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, kInf));
  for (int i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const auto& e : g.edges()) {
    const Vec2 a = g.vertex(e.src), b = g.vertex(e.dst);
    const double w = std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
    d[e.src][e.dst] = std::min(d[e.src][e.dst], w);
    if (reach == Reach::kUndirected) d[e.dst][e.src] = std::min(d[e.dst][e.src], w);
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  return d;
}

inline std::vector<int> ball(const std::vector<std::vector<double>>& d, int source, double radius) {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(d.size()); ++j)
    if (d[source][j] <= radius) out.push_back(j);
  return out;
}

inline int nearest(const std::vector<Vec2>& pts, Vec2 p) {
  int best = -1;
  double best_d = kInf;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const double d = std::hypot(pts[i].x - p.x, pts[i].y - p.y);
    if (d < best_d) best_d = d, best = i;
  }
  return best;
}

inline bool close_to_any(Vec2 p, const std::vector<Vec2>& pts, const std::vector<int>& subset, double delta) {
  for (int j : subset)
    if (std::hypot(pts[j].x - p.x, pts[j].y - p.y) < delta) return true;
  return false;
}

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline ScoreTriple pixel(const CenterlineGraph& pred, const CenterlineGraph& gt, double delta) {
  if (pred.empty() || gt.empty()) return {};
  std::vector<int> all_pred(pred.vertex_count()), all_gt(gt.vertex_count());
  for (int i = 0; i < pred.vertex_count(); ++i) all_pred[i] = i;
  for (int i = 0; i < gt.vertex_count(); ++i) all_gt[i] = i;
  double hp = 0, hr = 0;
  for (int i : all_pred) hp += close_to_any(pred.vertex(i), gt.vertices(), all_gt, delta);
  for (int i : all_gt) hr += close_to_any(gt.vertex(i), pred.vertices(), all_pred, delta);
  const double p = hp / pred.vertex_count(), r = hr / gt.vertex_count();
  return {p, r, f1(p, r)};
}

inline ScoreTriple topology(const CenterlineGraph& pred, const CenterlineGraph& gt, double delta, double eps,
                            Reach reach) {
  if (pred.empty() || gt.empty()) return {};
  const auto dp = all_pairs(pred, reach);
  const auto dg = all_pairs(gt, reach);
  double sp = 0, sr = 0, sf = 0;
  for (int q = 0; q < gt.vertex_count(); ++q) {
    const auto gb = ball(dg, q, eps);
    const auto pb = ball(dp, nearest(pred.vertices(), gt.vertex(q)), eps);
    double hp = 0, hr = 0;
    for (int i : pb) hp += close_to_any(pred.vertex(i), gt.vertices(), gb, delta);
    for (int i : gb) hr += close_to_any(gt.vertex(i), pred.vertices(), pb, delta);
    const double p = hp / pb.size(), r = hr / gb.size();
    sp += p, sr += r, sf += f1(p, r);
  }
  const double n = gt.vertex_count();
  return {sp / n, sr / n, sf / n};
}

/// Random directed graph: a few polylines in a box, some of them sharing
/// vertices so junctions appear.
inline CenterlineGraph random_graph(std::mt19937_64& rng, int max_vertices, double box = 40.0) {
  std::uniform_real_distribution<double> coord(0.0, box);
  std::uniform_int_distribution<int> count(2, max_vertices);
  const int n = count(rng);
  CenterlineGraph g;
  for (int i = 0; i < n; ++i) g.add_vertex({coord(rng), coord(rng)});
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::bernoulli_distribution chain(0.8);
  for (int i = 1; i < n; ++i) {
    if (chain(rng)) g.add_edge(i - 1, i);
    else {
      const int j = pick(rng);
      if (j != i) g.add_edge(j, i);
    }
  }
  return g;
}

/// Random chain of short edges (good for resampling and topology cases).
inline CenterlineGraph random_polyline(std::mt19937_64& rng, int n, double step = 3.0) {
  std::uniform_real_distribution<double> turn(-0.6, 0.6);
  CenterlineGraph g;
  Vec2 p{0, 0};
  double heading = 0;
  g.add_vertex(p);
  for (int i = 1; i < n; ++i) {
    heading += turn(rng);
    p = p + Vec2{std::cos(heading), std::sin(heading)} * step;
    g.add_vertex(p);
    g.add_edge(i - 1, i);
  }
  return g;
}

/// Uniform noise in [0, 1] blurred by a Gaussian of the given sigma (px).
inline lanegraph::Raster smooth_random_raster(std::mt19937_64& rng, int size, double sigma) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  lanegraph::Raster raw(size, size), out(size, size);
  for (auto& v : raw.data()) v = u(rng);
  const int reach = static_cast<int>(3 * sigma) + 1;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      double sum = 0, weight = 0;
      for (int dr = -reach; dr <= reach; ++dr)
        for (int dc = -reach; dc <= reach; ++dc) {
          if (!raw.contains(r + dr, c + dc)) continue;
          const double k = std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
          sum += k * raw.at(r + dr, c + dc);
          weight += k;
        }
      out.at(r, c) = static_cast<float>(sum / weight);
    }
  return out;
}

/// Max abs difference after warping src to `other` and back, over pixels
/// whose round trip only touched valid samples.
inline double double_warp_error(const lanegraph::BevGrid& src, const lanegraph::EgoPose& other) {
  const auto there = lanegraph::warp_grid(src, other);
  lanegraph::BevGrid mid = lanegraph::BevGrid::zeros(src.spec, other, 0);
  mid.centerline = there.centerline;
  mid.features.push_back(there.mask);
  const auto back = lanegraph::warp_grid(mid, src.pose);
  double worst = 0;
  for (std::size_t i = 0; i < back.centerline.size(); ++i)
    if (back.mask.data()[i] == 1.0f && back.features[0].data()[i] == 1.0f)
      worst = std::max(worst, std::abs(double(back.centerline.data()[i]) - src.centerline.data()[i]));
  return worst;
}

}  // namespace oracle
