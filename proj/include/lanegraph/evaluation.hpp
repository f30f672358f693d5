#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"

namespace lanegraph {

struct MetricConfig {
  double delta = 3.0;       // px, strict match threshold
  double epsilon = 50.0;    // px, topology reach radius
  double spacing = 1.0;     // px, resampling before scoring
  double resolution = 0.25; // m per px of the evaluation frame
  Reach reach = Reach::kUndirected;
  int workers = 1;

  void validate() const {
    if (!(delta > 0.0) || !(epsilon > 0.0) || !(spacing > 0.0) || !(resolution > 0.0))
      throw std::invalid_argument("metric delta, epsilon, spacing and resolution must be > 0");
  }
};

inline double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

struct ScoreTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  ScoreTriple pixel;
  ScoreTriple topology;
  int predicted_vertices = 0;
  int ground_truth_vertices = 0;
  MetricConfig config;
};

/// Share of `a` that has some point of `b` strictly closer than delta.
inline double matched_fraction(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double delta) {
  if (a.empty() || b.empty()) return 0.0;
  PointIndex index(b, delta);
  long hit = 0;
  for (Vec2 p : a)
    if (index.any_within(p, delta)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

/// Pixel-level precision/recall/F1 on already resampled vertex sets.
inline ScoreTriple pixel_scores_points(const std::vector<Vec2>& pred, const std::vector<Vec2>& gt, double delta) {
  ScoreTriple s;
  s.precision = matched_fraction(pred, gt, delta);
  s.recall = matched_fraction(gt, pred, delta);
  s.f1 = harmonic_mean(s.precision, s.recall);
  return s;
}

inline ScoreTriple pixel_scores(const CenterlineGraph& pred, const CenterlineGraph& gt, const MetricConfig& cfg) {
  return pixel_scores_points(pred.vertices(), gt.vertices(), cfg.delta);
}

namespace detail {

inline ScoreTriple subset_scores(const std::vector<Vec2>& pred_pts, const std::vector<int>& pred_ball,
                                 const std::vector<Vec2>& gt_pts, const std::vector<int>& gt_ball, double delta) {
  const double d2 = delta * delta;
  auto covered = [&](Vec2 p, const std::vector<Vec2>& pts, const std::vector<int>& ball) {
    for (int j : ball) {
      const Vec2 d = pts[j] - p;
      if (d.dot(d) < d2) return true;
    }
    return false;
  };
  long tp = 0, tr = 0;
  for (int i : pred_ball)
    if (covered(pred_pts[i], gt_pts, gt_ball)) ++tp;
  for (int i : gt_ball)
    if (covered(gt_pts[i], pred_pts, pred_ball)) ++tr;
  ScoreTriple s;
  s.precision = static_cast<double>(tp) / static_cast<double>(pred_ball.size());
  s.recall = static_cast<double>(tr) / static_cast<double>(gt_ball.size());
  s.f1 = harmonic_mean(s.precision, s.recall);
  return s;
}

template <class F>
void parallel_for(int n, int workers, F&& f) {
  workers = std::clamp(workers, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) f(i);
    });
}

}  // namespace detail

/// Topology-level scores: for every ground-truth vertex q, compare the
/// eps-reachable subgraph around q with the eps-reachable subgraph around
/// the nearest predicted vertex, then average each score over q.
inline ScoreTriple topo_scores(const CenterlineGraph& pred, const CenterlineGraph& gt, const MetricConfig& cfg) {
  if (pred.empty() || gt.empty()) return {};
  PointIndex pred_index(pred.vertices(), std::max(cfg.delta, 1.0));
  const int n = gt.vertex_count();
  std::vector<ScoreTriple> per_q(n);
  detail::parallel_for(n, cfg.workers, [&](int q) {
    const auto gt_ball = geodesic_ball(gt, q, cfg.epsilon, cfg.reach);
    const int nearest = pred_index.nearest(gt.vertex(q)).first;
    const auto pred_ball = geodesic_ball(pred, nearest, cfg.epsilon, cfg.reach);
    per_q[q] = detail::subset_scores(pred.vertices(), pred_ball, gt.vertices(), gt_ball, cfg.delta);
  });
  ScoreTriple sum;
  for (const auto& s : per_q) {
    sum.precision += s.precision;
    sum.recall += s.recall;
    sum.f1 += s.f1;
  }
  return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

/// Converts a metric graph into evaluation pixels (x/res, y/res).
inline CenterlineGraph to_eval_frame(const CenterlineGraph& g, double resolution) {
  return g.transformed([&](Vec2 p) { return p / resolution; });
}

/// Scores a predicted world graph (meters) against ground truth (meters).
inline MetricReport evaluate(const CenterlineGraph& pred, const CenterlineGraph& gt, const MetricConfig& cfg) {
  cfg.validate();
  const CenterlineGraph p = resample(to_eval_frame(pred, cfg.resolution), cfg.spacing);
  const CenterlineGraph g = resample(to_eval_frame(gt, cfg.resolution), cfg.spacing);
  MetricReport r;
  r.config = cfg;
  r.predicted_vertices = p.vertex_count();
  r.ground_truth_vertices = g.vertex_count();
  r.pixel = pixel_scores(p, g, cfg);
  r.topology = topo_scores(p, g, cfg);
  return r;
}

/// Ground truth restricted to what any frame of the sequence could see.
inline CenterlineGraph clip_to_footprint(const CenterlineGraph& gt, const std::vector<EgoPose>& poses,
                                         const GridSpec& spec, double spacing_m) {
  const CenterlineGraph dense = resample(gt, spacing_m);
  std::vector<bool> keep(dense.vertex_count(), false);
  for (int i = 0; i < dense.vertex_count(); ++i)
    for (const auto& pose : poses)
      if (world_to_pixel(pose, dense.vertex(i), spec).in_bounds) {
        keep[i] = true;
        break;
      }
  return induced_subgraph(dense, keep);
}

// ---------------------------------------------------------------------------
// Report output

inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string report_to_text(const MetricReport& r) {
  std::ostringstream os;
  os << "P-P " << format_score(r.pixel.precision) << "\n"
     << "P-R " << format_score(r.pixel.recall) << "\n"
     << "P-F " << format_score(r.pixel.f1) << "\n"
     << "T-P " << format_score(r.topology.precision) << "\n"
     << "T-R " << format_score(r.topology.recall) << "\n"
     << "T-F " << format_score(r.topology.f1) << "\n"
     << "vertices_pred " << r.predicted_vertices << "\n"
     << "vertices_gt " << r.ground_truth_vertices << "\n"
     << "delta_px " << r.config.delta << "\n"
     << "epsilon_px " << r.config.epsilon << "\n"
     << "spacing_px " << r.config.spacing << "\n"
     << "resolution_m " << r.config.resolution << "\n"
     << "reach " << (r.config.reach == Reach::kDirected ? "directed" : "undirected") << "\n";
  return os.str();
}

inline constexpr const char* kResultsHeader = "scene,P-P,P-R,P-F,T-P,T-R,T-F,vertices_pred,vertices_gt";

inline std::string report_row(const std::string& scene, const MetricReport& r) {
  std::ostringstream os;
  os << scene << ',' << format_score(r.pixel.precision) << ',' << format_score(r.pixel.recall) << ','
     << format_score(r.pixel.f1) << ',' << format_score(r.topology.precision) << ','
     << format_score(r.topology.recall) << ',' << format_score(r.topology.f1) << ',' << r.predicted_vertices << ','
     << r.ground_truth_vertices;
  return os.str();
}

/// Mean of several reports (vertex counts summed).
inline MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  m.config = reports.front().config;
  for (const auto& r : reports) {
    m.pixel.precision += r.pixel.precision;
    m.pixel.recall += r.pixel.recall;
    m.pixel.f1 += r.pixel.f1;
    m.topology.precision += r.topology.precision;
    m.topology.recall += r.topology.recall;
    m.topology.f1 += r.topology.f1;
    m.predicted_vertices += r.predicted_vertices;
    m.ground_truth_vertices += r.ground_truth_vertices;
  }
  const double n = static_cast<double>(reports.size());
  for (double* v : {&m.pixel.precision, &m.pixel.recall, &m.pixel.f1, &m.topology.precision, &m.topology.recall,
                    &m.topology.f1})
    *v /= n;
  return m;
}

/// Appends a row to a CSV results table, writing the header for new files.
inline void append_result_row(const std::string& path, const std::string& scene, const MetricReport& r) {
  const bool fresh = !std::ifstream(path).good();
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to " + path);
  if (fresh) os << kResultsHeader << "\n";
  os << report_row(scene, r) << "\n";
}

}  // namespace lanegraph
