#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/predictor.hpp"
#include "lanegraph/raster.hpp"

namespace lanegraph {

struct LabelConfig {
  double step = 8.0;               // d, px of arc length per move
  double match_radius = 6.0;       // r_m, px from the agent to G*
  double coverage_radius = 1.5;    // r_c, px for the explored test
  double explored_fraction = 0.6;  // share of the approach that must be marked
  double noise = 2.0;              // expert trajectory noise, px (uniform)

  void validate() const {
    if (!(step > 0.0)) throw std::invalid_argument("label.step must be > 0");
    if (match_radius < 0.0 || coverage_radius < 0.0) throw std::invalid_argument("label radii must be >= 0");
    if (noise < 0.0) throw std::invalid_argument("label.noise must be >= 0");
  }
};

namespace detail {

inline bool marked_near(const Raster& history, Vec2 p, double radius) {
  const int c_lo = static_cast<int>(std::floor(p.x - radius)), c_hi = static_cast<int>(std::ceil(p.x + radius));
  const int r_lo = static_cast<int>(std::floor(p.y - radius)), r_hi = static_cast<int>(std::ceil(p.y + radius));
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c) {
      if (!history.contains(r, c) || history.at(r, c) <= 0.5f) continue;
      if (distance({static_cast<double>(c), static_cast<double>(r)}, p) <= radius) return true;
    }
  return false;
}

inline bool direction_explored(const Raster& history, Vec2 from, Vec2 label, const LabelConfig& cfg) {
  if (!marked_near(history, label, cfg.coverage_radius)) return false;
  const Vec2 mid = (from + label) * 0.5;
  const int n = std::max(2, static_cast<int>(std::ceil(distance(mid, label))) + 1);
  int marked = 0;
  for (int k = 0; k < n; ++k)
    if (marked_near(history, mid + (label - mid) * (static_cast<double>(k) / (n - 1)), cfg.coverage_radius)) ++marked;
  return marked >= cfg.explored_fraction * n;
}

/// A junction closer than `min_advance` is walked through; a label that close
/// would sit inside the agent's own trail and read as explored.
inline void walk_forward(const CenterlineGraph& g, Vec2 from, int target, double remaining, double walked,
                         std::vector<Vec2>& out, double min_advance, int depth = 0) {
  constexpr double kEps = 1e-6;
  const Vec2 b = g.vertex(target);
  const double seg = distance(from, b);
  if (remaining < seg) {
    out.push_back(from + (b - from) * (remaining / seg));
    return;
  }
  remaining -= seg;
  walked += seg;
  const bool dead_end = g.out_degree(target) == 0;
  const bool junction = g.is_junction(target) && walked >= min_advance;
  if ((junction || dead_end || remaining <= kEps || depth > 10000) && walked > kEps) {
    out.push_back(b);
    return;
  }
  if (dead_end) return;
  for (int next : g.successors(target)) walk_forward(g, b, next, remaining, walked, out, min_advance, depth + 1);
}

}  // namespace detail

/// Expert labelling function: next-step vertices for an agent at `position`
/// given the ground-truth graph (in the same pixel frame, x=col, y=row) and the
/// history raster. Returns 0 (stop), 1 (move) or several (branch) labels.
inline std::vector<Vec2> label_next(Vec2 position, const CenterlineGraph& gt, const Raster& history,
                                    const LabelConfig& cfg, std::optional<Vec2> heading = std::nullopt) {
  constexpr double kVertexSnap = 1e-6;
  if (gt.edge_count() == 0) return {};
  // Project onto the edge set, preferring edges aligned with the heading.
  struct Hit {
    int edge = -1;
    double dist = 0.0, t = 0.0;
  };
  Hit best_aligned, best_any;
  const bool use_heading = heading && heading->norm() > 1e-9;
  for (int i = 0; i < gt.edge_count(); ++i) {
    const Edge& e = gt.edges()[i];
    const Vec2 a = gt.vertex(e.src), b = gt.vertex(e.dst);
    double t = 0.0;
    const double d = distance(position, closest_on_segment(position, a, b, &t));
    if (d > cfg.match_radius) continue;
    if (best_any.edge < 0 || d < best_any.dist) best_any = {i, d, t};
    if (use_heading) {
      const Vec2 dir = b - a;
      const double cosang = dir.dot(*heading) / (dir.norm() * heading->norm());
      if (cosang >= 0.3 && (best_aligned.edge < 0 || d < best_aligned.dist)) best_aligned = {i, d, t};
    }
  }
  const Hit hit = best_aligned.edge >= 0 ? best_aligned : best_any;
  if (hit.edge < 0) return {};

  const Edge& e = gt.edges()[hit.edge];
  const Vec2 a = gt.vertex(e.src), b = gt.vertex(e.dst);
  const Vec2 u = a + (b - a) * hit.t;
  const double min_advance = std::max(1.0, 2.0 * cfg.coverage_radius);
  std::vector<Vec2> candidates;
  if (distance(u, b) <= kVertexSnap) {
    for (int next : gt.successors(e.dst)) detail::walk_forward(gt, b, next, cfg.step, 0.0, candidates, min_advance);
  } else if (distance(u, a) <= kVertexSnap) {
    for (int next : gt.successors(e.src)) detail::walk_forward(gt, a, next, cfg.step, 0.0, candidates, min_advance);
  } else {
    detail::walk_forward(gt, u, e.dst, cfg.step, 0.0, candidates, min_advance);
  }

  std::vector<Vec2> labels;
  for (Vec2 c : candidates) {
    if (detail::direction_explored(history, position, c, cfg)) continue;
    const bool dup = std::any_of(labels.begin(), labels.end(), [&](Vec2 l) { return distance(l, c) < 0.5; });
    if (!dup) labels.push_back(c);
  }
  return labels;
}

/// Clamps an ROI-relative offset onto the ROI square along the ray from the
/// centre.
inline Vec2 clamp_to_roi(Vec2 offset, double half) {
  const double m = std::max(std::abs(offset.x), std::abs(offset.y));
  return m > half ? offset * (half / m) : offset;
}

/// Ground-truth expert: wraps label_next. Probability is 1, or when the
/// evidence gate is on, the fused centerline heatmap value at the label.
class OraclePredictor : public Predictor {
 public:
  OraclePredictor(CenterlineGraph gt_world, LabelConfig cfg, bool evidence_gate = false)
      : gt_(std::move(gt_world)), cfg_(cfg), evidence_gate_(evidence_gate) {}

  PredictorOutput predict(const StepContext& ctx) override {
    const CenterlineGraph& gt = pixel_view(ctx.pose, ctx.spec);
    PredictorOutput out;
    for (Vec2 label : label_next(ctx.position, gt, ctx.history, cfg_, ctx.heading)) {
      double p = 1.0;
      if (evidence_gate_) p = evidence(ctx.fused.centerline, label);
      out.push_back({clamp_to_roi(label - ctx.centre, ctx.roi.half()), p});
    }
    return out;
  }

  std::string name() const override { return evidence_gate_ ? "oracle-gated" : "oracle"; }

  /// Ground truth in the pixel frame of `pose` (x=col, y=row).
  const CenterlineGraph& pixel_view(const EgoPose& pose, const GridSpec& spec) {
    if (!cached_pose_ || !(*cached_pose_ == pose) || !(cached_spec_ == spec)) {
      cached_ = gt_.transformed([&](Vec2 w) {
        const auto px = world_to_pixel(pose, w, spec);
        return Vec2{px.col, px.row};
      });
      cached_pose_ = pose;
      cached_spec_ = spec;
    }
    return cached_;
  }

 private:
  static double evidence(const Raster& heat, Vec2 p) {
    const int r = static_cast<int>(std::lround(p.y)), c = static_cast<int>(std::lround(p.x));
    float best = 0.0f;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) best = std::max(best, heat.get_or(r + dr, c + dc, 0.0f));
    return std::clamp(static_cast<double>(best), 0.0, 1.0);
  }

  CenterlineGraph gt_;
  LabelConfig cfg_;
  bool evidence_gate_;
  CenterlineGraph cached_;
  std::optional<EgoPose> cached_pose_;
  GridSpec cached_spec_;
};

struct WalkerConfig {
  double step = 8.0;             // circle radius, px
  double peak_threshold = 0.3;
  double suppress_window = 25.0;  // degrees
  int max_queries = 8;
};

/// Heatmap follower: samples the centerline channel on a circle around the ROI
/// centre and proposes angular maxima not already covered by history.
class WalkerPredictor : public Predictor {
 public:
  explicit WalkerPredictor(WalkerConfig cfg) : cfg_(cfg) {
    // Quarter table rotated by exact swaps so 90-degree symmetry is bit-exact.
    for (int k = 0; k < 90; ++k) {
      const double a = k * std::numbers::pi / 180.0;
      circle_[k] = {std::cos(a), std::sin(a)};
    }
    for (int q = 1; q < 4; ++q)
      for (int k = 0; k < 90; ++k) {
        const Vec2 v = circle_[(q - 1) * 90 + k];
        circle_[q * 90 + k] = {-v.y, v.x};
      }
  }

  PredictorOutput predict(const StepContext& ctx) override { return predict_roi(ctx.roi); }

  PredictorOutput predict_roi(const RoiTensor& roi) const {
    const int hist = roi.channels - 1;
    const double c = roi.half();
    std::array<double, 360> value{};
    std::array<bool, 360> blocked{};
    for (int k = 0; k < 360; ++k) {
      const Vec2 p = Vec2{c, c} + circle_[k] * cfg_.step;
      value[k] = sample(roi, 0, p);
      const int r = static_cast<int>(std::lround(p.y)), col = static_cast<int>(std::lround(p.x));
      if (r >= 0 && col >= 0 && r < roi.size && col < roi.size && roi.at(hist, r, col) > 0.5f) {
        const int w = static_cast<int>(cfg_.suppress_window);
        for (int j = -w; j <= w; ++j) blocked[(k + j + 360) % 360] = true;
      }
    }
    struct Peak {
      int angle;
      double value;
    };
    std::vector<Peak> peaks;
    for (int k = 0; k < 360; ++k) {
      if (blocked[k] || value[k] < cfg_.peak_threshold) continue;
      const double prev = value[(k + 359) % 360], next = value[(k + 1) % 360];
      if (value[k] > prev && value[k] >= next) peaks.push_back({k, value[k]});
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.value > b.value; });
    std::vector<Peak> kept;
    for (const Peak& p : peaks) {
      const bool close = std::any_of(kept.begin(), kept.end(), [&](const Peak& q) {
        const int d = std::abs(p.angle - q.angle);
        return std::min(d, 360 - d) <= cfg_.suppress_window;
      });
      if (!close) kept.push_back(p);
      if (static_cast<int>(kept.size()) == cfg_.max_queries) break;
    }
    PredictorOutput out;
    for (const Peak& p : kept) out.push_back({circle_[p.angle] * cfg_.step, std::clamp(p.value, 0.0, 1.0)});
    return out;
  }

  std::string name() const override { return "walker"; }

 private:
  static double sample(const RoiTensor& roi, int ch, Vec2 p) {
    const int c0 = static_cast<int>(std::floor(p.x)), r0 = static_cast<int>(std::floor(p.y));
    const double fc = p.x - c0, fr = p.y - r0;
    auto at = [&](int r, int c) -> double {
      return (r >= 0 && c >= 0 && r < roi.size && c < roi.size) ? roi.at(ch, r, c) : 0.0;
    };
    return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
           fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
  }

  WalkerConfig cfg_;
  std::array<Vec2, 360> circle_{};
};

/// Replays recorded outputs keyed by the run's global step counter.
class LookupPredictor : public Predictor {
 public:
  explicit LookupPredictor(std::map<long, PredictorOutput> table) : table_(std::move(table)) {}
  PredictorOutput predict(const StepContext& ctx) override {
    auto it = table_.find(ctx.step);
    return it == table_.end() ? PredictorOutput{} : it->second;
  }
  std::string name() const override { return "lookup"; }

 private:
  std::map<long, PredictorOutput> table_;
};

}  // namespace lanegraph
