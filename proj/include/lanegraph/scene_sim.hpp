#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/raster.hpp"

namespace lanegraph {

enum class SceneKind { kStraight, kCurve, kSplitMerge, kFourWay, kRandomComposite };

inline std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::kStraight: return "straight";
    case SceneKind::kCurve: return "curve";
    case SceneKind::kSplitMerge: return "split-merge";
    case SceneKind::kFourWay: return "four-way";
    case SceneKind::kRandomComposite: return "random";
  }
  return "straight";
}

inline SceneKind scene_kind_from_string(const std::string& s) {
  for (auto k : {SceneKind::kStraight, SceneKind::kCurve, SceneKind::kSplitMerge, SceneKind::kFourWay,
                 SceneKind::kRandomComposite})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown scene kind: " + s);
}

/// Heatmap corruption applied when rendering frames.
struct NoiseModel {
  double falloff_sigma = 1.5;  // px, centerline heatmap falloff
  double amplitude = 0.0;      // additive uniform noise in [-a, a]
  double dropout = 0.0;        // probability a heatmap patch is zeroed
  int dropout_patch = 16;      // px
};

struct SceneConfig {
  SceneKind kind = SceneKind::kStraight;
  int lanes = 1;
  double lane_spacing = 3.5;  // m
  double extent = 160.0;      // m, road length
  double ego_speed = 2.5;     // m per frame
  int frames = 40;
  double lateral_jitter = 0.2;  // m
  NoiseModel noise;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames < 1) throw std::invalid_argument("frames must be >= 1");
    if (!(extent > 0.0)) throw std::invalid_argument("extent must be > 0");
    if (lanes < 1) throw std::invalid_argument("lanes must be >= 1");
    if (!(lane_spacing > 0.0)) throw std::invalid_argument("lane_spacing must be > 0");
    if (ego_speed < 0.0) throw std::invalid_argument("ego_speed must be >= 0");
    if (lateral_jitter < 0.0) throw std::invalid_argument("lateral_jitter must be >= 0");
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0,1]");
    };
    unit(noise.amplitude, "noise.amplitude");
    unit(noise.dropout, "noise.dropout");
    if (!(noise.falloff_sigma > 0.0)) throw std::invalid_argument("noise.falloff_sigma must be > 0");
    if (noise.dropout_patch < 1) throw std::invalid_argument("noise.dropout_patch must be >= 1");
  }
};

/// One ego-aligned BEV frame: centerline heatmap, initial-vertex heatmap and
/// feature channels.
struct BevGrid {
  GridSpec spec;
  EgoPose pose;
  Raster centerline;              // H_L
  Raster initial_vertex;          // H_I
  std::vector<Raster> features;   // F_T; [0] is the centerline heatmap

  static BevGrid zeros(const GridSpec& spec, const EgoPose& pose, int feature_channels) {
    BevGrid g{spec, pose, Raster(spec.height, spec.width), Raster(spec.height, spec.width), {}};
    for (int i = 0; i < feature_channels; ++i) g.features.emplace_back(spec.height, spec.width);
    return g;
  }
};

struct Scene {
  CenterlineGraph ground_truth;
  std::vector<EgoPose> poses;
};

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<Vec2> densify(const std::vector<Vec2>& pts, double step) {
  std::vector<Vec2> out;
  if (pts.empty()) return out;
  out.push_back(pts.front());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double len = distance(pts[i - 1], pts[i]);
    const int n = std::max(1, static_cast<int>(std::ceil(len / step - 1e-9)));
    for (int k = 1; k <= n; ++k) out.push_back(pts[i - 1] + (pts[i] - pts[i - 1]) * (static_cast<double>(k) / n));
  }
  return out;
}

/// Straight lane from a to b sampled every `step`, with `breaks` (arc
/// positions from a) inserted as exact vertices.
inline std::vector<Vec2> straight_with_breaks(Vec2 a, Vec2 b, std::vector<double> breaks, double step) {
  const double len = distance(a, b);
  const Vec2 dir = (b - a) / len;
  breaks.push_back(0.0);
  breaks.push_back(len);
  std::sort(breaks.begin(), breaks.end());
  std::vector<Vec2> knots;
  for (double s : breaks) knots.push_back(a + dir * s);
  return densify(knots, step);
}

inline std::vector<Vec2> quadratic_bezier(Vec2 p0, Vec2 p1, Vec2 p2, double step) {
  const double approx = distance(p0, p1) + distance(p1, p2);
  const int n = std::max(2, static_cast<int>(std::ceil(approx / step)));
  std::vector<Vec2> out;
  for (int k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) / n;
    out.push_back(p0 * ((1 - t) * (1 - t)) + p1 * (2 * (1 - t) * t) + p2 * (t * t));
  }
  return out;
}

/// Adds a chain of vertices. Endpoints may reuse existing vertex ids.
/// Returns the vertex ids of the chain.
inline std::vector<int> add_chain(CenterlineGraph& g, const std::vector<Vec2>& pts, int tag, int first = -1,
                                  int last = -1) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int id;
    if (i == 0 && first >= 0) id = first;
    else if (i + 1 == pts.size() && last >= 0) id = last;
    else id = g.add_vertex(pts[i], tag);
    if (!ids.empty()) g.add_edge(ids.back(), id);
    ids.push_back(id);
  }
  return ids;
}

/// Index of the point in `pts` closest to `p`.
inline std::size_t closest_index(const std::vector<Vec2>& pts, Vec2 p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (distance(pts[i], p) < distance(pts[best], p)) best = i;
  return best;
}

inline double lane_offset(int i, int n, double spacing) { return (i - (n - 1) / 2.0) * spacing; }

struct Route {
  std::vector<Vec2> points;
};

inline std::vector<EgoPose> poses_along(const Route& route, const SceneConfig& cfg, std::mt19937_64& rng) {
  std::vector<double> arc{0.0};
  for (std::size_t i = 1; i < route.points.size(); ++i)
    arc.push_back(arc.back() + distance(route.points[i - 1], route.points[i]));
  const double path = cfg.ego_speed * (cfg.frames - 1);
  if (path > arc.back())
    throw SceneError("unsatisfiable extents: ego path " + std::to_string(path) + " m exceeds route length " +
                     std::to_string(arc.back()) + " m");
  const double s0 = (arc.back() - path) / 2.0;
  std::uniform_real_distribution<double> jitter(-cfg.lateral_jitter, cfg.lateral_jitter);
  std::vector<EgoPose> poses;
  std::size_t seg = 1;
  for (int f = 0; f < cfg.frames; ++f) {
    const double s = s0 + cfg.ego_speed * f;
    while (seg + 1 < arc.size() && arc[seg] < s) ++seg;
    const double t = (s - arc[seg - 1]) / std::max(1e-12, arc[seg] - arc[seg - 1]);
    const Vec2 a = route.points[seg - 1], b = route.points[seg];
    const Vec2 dir = (b - a) / distance(a, b);
    const Vec2 normal{-dir.y, dir.x};
    const double lateral = cfg.lateral_jitter > 0.0 ? jitter(rng) : 0.0;
    const Vec2 p = a + (b - a) * t + normal * lateral;
    poses.emplace_back(p.x, p.y, std::atan2(dir.y, dir.x));
  }
  return poses;
}

inline Scene straight_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  Scene sc;
  const double h = cfg.extent / 2.0;
  Route route;
  for (int i = 0; i < cfg.lanes; ++i) {
    const double y = lane_offset(i, cfg.lanes, cfg.lane_spacing);
    const bool forward = i % 2 == 0;
    const Vec2 a{forward ? -h : h, y}, b{forward ? h : -h, y};
    auto pts = straight_with_breaks(a, b, {}, 1.0);
    add_chain(sc.ground_truth, pts, i);
    if (i == 0) route.points = pts;
  }
  sc.poses = poses_along(route, cfg, rng);
  return sc;
}

inline Scene curve_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  Scene sc;
  const double radius = std::uniform_real_distribution<double>(50.0, 90.0)(rng);
  const Vec2 centre{0.0, radius};
  Route route;
  for (int i = 0; i < cfg.lanes; ++i) {
    const double r = radius - lane_offset(i, cfg.lanes, cfg.lane_spacing);
    const double sweep = cfg.extent / radius;
    const int n = std::max(2, static_cast<int>(std::ceil(sweep * r)));
    std::vector<Vec2> pts;
    for (int k = 0; k <= n; ++k) {
      const double a = -std::numbers::pi / 2 + sweep * k / n - sweep / 2;
      pts.push_back(centre + Vec2{std::cos(a), std::sin(a)} * r);
    }
    if (i % 2 == 1) std::reverse(pts.begin(), pts.end());
    add_chain(sc.ground_truth, pts, i);
    if (i == 0) route.points = pts;
  }
  sc.poses = poses_along(route, cfg, rng);
  return sc;
}

inline Scene split_merge_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  Scene sc;
  const double h = cfg.extent / 2.0;
  const double split_s = cfg.extent * std::uniform_real_distribution<double>(0.25, 0.35)(rng);
  const double merge_s = cfg.extent * std::uniform_real_distribution<double>(0.65, 0.75)(rng);
  Route route;
  std::vector<Vec2> main0;
  for (int i = 0; i < cfg.lanes; ++i) {
    const double y = lane_offset(i, cfg.lanes, cfg.lane_spacing);
    const bool forward = i % 2 == 0;
    const Vec2 a{forward ? -h : h, y}, b{forward ? h : -h, y};
    auto pts = i == 0 ? straight_with_breaks(a, b, {split_s, merge_s}, 1.0) : straight_with_breaks(a, b, {}, 1.0);
    auto ids = add_chain(sc.ground_truth, pts, i);
    if (i == 0) {
      route.points = pts;
      main0 = pts;
      // Diverging lane on the outer side of lane 0.
      const double y0 = y, y1 = y - 2.0 * cfg.lane_spacing;
      const double ramp = std::min(20.0, (merge_s - split_s) / 3.0);
      std::vector<Vec2> knots;
      const double x_split = -h + split_s, x_merge = -h + merge_s;
      for (double x = x_split; x <= x_merge + 1e-9; x += 0.5) {
        double t = 0.0;
        if (x < x_split + ramp) t = (x - x_split) / ramp;
        else if (x > x_merge - ramp) t = (x_merge - x) / ramp;
        else t = 1.0;
        t = std::clamp(t, 0.0, 1.0);
        const double smooth = t * t * (3 - 2 * t);
        knots.push_back({x, y0 + (y1 - y0) * smooth});
      }
      knots.back() = {x_merge, y0};
      knots.front() = {x_split, y0};
      std::vector<Vec2> branch = densify(knots, 1.0);
      const int split_v = ids[closest_index(pts, {x_split, y0})];
      const int merge_v = ids[closest_index(pts, {x_merge, y0})];
      add_chain(sc.ground_truth, branch, cfg.lanes, split_v, merge_v);
    }
  }
  sc.poses = poses_along(route, cfg, rng);
  return sc;
}

inline Scene four_way_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  Scene sc;
  const double h = cfg.extent / 2.0;
  const double box = cfg.lanes / 2.0 * cfg.lane_spacing + 2.0;
  struct Lane {
    std::vector<Vec2> pts;
    std::vector<int> ids;
    Vec2 dir;
    double offset;
    bool horizontal;
  };
  std::vector<Lane> lanes;
  int tag = 0;
  for (int axis = 0; axis < 2; ++axis) {
    for (int i = 0; i < cfg.lanes; ++i) {
      const double off = lane_offset(i, cfg.lanes, cfg.lane_spacing);
      const double sign = i % 2 == 0 ? 1.0 : -1.0;
      Vec2 a, b, dir;
      if (axis == 0) {
        a = {-h * sign, off};
        b = {h * sign, off};
        dir = {sign, 0.0};
      } else {
        a = {-off, -h * sign};
        b = {-off, h * sign};
        dir = {0.0, sign};
      }
      auto pts = straight_with_breaks(a, b, {h - box, h + box}, 1.0);
      auto ids = add_chain(sc.ground_truth, pts, tag++);
      lanes.push_back({pts, ids, dir, off, axis == 0});
    }
  }
  std::bernoulli_distribution left_turn(0.5);
  for (const auto& in : lanes) {
    const Vec2 entry = in.horizontal ? Vec2{-box * in.dir.x, in.offset} : Vec2{-in.offset, -box * in.dir.y};
    for (const auto& out : lanes) {
      if (out.horizontal == in.horizontal) continue;
      const bool right = in.dir.cross(out.dir) < 0.0;
      if (!right && !left_turn(rng)) continue;
      const Vec2 exit = out.horizontal ? Vec2{box * out.dir.x, out.offset} : Vec2{-out.offset, box * out.dir.y};
      const Vec2 ctrl = in.horizontal ? Vec2{exit.x, entry.y} : Vec2{entry.x, exit.y};
      auto curve = quadratic_bezier(entry, ctrl, exit, 1.0);
      const int split_v = in.ids[closest_index(in.pts, entry)];
      const int merge_v = out.ids[closest_index(out.pts, exit)];
      add_chain(sc.ground_truth, curve, tag++, split_v, merge_v);
    }
  }
  Route route{lanes.front().pts};
  sc.poses = poses_along(route, cfg, rng);
  return sc;
}

inline Scene transform_scene(Scene sc, const EgoPose& t) {
  sc.ground_truth = sc.ground_truth.transformed([&](Vec2 p) { return ego_to_world(t, p); });
  for (auto& p : sc.poses) {
    const Vec2 w = ego_to_world(t, p.position());
    p = EgoPose(w.x, w.y, p.yaw + t.yaw);
  }
  return sc;
}

}  // namespace detail

/// Builds the ground-truth centerline graph and the ego pose sequence.
/// Deterministic for a fixed config (including seed).
inline Scene generate_scene(const SceneConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  SceneConfig cfg = config;
  if (cfg.kind == SceneKind::kRandomComposite) {
    static constexpr SceneKind kKinds[] = {SceneKind::kStraight, SceneKind::kCurve, SceneKind::kSplitMerge,
                                          SceneKind::kFourWay};
    cfg.kind = kKinds[std::uniform_int_distribution<int>(0, 3)(rng)];
    cfg.lanes = std::uniform_int_distribution<int>(1, 3)(rng);
    Scene sc;
    switch (cfg.kind) {
      case SceneKind::kCurve: sc = detail::curve_scene(cfg, rng); break;
      case SceneKind::kSplitMerge: sc = detail::split_merge_scene(cfg, rng); break;
      case SceneKind::kFourWay: sc = detail::four_way_scene(cfg, rng); break;
      default: sc = detail::straight_scene(cfg, rng); break;
    }
    std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi), shift(-50.0, 50.0);
    const double y = yaw(rng), dx = shift(rng), dy = shift(rng);
    return detail::transform_scene(std::move(sc), EgoPose(dx, dy, y));
  }
  switch (cfg.kind) {
    case SceneKind::kCurve: return detail::curve_scene(cfg, rng);
    case SceneKind::kSplitMerge: return detail::split_merge_scene(cfg, rng);
    case SceneKind::kFourWay: return detail::four_way_scene(cfg, rng);
    default: return detail::straight_scene(cfg, rng);
  }
}

// ---------------------------------------------------------------------------
// Rasterization

/// Liang-Barsky clip of segment a->b (pixel coords, x=col, y=row) against the
/// grid rectangle. Returns the parametric interval inside, if any.
inline std::optional<std::pair<double, double>> clip_to_grid(Vec2 a, Vec2 b, const GridSpec& spec) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = b - a;
  const double p[4] = {-d.x, d.x, -d.y, d.y};
  const double q[4] = {a.x, (spec.width - 1) - a.x, a.y, (spec.height - 1) - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) t0 = std::max(t0, t);
    else t1 = std::min(t1, t);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

/// Ground-truth points the initial-vertex heatmap should fire on, as pixel
/// (x=col, y=row) points: boundary entries in travel direction and lane
/// starts inside the grid.
inline std::vector<Vec2> initial_vertex_truth(const CenterlineGraph& gt, const EgoPose& pose, const GridSpec& spec) {
  std::vector<Vec2> px(gt.vertex_count());
  std::vector<bool> inside(gt.vertex_count());
  for (int i = 0; i < gt.vertex_count(); ++i) {
    const auto pc = world_to_pixel(pose, gt.vertex(i), spec);
    px[i] = {pc.col, pc.row};
    inside[i] = pc.in_bounds;
  }
  std::vector<Vec2> out;
  for (const auto& e : gt.edges()) {
    if (inside[e.src]) continue;
    auto clip = clip_to_grid(px[e.src], px[e.dst], spec);
    if (!clip || clip->first <= 0.0) continue;
    if (!inside[e.dst] && clip->second - clip->first <= 0.0) continue;
    out.push_back(px[e.src] + (px[e.dst] - px[e.src]) * clip->first);
  }
  for (int i = 0; i < gt.vertex_count(); ++i)
    if (inside[i] && gt.in_degree(i) == 0) out.push_back(px[i]);
  return out;
}

inline constexpr double kInitialVertexSigma = 2.0;  // px

namespace detail {

inline void stamp_gaussian(Raster& r, Vec2 centre, double sigma) {
  const double reach = 4.0 * sigma;
  const int c_lo = std::max(0, static_cast<int>(std::floor(centre.x - reach)));
  const int c_hi = std::min(r.width() - 1, static_cast<int>(std::ceil(centre.x + reach)));
  const int r_lo = std::max(0, static_cast<int>(std::floor(centre.y - reach)));
  const int r_hi = std::min(r.height() - 1, static_cast<int>(std::ceil(centre.y + reach)));
  for (int row = r_lo; row <= r_hi; ++row)
    for (int col = c_lo; col <= c_hi; ++col) {
      const Vec2 d = Vec2{static_cast<double>(col), static_cast<double>(row)} - centre;
      const float v = static_cast<float>(std::exp(-d.dot(d) / (2 * sigma * sigma)));
      r.at(row, col) = std::max(r.at(row, col), v);
    }
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

inline float encode_orientation(double angle) {
  return static_cast<float>((normalize_angle(angle) + std::numbers::pi) / (2.0 * std::numbers::pi));
}

/// Renders one BEV frame of `gt` seen from `pose`. `noise_seed` drives the
/// additive noise and patch dropout.
inline BevGrid rasterize_frame(const CenterlineGraph& gt, const EgoPose& pose, const GridSpec& spec,
                               const NoiseModel& noise, std::uint64_t noise_seed = 0,
                               bool orientation_channel = true) {
  spec.validate();
  BevGrid grid = BevGrid::zeros(spec, pose, 0);
  Raster& hl = grid.centerline;
  Raster orient(spec.height, spec.width);
  Raster best_d2(spec.height, spec.width, std::numeric_limits<float>::infinity());
  const double sigma = noise.falloff_sigma;
  const double reach = 4.0 * sigma;

  std::vector<Vec2> px(gt.vertex_count());
  for (int i = 0; i < gt.vertex_count(); ++i) {
    const auto pc = world_to_pixel(pose, gt.vertex(i), spec);
    px[i] = {pc.col, pc.row};
  }
  for (const auto& e : gt.edges()) {
    const Vec2 a = px[e.src], b = px[e.dst];
    const int c_lo = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
    const int c_hi = std::min(spec.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
    const int r_lo = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
    const int r_hi = std::min(spec.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
    if (c_lo > c_hi || r_lo > r_hi) continue;
    const float angle = encode_orientation(std::atan2(b.y - a.y, b.x - a.x));
    for (int row = r_lo; row <= r_hi; ++row)
      for (int col = c_lo; col <= c_hi; ++col) {
        const Vec2 p{static_cast<double>(col), static_cast<double>(row)};
        const Vec2 d = p - closest_on_segment(p, a, b);
        const double d2 = d.dot(d);
        if (d2 > reach * reach) continue;
        const float v = static_cast<float>(std::exp(-d2 / (2 * sigma * sigma)));
        if (v > hl.at(row, col)) hl.at(row, col) = v;
        if (d2 < best_d2.at(row, col)) {
          best_d2.at(row, col) = static_cast<float>(d2);
          orient.at(row, col) = angle;
        }
      }
  }
  for (Vec2 p : initial_vertex_truth(gt, pose, spec)) detail::stamp_gaussian(grid.initial_vertex, p, kInitialVertexSigma);

  std::mt19937_64 rng(noise_seed);
  if (noise.dropout > 0.0) {
    std::bernoulli_distribution drop(noise.dropout);
    const int patch = noise.dropout_patch;
    for (int r0 = 0; r0 < spec.height; r0 += patch)
      for (int c0 = 0; c0 < spec.width; c0 += patch) {
        if (!drop(rng)) continue;
        for (int row = r0; row < std::min(spec.height, r0 + patch); ++row)
          for (int col = c0; col < std::min(spec.width, c0 + patch); ++col) {
            hl.at(row, col) = 0.0f;
            orient.at(row, col) = 0.0f;
          }
      }
  }
  if (noise.amplitude > 0.0) {
    std::uniform_real_distribution<float> u(static_cast<float>(-noise.amplitude), static_cast<float>(noise.amplitude));
    for (auto& v : hl.data()) v = std::clamp(v + u(rng), 0.0f, 1.0f);
    for (auto& v : grid.initial_vertex.data()) v = std::clamp(v + u(rng), 0.0f, 1.0f);
  }
  grid.features.push_back(hl);
  if (orientation_channel) grid.features.push_back(std::move(orient));
  return grid;
}

/// Renders every frame of a scene. Frame `i` uses a noise stream derived from
/// (seed, i).
inline std::vector<BevGrid> render_frames(const Scene& scene, const GridSpec& spec, const NoiseModel& noise,
                                          std::uint64_t seed) {
  std::vector<BevGrid> frames;
  frames.reserve(scene.poses.size());
  for (std::size_t i = 0; i < scene.poses.size(); ++i)
    frames.push_back(rasterize_frame(scene.ground_truth, scene.poses[i], spec, noise, detail::mix_seed(seed, i)));
  return frames;
}

}  // namespace lanegraph
