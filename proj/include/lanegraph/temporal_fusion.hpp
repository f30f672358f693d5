#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/scene_sim.hpp"

namespace lanegraph {

struct FusionConfig {
  int tau = 1;          // window half-width in frames
  bool causal = false;  // only use frames T-tau..T

  void validate() const {
    if (tau < 0) throw std::invalid_argument("fusion.tau must be >= 0");
  }
};

struct WarpResult {
  Raster centerline;
  std::vector<Raster> features;
  Raster mask;
};

/// Pulls coordinates that miss [0, hi] only by pose round-off back inside.
inline double snap_to_range(double v, double hi) {
  constexpr double kSnap = 1e-9;
  if (v < 0.0 && v > -kSnap) return 0.0;
  if (v > hi && v < hi + kSnap) return hi;
  return v;
}

/// Resamples `src` into the ego frame of `dst_pose` (same GridSpec).
inline WarpResult warp_grid(const BevGrid& src, const EgoPose& dst_pose) {
  const GridSpec& spec = src.spec;
  WarpResult out{Raster(spec.height, spec.width), {}, Raster(spec.height, spec.width)};
  for (std::size_t k = 0; k < src.features.size(); ++k) out.features.emplace_back(spec.height, spec.width);
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      const Vec2 w = pixel_to_world(dst_pose, row, col, spec);
      PixelCoord s = world_to_pixel(src.pose, w, spec);
      s.row = snap_to_range(s.row, spec.height - 1);
      s.col = snap_to_range(s.col, spec.width - 1);
      const auto hl = sample_bilinear(src.centerline, s.row, s.col);
      if (!hl.valid) continue;
      out.mask.at(row, col) = 1.0f;
      out.centerline.at(row, col) = hl.value;
      for (std::size_t k = 0; k < src.features.size(); ++k)
        out.features[k].at(row, col) = sample_bilinear(src.features[k], s.row, s.col).value;
    }
  }
  return out;
}

/// Frame indices contributing to the fused grid at T.
inline std::pair<int, int> fusion_window(int frame_count, int t, const FusionConfig& cfg) {
  const int lo = std::max(0, t - cfg.tau);
  const int hi = cfg.causal ? t : std::min(frame_count - 1, t + cfg.tau);
  return {lo, hi};
}

/// Mask-weighted mean of the neighbouring frames warped into frame T. The
/// initial-vertex heatmap is taken from frame T unchanged.
inline BevGrid fuse_window(const std::vector<BevGrid>& frames, int t, const FusionConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("fuse_window: empty frame list");
  if (t < 0 || t >= static_cast<int>(frames.size())) throw std::out_of_range("fuse_window: bad frame index");
  cfg.validate();
  const BevGrid& cur = frames[t];
  const auto [lo, hi] = fusion_window(static_cast<int>(frames.size()), t, cfg);
  if (lo == hi) return cur;

  const GridSpec& spec = cur.spec;
  BevGrid fused = BevGrid::zeros(spec, cur.pose, static_cast<int>(cur.features.size()));
  fused.initial_vertex = cur.initial_vertex;
  Raster count(spec.height, spec.width);
  auto accumulate = [&](const Raster& hl, const std::vector<Raster>& feats, const Raster* mask) {
    for (int row = 0; row < spec.height; ++row)
      for (int col = 0; col < spec.width; ++col) {
        if (mask && mask->at(row, col) == 0.0f) continue;
        count.at(row, col) += 1.0f;
        fused.centerline.at(row, col) += hl.at(row, col);
        for (std::size_t k = 0; k < feats.size() && k < fused.features.size(); ++k)
          fused.features[k].at(row, col) += feats[k].at(row, col);
      }
  };
  for (int j = lo; j <= hi; ++j) {
    if (j == t) {
      accumulate(cur.centerline, cur.features, nullptr);
      continue;
    }
    if (!(frames[j].spec == spec)) throw std::invalid_argument("fuse_window: frames must share a GridSpec");
    const WarpResult w = warp_grid(frames[j], cur.pose);
    accumulate(w.centerline, w.features, &w.mask);
  }
  auto normalise = [&](Raster& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const float n = count.data()[i];
      r.data()[i] = n > 0.0f ? r.data()[i] / n : 0.0f;
    }
  };
  normalise(fused.centerline);
  for (auto& f : fused.features) normalise(f);
  return fused;
}

/// Axis-aligned world raster: col = (x - origin_x)/res, row = (y - origin_y)/res.
struct WorldGridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  int height = 0;
  int width = 0;
  double resolution = 0.25;

  Vec2 to_pixel(Vec2 w) const { return {(w.x - origin_x) / resolution, (w.y - origin_y) / resolution}; }
  Vec2 to_world(double row, double col) const { return {origin_x + col * resolution, origin_y + row * resolution}; }
};

/// World raster covering every frame footprint plus `margin` meters.
inline WorldGridSpec world_spec_covering(const std::vector<EgoPose>& poses, const GridSpec& spec,
                                         double margin = 2.0) {
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  for (const auto& p : poses) {
    for (double r : {0.0, static_cast<double>(spec.height - 1)})
      for (double c : {0.0, static_cast<double>(spec.width - 1)}) {
        const Vec2 w = pixel_to_world(p, r, c, spec);
        lo_x = std::min(lo_x, w.x);
        lo_y = std::min(lo_y, w.y);
        hi_x = std::max(hi_x, w.x);
        hi_y = std::max(hi_y, w.y);
      }
  }
  WorldGridSpec ws;
  ws.resolution = spec.resolution;
  if (poses.empty()) return ws;
  ws.origin_x = std::floor((lo_x - margin) / ws.resolution) * ws.resolution;
  ws.origin_y = std::floor((lo_y - margin) / ws.resolution) * ws.resolution;
  ws.width = static_cast<int>(std::ceil((hi_x + margin - ws.origin_x) / ws.resolution)) + 1;
  ws.height = static_cast<int>(std::ceil((hi_y + margin - ws.origin_y) / ws.resolution)) + 1;
  return ws;
}

struct WorldRaster {
  WorldGridSpec spec;
  Raster value;
  Raster weight;  // number of frames that observed each cell
};

/// Mask-weighted mean of every frame's centerline heatmap in a fixed world
/// raster. Cells never observed are 0.
inline WorldRaster accumulate_world(const std::vector<BevGrid>& frames, const WorldGridSpec& ws) {
  WorldRaster out{ws, Raster(ws.height, ws.width), Raster(ws.height, ws.width)};
  for (const BevGrid& f : frames) {
    // Bounding box of the frame footprint in world pixels.
    double lo_r = 1e300, lo_c = 1e300, hi_r = -1e300, hi_c = -1e300;
    for (double r : {0.0, static_cast<double>(f.spec.height - 1)})
      for (double c : {0.0, static_cast<double>(f.spec.width - 1)}) {
        const Vec2 p = ws.to_pixel(pixel_to_world(f.pose, r, c, f.spec));
        lo_c = std::min(lo_c, p.x);
        hi_c = std::max(hi_c, p.x);
        lo_r = std::min(lo_r, p.y);
        hi_r = std::max(hi_r, p.y);
      }
    const int r0 = std::max(0, static_cast<int>(std::floor(lo_r)));
    const int r1 = std::min(ws.height - 1, static_cast<int>(std::ceil(hi_r)));
    const int c0 = std::max(0, static_cast<int>(std::floor(lo_c)));
    const int c1 = std::min(ws.width - 1, static_cast<int>(std::ceil(hi_c)));
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col) {
        const PixelCoord s = world_to_pixel(f.pose, ws.to_world(row, col), f.spec);
        const auto v = sample_bilinear(f.centerline, s.row, s.col);
        if (!v.valid) continue;
        out.value.at(row, col) += v.value;
        out.weight.at(row, col) += 1.0f;
      }
  }
  for (std::size_t i = 0; i < out.value.size(); ++i) {
    const float n = out.weight.data()[i];
    out.value.data()[i] = n > 0.0f ? out.value.data()[i] / n : 0.0f;
  }
  return out;
}

}  // namespace lanegraph
