#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanegraph/evaluation.hpp"
#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/predictor.hpp"
#include "lanegraph/predictors.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/tracer_agent.hpp"

namespace lanegraph {

/// v + (u1, u2) with each component uniform in [-magnitude, magnitude].
inline Vec2 inject_noise(Vec2 v, double magnitude, std::mt19937_64& rng) {
  if (magnitude < 0.0) throw std::invalid_argument("noise magnitude must be >= 0");
  if (magnitude == 0.0) return v;
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  const double dx = u(rng);
  const double dy = u(rng);
  return {v.x + dx, v.y + dy};
}

struct TrainingSample {
  RoiTensor roi;
  std::vector<Vec2> labels;  // ROI-relative, x=col, y=row
  bool stop = true;
  std::string scene_id;
  int frame = 0;
  long step = 0;
  Vec2 world;      // agent position v_t
  Vec2 centre;     // ROI centre, ego pixels
  EgoPose pose;    // ego pose of the frame
};

struct SamplerConfig {
  LabelConfig label;
  AgentConfig agent;
  FusionConfig fusion;
  std::uint64_t seed = 0;
  std::string scene_id = "scene";
};

struct SampleRun {
  std::vector<TrainingSample> samples;
  CenterlineGraph trajectory;  // raw M_W before cleanup
  RunDiagnostics diagnostics;
};

/// Runs the tracer with the ground-truth expert acting and records one sample
/// per step, including stops. Accepted vertices are perturbed before they
/// enter the graph, labels are not.
inline SampleRun sample_scene(const CenterlineGraph& gt_world, const std::vector<BevGrid>& frames,
                              const SamplerConfig& cfg) {
  cfg.label.validate();
  OraclePredictor oracle(gt_world, cfg.label);
  std::mt19937_64 rng(cfg.seed);
  SampleRun run;
  AgentHooks hooks;
  hooks.on_step = [&](const StepContext& ctx, const PredictorOutput& out) {
    TrainingSample s;
    s.roi = ctx.roi;
    for (const auto& v : out) s.labels.push_back(v.offset);
    s.stop = s.labels.empty();
    s.scene_id = cfg.scene_id;
    s.frame = ctx.frame;
    s.step = ctx.step;
    s.world = pixel_to_world(ctx.pose, ctx.position.y, ctx.position.x, ctx.spec);
    s.centre = ctx.centre;
    s.pose = ctx.pose;
    run.samples.push_back(std::move(s));
  };
  if (cfg.label.noise > 0.0) hooks.perturb = [&](Vec2 t) { return inject_noise(t, cfg.label.noise, rng); };
  TracerAgent agent(cfg.agent, cfg.fusion, oracle, std::move(hooks));
  agent.trace_sequence(frames);
  run.trajectory = agent.state().world;
  run.diagnostics = agent.diagnostics();
  return run;
}

/// Label positions of a sample in world coordinates.
inline std::vector<Vec2> label_world_points(const TrainingSample& s, const GridSpec& spec) {
  std::vector<Vec2> pts;
  for (Vec2 off : s.labels) {
    const Vec2 px = s.centre + off;
    pts.push_back(pixel_to_world(s.pose, px.y, px.x, spec));
  }
  return pts;
}

struct CoverageReport {
  double covered_length = 0.0;  // m
  double total_length = 0.0;    // m
  double fraction() const { return total_length > 0.0 ? covered_length / total_length : 1.0; }
};

/// Share of in-footprint ground-truth arc length lying within `radius_px` of
/// some segment from a sample position to one of its labels.
inline CoverageReport coverage_audit(const std::vector<TrainingSample>& samples, const CenterlineGraph& gt_world,
                                     const std::vector<EgoPose>& poses, const GridSpec& spec, double radius_px) {
  const double step_m = spec.resolution;
  const CenterlineGraph g = clip_to_footprint(gt_world, poses, spec, step_m);
  struct Seg {
    Vec2 a, b;
  };
  std::vector<Seg> segs;
  for (const auto& s : samples)
    for (Vec2 l : label_world_points(s, spec)) segs.push_back({s.world, l});
  std::vector<Vec2> mids;
  for (const auto& s : segs) mids.push_back((s.a + s.b) * 0.5);
  double max_half = 0.0;
  for (const auto& s : segs) max_half = std::max(max_half, distance(s.a, s.b) / 2.0);
  const double radius = radius_px * spec.resolution;
  PointIndex index(mids, std::max(radius + max_half, 1e-3));

  CoverageReport rep;
  for (const auto& e : g.edges()) {
    const Vec2 a = g.vertex(e.src), b = g.vertex(e.dst);
    const double len = distance(a, b);
    const Vec2 m = (a + b) * 0.5;
    bool hit = false;
    index.for_each_within(m, radius + max_half + 1e-9, [&](int k) {
      if (segment_distance(m, segs[k].a, segs[k].b) <= radius) {
        hit = true;
        return false;
      }
      return true;
    });
    rep.total_length += len;
    if (hit) rep.covered_length += len;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Dataset files: dataset.bin holds, per sample, one JSON metadata line followed
// by the ROI tensor as little-endian float32 (channel, row, col order).
// index.txt lists "offset bytes" per record. manifest.json documents layout.

inline constexpr const char* kDatasetFile = "dataset.bin";
inline constexpr const char* kIndexFile = "index.txt";
inline constexpr const char* kManifestFile = "manifest.json";

inline std::vector<std::string> default_channel_names(int channels) {
  std::vector<std::string> names;
  for (int k = 0; k + 1 < channels; ++k)
    names.push_back(k == 0 ? "centerline" : k == 1 ? "orientation" : "feature" + std::to_string(k));
  names.push_back("history");
  return names;
}

inline nlohmann::json sample_metadata(const TrainingSample& s) {
  nlohmann::json labels = nlohmann::json::array();
  for (Vec2 l : s.labels) labels.push_back({l.x, l.y});
  return {{"scene", s.scene_id},
          {"frame", s.frame},
          {"step", s.step},
          {"stop", s.stop},
          {"labels", labels},
          {"v_world", {s.world.x, s.world.y}},
          {"centre_px", {s.centre.x, s.centre.y}},
          {"pose", {s.pose.x, s.pose.y, s.pose.yaw}},
          {"shape", {s.roi.channels, s.roi.size, s.roi.size}}};
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<TrainingSample>& samples) {
  std::filesystem::create_directories(dir);
  std::string blob, index;
  for (const auto& s : samples) {
    const std::size_t offset = blob.size();
    blob += sample_metadata(s).dump();
    blob.push_back('\n');
    for (float v : s.roi.data) append_f32_le(blob, v);
    index += std::to_string(offset) + " " + std::to_string(blob.size() - offset) + "\n";
  }
  const int channels = samples.empty() ? 0 : samples.front().roi.channels;
  const int size = samples.empty() ? 0 : samples.front().roi.size;
  long stops = 0;
  for (const auto& s : samples) stops += s.stop ? 1 : 0;
  nlohmann::json manifest = {
      {"format", "lanegraph-dataset"},
      {"version", 1},
      {"samples", samples.size()},
      {"stop_samples", stops},
      {"tensor", {{"channels", channels}, {"height", size}, {"width", size}, {"dtype", "float32"},
                  {"byte_order", "little"}, {"layout", "channel,row,col"}}},
      {"channels", default_channel_names(channels)},
      {"labels", "offsets from the ROI centre pixel, x=col, y=row; empty list means stop"},
      {"record", "one JSON metadata line terminated by a newline, then the tensor"}};
  write_file_atomic(dir / kDatasetFile, blob);
  write_file_atomic(dir / kIndexFile, index);
  write_file_atomic(dir / kManifestFile, manifest.dump(2) + "\n");
}

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads back a dataset written by write_dataset.
inline std::vector<TrainingSample> read_dataset(const std::filesystem::path& dir) {
  const std::string blob = read_file(dir / kDatasetFile);
  std::istringstream index(read_file(dir / kIndexFile));
  std::vector<TrainingSample> out;
  std::size_t offset = 0, bytes = 0;
  while (index >> offset >> bytes) {
    if (offset + bytes > blob.size()) throw DatasetError("index points past the end of the dataset");
    const std::size_t eol = blob.find('\n', offset);
    if (eol == std::string::npos || eol >= offset + bytes) throw DatasetError("record without metadata line");
    const auto meta = nlohmann::json::parse(blob.substr(offset, eol - offset));
    TrainingSample s;
    const auto shape = meta.at("shape");
    s.roi.channels = shape.at(0).get<int>();
    s.roi.size = shape.at(1).get<int>();
    const std::size_t n = static_cast<std::size_t>(s.roi.channels) * s.roi.size * s.roi.size;
    if (eol + 1 + n * 4 != offset + bytes) throw DatasetError("tensor size does not match record length");
    s.roi.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.roi.data[i] = read_f32_le(blob.data() + eol + 1 + 4 * i);
    for (const auto& l : meta.at("labels")) s.labels.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
    s.stop = meta.at("stop").get<bool>();
    s.scene_id = meta.at("scene").get<std::string>();
    s.frame = meta.at("frame").get<int>();
    s.step = meta.at("step").get<long>();
    s.world = {meta.at("v_world").at(0).get<double>(), meta.at("v_world").at(1).get<double>()};
    s.centre = {meta.at("centre_px").at(0).get<double>(), meta.at("centre_px").at(1).get<double>()};
    const auto& p = meta.at("pose");
    s.pose = EgoPose(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    out.push_back(std::move(s));
  }
  return out;
}

/// Lookup table for replaying recorded labels, keyed by global step.
inline std::map<long, PredictorOutput> replay_table(const std::vector<TrainingSample>& samples) {
  std::map<long, PredictorOutput> table;
  for (const auto& s : samples) {
    PredictorOutput out;
    for (Vec2 l : s.labels) out.push_back({l, 1.0});
    table[s.step] = std::move(out);
  }
  return table;
}

}  // namespace lanegraph
