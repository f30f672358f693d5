#pragma once

#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/scene_sim.hpp"

namespace lanegraph {

// Scene directory layout:
//   manifest.json          grid spec, per-frame pose and file names
//   gt_graph.txt           ground-truth graph in world meters (may be absent)
//   frames/NNNN_centerline.pfm, NNNN_initial.pfm, NNNN_featureK.pfm (K >= 1)
// Feature channel 0 is the centerline heatmap and is not stored twice.

inline constexpr const char* kSceneManifest = "manifest.json";
inline constexpr const char* kGroundTruthFile = "gt_graph.txt";

struct SceneData {
  GridSpec spec;
  std::vector<BevGrid> frames;
  std::vector<EgoPose> poses;
  CenterlineGraph ground_truth;
  bool has_ground_truth = false;
  nlohmann::json info;  // free-form generator settings
};

class SceneIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string frame_file(int t, const std::string& what) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "frames/%04d_%s.pfm", t, what.c_str());
  return buf;
}

}  // namespace detail

inline void write_scene(const std::filesystem::path& dir, const std::vector<BevGrid>& frames,
                        const CenterlineGraph* ground_truth, const nlohmann::json& info = nlohmann::json::object()) {
  if (frames.empty()) throw SceneIoError("scene has no frames");
  std::filesystem::create_directories(dir / "frames");
  const GridSpec spec = frames.front().spec;
  nlohmann::json jframes = nlohmann::json::array();
  for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
    const BevGrid& f = frames[t];
    if (!(f.spec == spec)) throw SceneIoError("frames disagree on the grid spec");
    nlohmann::json jf = {{"index", t},
                         {"pose", {f.pose.x, f.pose.y, f.pose.yaw}},
                         {"centerline", detail::frame_file(t, "centerline")},
                         {"initial_vertex", detail::frame_file(t, "initial")}};
    save_pfm(dir / jf["centerline"].get<std::string>(), f.centerline);
    save_pfm(dir / jf["initial_vertex"].get<std::string>(), f.initial_vertex);
    nlohmann::json extra = nlohmann::json::array();
    for (int k = 1; k < static_cast<int>(f.features.size()); ++k) {
      const std::string name = detail::frame_file(t, "feature" + std::to_string(k));
      save_pfm(dir / name, f.features[k]);
      extra.push_back(name);
    }
    jf["extra_features"] = extra;
    jframes.push_back(jf);
  }
  nlohmann::json manifest = {
      {"format", "lanegraph-scene"},
      {"version", 1},
      {"grid", {{"height", spec.height}, {"width", spec.width}, {"resolution", spec.resolution}}},
      {"frames", jframes},
      {"info", info}};
  if (ground_truth) {
    write_file_atomic(dir / kGroundTruthFile, graph_to_string(*ground_truth));
    manifest["ground_truth"] = kGroundTruthFile;
  }
  write_file_atomic(dir / kSceneManifest, manifest.dump(2) + "\n");
}

inline SceneData load_scene(const std::filesystem::path& dir) {
  const auto mpath = dir / kSceneManifest;
  if (!std::filesystem::exists(mpath)) throw SceneIoError("not a scene directory (no manifest.json): " + dir.string());
  SceneData s;
  try {
    const auto m = nlohmann::json::parse(read_file(mpath));
    if (m.value("format", "") != "lanegraph-scene") throw SceneIoError("unexpected manifest format in " + mpath.string());
    const auto& g = m.at("grid");
    s.spec = {g.at("height").get<int>(), g.at("width").get<int>(), g.at("resolution").get<double>()};
    s.spec.validate();
    for (const auto& jf : m.at("frames")) {
      const auto& p = jf.at("pose");
      BevGrid f;
      f.spec = s.spec;
      f.pose = EgoPose(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
      f.centerline = load_pfm(dir / jf.at("centerline").get<std::string>());
      f.initial_vertex = load_pfm(dir / jf.at("initial_vertex").get<std::string>());
      f.features.push_back(f.centerline);
      for (const auto& name : jf.value("extra_features", nlohmann::json::array()))
        f.features.push_back(load_pfm(dir / name.get<std::string>()));
      for (const Raster* r : {&f.centerline, &f.initial_vertex})
        if (r->height() != s.spec.height || r->width() != s.spec.width)
          throw SceneIoError("frame raster size does not match the grid in " + dir.string());
      s.poses.push_back(f.pose);
      s.frames.push_back(std::move(f));
    }
    if (m.contains("ground_truth")) {
      s.ground_truth = load_graph(dir / m.at("ground_truth").get<std::string>());
      s.has_ground_truth = true;
    }
    s.info = m.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw SceneIoError("bad manifest " + mpath.string() + ": " + e.what());
  }
  if (s.frames.empty()) throw SceneIoError("scene has no frames: " + dir.string());
  return s;
}

}  // namespace lanegraph
