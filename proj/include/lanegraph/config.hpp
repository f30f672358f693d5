#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanegraph/baseline_vectorizer.hpp"
#include "lanegraph/evaluation.hpp"
#include "lanegraph/geometry.hpp"
#include "lanegraph/predictors.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/scene_sim.hpp"
#include "lanegraph/temporal_fusion.hpp"
#include "lanegraph/tracer_agent.hpp"

namespace lanegraph {

inline constexpr const char* kOutputRootEnv = "LANEGRAPH_OUTPUT_ROOT";

struct PredictorSettings {
  std::string kind = "oracle";  // oracle | oracle-gated | walker | external
  std::string command;          // external only
  double timeout = 5.0;         // s, external only
  WalkerConfig walker;
};

struct RunConfig {
  SceneConfig scene;
  GridSpec grid;
  FusionConfig fusion;
  AgentConfig agent;
  LabelConfig label;
  MetricConfig metric;
  VectorizeConfig vectorize;
  PredictorSettings predictor;
  std::string output;  // empty: $LANEGRAPH_OUTPUT_ROOT or "out"
  std::uint64_t seed = 1;  // frame noise and sampler noise
  int workers = 1;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigField {
  std::string path;
  std::string help;
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

namespace detail {

template <class T>
T json_as(const nlohmann::json& j, const std::string& path) {
  auto bad = [&](const char* want) { return ConfigError(path + ": expected " + want + ", got " + j.dump()); };
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw bad("true or false");
    return j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw bad("a string");
    return j.get<std::string>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
      throw bad("a non-negative integer");
    return j.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw bad("an integer");
    return j.get<T>();
  } else {
    if (!j.is_number()) throw bad("a number");
    return j.get<T>();
  }
}

template <class T, class Access>
ConfigField field(std::string path, std::string help, Access access) {
  ConfigField f;
  f.path = path;
  f.help = std::move(help);
  f.get = [access](const RunConfig& c) { return nlohmann::json(access(c)); };
  f.set = [access, path](RunConfig& c, const nlohmann::json& j) { access(c) = json_as<T>(j, path); };
  return f;
}

}  // namespace detail

// Generic lambdas keep one accessor per field for both const and mutable use.
#define LANEGRAPH_FIELD(T, path, member, help) \
  detail::field<T>(path, help, [](auto& c) -> auto& { return c.member; })

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back({"scene.kind", "straight, curve, split-merge, four-way or random",
                 [](const RunConfig& c) { return nlohmann::json(to_string(c.scene.kind)); },
                 [](RunConfig& c, const nlohmann::json& j) {
                   try {
                     c.scene.kind = scene_kind_from_string(detail::json_as<std::string>(j, "scene.kind"));
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("scene.kind: ") + e.what());
                   }
                 }});
    f.push_back(LANEGRAPH_FIELD(int, "scene.lanes", scene.lanes, "lanes per road"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.lane_spacing", scene.lane_spacing, "m between lane centerlines"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.extent", scene.extent, "m, road length"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.ego_speed", scene.ego_speed, "m travelled per frame"));
    f.push_back(LANEGRAPH_FIELD(int, "scene.frames", scene.frames, "frames per sequence"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.lateral_jitter", scene.lateral_jitter, "m, ego lateral jitter"));
    f.push_back(LANEGRAPH_FIELD(std::uint64_t, "scene.seed", scene.seed, "scene layout seed"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.noise.falloff_sigma", scene.noise.falloff_sigma,
                                "px, centerline heatmap falloff"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.noise.amplitude", scene.noise.amplitude,
                                "additive uniform heatmap noise in [0,1]"));
    f.push_back(LANEGRAPH_FIELD(double, "scene.noise.dropout", scene.noise.dropout,
                                "probability a heatmap patch is erased"));
    f.push_back(LANEGRAPH_FIELD(int, "scene.noise.dropout_patch", scene.noise.dropout_patch, "px, dropout patch size"));
    f.push_back(LANEGRAPH_FIELD(int, "grid.height", grid.height, "BEV rows"));
    f.push_back(LANEGRAPH_FIELD(int, "grid.width", grid.width, "BEV columns"));
    f.push_back(LANEGRAPH_FIELD(double, "grid.resolution", grid.resolution, "m per pixel"));
    f.push_back(LANEGRAPH_FIELD(int, "fusion.tau", fusion.tau, "temporal window half-width, frames"));
    f.push_back(LANEGRAPH_FIELD(bool, "fusion.causal", fusion.causal, "use past frames only"));
    f.push_back(LANEGRAPH_FIELD(int, "agent.roi_size", agent.roi_size, "px, ROI side (even)"));
    f.push_back(LANEGRAPH_FIELD(int, "agent.max_queries", agent.max_queries, "vertices kept per step"));
    f.push_back(LANEGRAPH_FIELD(double, "agent.valid_threshold", agent.valid_threshold,
                                "minimum vertex probability"));
    f.push_back(LANEGRAPH_FIELD(double, "agent.peak_threshold", agent.peak_threshold,
                                "initial-vertex heatmap peak threshold"));
    f.push_back(LANEGRAPH_FIELD(double, "agent.nms_radius", agent.nms_radius, "px, peak suppression radius"));
    f.push_back(LANEGRAPH_FIELD(double, "agent.dedup_radius", agent.dedup_radius, "m, candidate and vertex merge radius"));
    f.push_back(LANEGRAPH_FIELD(double, "agent.join_radius", agent.join_radius, "px, stop-to-trace connection reach"));
    f.push_back(LANEGRAPH_FIELD(int, "agent.max_steps_instance", agent.max_steps_instance, "step budget per instance"));
    f.push_back(LANEGRAPH_FIELD(int, "agent.max_steps_frame", agent.max_steps_frame, "step budget per frame"));
    f.push_back(LANEGRAPH_FIELD(double, "agent.history_width", agent.history_width, "px, trace width in the history map"));
    f.push_back(LANEGRAPH_FIELD(int, "agent.min_spur_edges", agent.min_spur_edges, "shorter dangling chains are pruned"));
    f.push_back(LANEGRAPH_FIELD(bool, "agent.random_pop", agent.random_pop, "pop candidates in random order"));
    f.push_back(LANEGRAPH_FIELD(std::uint64_t, "agent.pop_seed", agent.pop_seed, "seed for random_pop"));
    f.push_back(LANEGRAPH_FIELD(double, "label.step", label.step, "px of arc length per expert move"));
    f.push_back(LANEGRAPH_FIELD(double, "label.match_radius", label.match_radius, "px, agent-to-centerline reach"));
    f.push_back(LANEGRAPH_FIELD(double, "label.coverage_radius", label.coverage_radius, "px, explored test radius"));
    f.push_back(LANEGRAPH_FIELD(double, "label.explored_fraction", label.explored_fraction,
                                "share of the approach that must be traced already"));
    f.push_back(LANEGRAPH_FIELD(double, "label.noise", label.noise, "px, sampling trajectory noise"));
    f.push_back(LANEGRAPH_FIELD(double, "metric.delta", metric.delta, "px, match threshold"));
    f.push_back(LANEGRAPH_FIELD(double, "metric.epsilon", metric.epsilon, "px, topology reach radius"));
    f.push_back(LANEGRAPH_FIELD(double, "metric.spacing", metric.spacing, "px, resampling spacing"));
    f.push_back(LANEGRAPH_FIELD(double, "metric.resolution", metric.resolution, "m per evaluation pixel"));
    f.push_back({"metric.reach", "undirected or directed geodesic balls",
                 [](const RunConfig& c) {
                   return nlohmann::json(c.metric.reach == Reach::kDirected ? "directed" : "undirected");
                 },
                 [](RunConfig& c, const nlohmann::json& j) {
                   const auto v = detail::json_as<std::string>(j, "metric.reach");
                   if (v != "directed" && v != "undirected")
                     throw ConfigError("metric.reach: expected directed or undirected, got " + v);
                   c.metric.reach = v == "directed" ? Reach::kDirected : Reach::kUndirected;
                 }});
    f.push_back(LANEGRAPH_FIELD(double, "vectorize.threshold", vectorize.threshold, "binarization threshold"));
    f.push_back(LANEGRAPH_FIELD(int, "vectorize.min_component", vectorize.min_component, "px, smallest kept blob"));
    f.push_back(LANEGRAPH_FIELD(double, "vectorize.spur_length", vectorize.spur_length, "px, skeleton spur prune"));
    f.push_back(LANEGRAPH_FIELD(double, "vectorize.simplify_tolerance", vectorize.simplify_tolerance,
                                "px, polyline simplification"));
    f.push_back(LANEGRAPH_FIELD(std::string, "predictor.kind", predictor.kind,
                                "oracle, oracle-gated, walker or external"));
    f.push_back(LANEGRAPH_FIELD(std::string, "predictor.command", predictor.command,
                                "external predictor command line"));
    f.push_back(LANEGRAPH_FIELD(double, "predictor.timeout", predictor.timeout, "s, external reply timeout"));
    f.push_back(LANEGRAPH_FIELD(double, "predictor.walker.step", predictor.walker.step, "px, walker circle radius"));
    f.push_back(LANEGRAPH_FIELD(double, "predictor.walker.peak_threshold", predictor.walker.peak_threshold,
                                "walker heatmap threshold"));
    f.push_back(LANEGRAPH_FIELD(double, "predictor.walker.suppress_window", predictor.walker.suppress_window,
                                "degrees around the way back that are ignored"));
    f.push_back(LANEGRAPH_FIELD(std::string, "output", output, "output directory"));
    f.push_back(LANEGRAPH_FIELD(std::uint64_t, "seed", seed, "frame noise and sampling seed"));
    f.push_back(LANEGRAPH_FIELD(int, "workers", workers, "parallel workers"));
    return f;
  }();
  return fields;
}

#undef LANEGRAPH_FIELD

inline const ConfigField* find_field(const std::string& path) {
  for (const auto& f : config_fields())
    if (f.path == path) return &f;
  return nullptr;
}

inline bool is_field_prefix(const std::string& path) {
  for (const auto& f : config_fields())
    if (f.path.size() > path.size() && f.path.compare(0, path.size(), path) == 0 && f.path[path.size()] == '.')
      return true;
  return false;
}

/// Applies a (possibly partial) config tree. Unknown keys are errors.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j, const std::string& prefix = "") {
  if (!j.is_object()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (const ConfigField* f = find_field(path)) {
      f->set(cfg, it.value());
    } else if (is_field_prefix(path)) {
      apply_config_json(cfg, it.value(), path);
    } else {
      throw ConfigError("unknown config key: " + path);
    }
  }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  } catch (const RasterIoError& e) {
    throw ConfigError(e.what());
  }
  apply_config_json(cfg, j);
}

/// "path=value"; the value is read as JSON when possible, else as a string.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const ConfigField* f = find_field(path);
  if (!f) throw ConfigError("unknown config key: " + path);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  f->set(cfg, value);
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : config_fields()) {
    std::string pointer = "/" + f.path;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    j[nlohmann::json::json_pointer(pointer)] = f.get(cfg);
  }
  return j;
}

/// One line per field: path, default value and description.
inline std::string describe_config_fields() {
  const RunConfig defaults;
  std::string out;
  for (const auto& f : config_fields()) {
    std::string line = "  " + f.path;
    line.resize(std::max<std::size_t>(line.size() + 1, 36), ' ');
    out += line + f.help + " (default " + f.get(defaults).dump() + ")\n";
  }
  return out;
}

inline std::filesystem::path output_root(const RunConfig& cfg) {
  if (!cfg.output.empty()) return cfg.output;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "out";
}

/// Range checks across all sections; throws ConfigError naming the field.
inline void validate_run_config(const RunConfig& cfg) {
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  wrap("scene", [&] { cfg.scene.validate(); });
  wrap("grid", [&] { cfg.grid.validate(); });
  wrap("fusion", [&] { cfg.fusion.validate(); });
  wrap("agent", [&] { cfg.agent.validate(cfg.grid); });
  wrap("label", [&] { cfg.label.validate(); });
  wrap("metric", [&] { cfg.metric.validate(); });
  wrap("vectorize", [&] { cfg.vectorize.validate(); });
  static const std::set<std::string> kinds{"oracle", "oracle-gated", "walker", "external"};
  if (!kinds.count(cfg.predictor.kind))
    throw ConfigError("predictor.kind: expected oracle, oracle-gated, walker or external, got " + cfg.predictor.kind);
  if (cfg.predictor.kind == "external" && cfg.predictor.command.empty())
    throw ConfigError("predictor.command: required when predictor.kind is external");
  if (!(cfg.predictor.timeout > 0.0)) throw ConfigError("predictor.timeout: must be > 0");
  if (!(cfg.predictor.walker.step > 0.0)) throw ConfigError("predictor.walker.step: must be > 0");
  if (cfg.workers < 1) throw ConfigError("workers: must be >= 1");
}

}  // namespace lanegraph
