#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanegraph/baseline_vectorizer.hpp"
#include "lanegraph/config.hpp"
#include "lanegraph/evaluation.hpp"
#include "lanegraph/expert_sampler.hpp"
#include "lanegraph/external_predictor.hpp"
#include "lanegraph/predictors.hpp"
#include "lanegraph/render.hpp"
#include "lanegraph/scene_io.hpp"
#include "lanegraph/scene_sim.hpp"
#include "lanegraph/tracer_agent.hpp"

namespace fs = std::filesystem;
using namespace lanegraph;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kProtocol = 3 };

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out;
  int workers = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config field, key=value (repeatable, wins over the file)");
  cmd->add_option("-o,--out", c.out, std::string("output directory (default: config output, $") + kOutputRootEnv +
                                         " or ./out)");
  cmd->add_option("-j,--workers", c.workers, "scenes processed in parallel");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_file.empty()) load_config_file(cfg, c.config_file);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (!c.out.empty()) cfg.output = c.out;
  if (c.workers > 0) cfg.workers = c.workers;
  validate_run_config(cfg);
  cfg.metric.workers = 1;
  return cfg;
}

std::mutex log_mutex;

void log_line(const std::string& s) {
  std::lock_guard lock(log_mutex);
  std::cerr << s << '\n';
}

/// Runs `f` for every item on cfg.workers threads; the first error wins.
template <class F>
void for_each_scene(const std::vector<std::string>& items, int workers, F&& f) {
  std::exception_ptr first;
  std::mutex m;
  detail::parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
    try {
      f(items[i]);
    } catch (...) {
      std::lock_guard lock(m);
      if (!first) first = std::current_exception();
    }
  });
  if (first) std::rethrow_exception(first);
}

std::string scene_name(const std::string& dir) {
  const fs::path p = fs::path(dir).lexically_normal();
  return p.has_filename() ? p.filename().string() : p.parent_path().filename().string();
}

CenterlineGraph evaluation_truth(const SceneData& s, const RunConfig& cfg) {
  return clip_to_footprint(s.ground_truth, s.poses, s.spec, cfg.metric.spacing * cfg.metric.resolution);
}

nlohmann::json diagnostics_json(const RunDiagnostics& d) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : d.frames)
    frames.push_back({{"frame", f.frame},
                      {"candidates", f.candidates},
                      {"instances", f.instances},
                      {"steps", f.steps},
                      {"moves", f.moves},
                      {"stops", f.stops},
                      {"branches", f.branches},
                      {"boundary_stops", f.boundary_stops},
                      {"joins", f.joins},
                      {"skipped_candidates", f.skipped_candidates},
                      {"instance_budget_hits", f.instance_budget_hits},
                      {"frame_budget_hit", f.frame_budget_hit},
                      {"predictor_errors", f.predictor_errors},
                      {"endpoints", f.endpoints}});
  return {{"total_steps", d.total_steps()},
          {"merged_vertices", d.merged_vertices},
          {"pruned_spurs", d.pruned_spurs},
          {"errors", d.errors},
          {"frames", frames}};
}

double total_millis(const RunDiagnostics& d) {
  double ms = 0;
  for (const auto& f : d.frames) ms += f.millis;
  return ms;
}

/// Writes graph, clipped ground truth and report for one traced scene.
void write_run(const fs::path& dir, const CenterlineGraph& graph, const SceneData& scene, const RunConfig& cfg,
               const nlohmann::json& extra) {
  fs::create_directories(dir);
  write_file_atomic(dir / "graph.txt", graph_to_string(graph));
  nlohmann::json info = extra;
  info["config"] = config_to_json(cfg);
  if (scene.has_ground_truth) {
    const CenterlineGraph gt = evaluation_truth(scene, cfg);
    write_file_atomic(dir / "gt_graph.txt", graph_to_string(gt));
    const MetricReport rep = evaluate(graph, gt, cfg.metric);
    write_file_atomic(dir / "report.txt", report_to_text(rep));
    log_line(dir.string() + ": P-F " + format_score(rep.pixel.f1) + " T-F " + format_score(rep.topology.f1));
  }
  write_file_atomic(dir / "run.json", info.dump(2) + "\n");
}

std::unique_ptr<Predictor> make_predictor(const RunConfig& cfg, const SceneData& scene, const std::string& run_id) {
  const auto& k = cfg.predictor.kind;
  if (k == "oracle" || k == "oracle-gated") {
    if (!scene.has_ground_truth) throw ConfigError("predictor.kind " + k + " needs a scene with gt_graph.txt");
    return std::make_unique<OraclePredictor>(scene.ground_truth, cfg.label, k == "oracle-gated");
  }
  if (k == "walker") {
    WalkerConfig w = cfg.predictor.walker;
    w.max_queries = cfg.agent.max_queries;
    return std::make_unique<WalkerPredictor>(w);
  }
  ExternalConfig ec;
  ec.command = cfg.predictor.command;
  ec.timeout = cfg.predictor.timeout;
  ec.valid_threshold = cfg.agent.valid_threshold;
  ec.max_queries = cfg.agent.max_queries;
  ec.run_id = run_id;
  const int channels = static_cast<int>(scene.frames.front().features.size()) + 1;
  auto p = std::make_unique<ExternalPredictor>(ec, channels, cfg.agent.roi_size);
  p->start();  // fail early with a clear message
  return p;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& common, const std::string& name, int count) {
  RunConfig cfg = resolve_config(common);
  if (count < 1) throw ConfigError("--count must be >= 1");
  std::vector<std::string> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(std::to_string(cfg.scene.seed + i));
  for_each_scene(seeds, cfg.workers, [&](const std::string& seed_text) {
    RunConfig local = cfg;
    local.scene.seed = std::stoull(seed_text);
    local.seed = cfg.seed + (local.scene.seed - cfg.scene.seed);
    const Scene scene = generate_scene(local.scene);
    const auto frames = render_frames(scene, local.grid, local.scene.noise, local.seed);
    std::string dir_name = name.empty() ? to_string(local.scene.kind) + "-" + seed_text : name;
    if (!name.empty() && count > 1) dir_name += "-" + seed_text;
    const fs::path dir = output_root(local) / dir_name;
    const nlohmann::json info = {{"config", config_to_json(local)}};
    write_scene(dir, frames, &scene.ground_truth, info);
    std::cout << dir.string() << '\n';
  });
  return kOk;
}

int cmd_trace(const Common& common, const std::vector<std::string>& scenes) {
  const RunConfig cfg = resolve_config(common);
  std::atomic<int> errors{0};
  for_each_scene(scenes, cfg.workers, [&](const std::string& dir) {
    const SceneData scene = load_scene(dir);
    auto predictor = make_predictor(cfg, scene, scene_name(dir));
    TracerAgent agent(cfg.agent, cfg.fusion, *predictor);
    const CenterlineGraph graph = agent.trace_sequence(scene.frames);
    const auto& diag = agent.diagnostics();
    errors += static_cast<int>(diag.errors.size());
    const fs::path out = output_root(cfg) / scene_name(dir);
    write_run(out, graph, scene, cfg, {{"predictor", predictor->name()}, {"diagnostics", diagnostics_json(diag)}});
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: %d vertices, %d edges, %ld steps, %.1f ms, %zu predictor errors",
                  out.string().c_str(), graph.vertex_count(), graph.edge_count(), diag.total_steps(),
                  total_millis(diag), diag.errors.size());
    log_line(buf);
    for (const auto& e : diag.errors) log_line("  " + e);
  });
  return kOk;
}

int cmd_sample(const Common& common, const std::vector<std::string>& scenes) {
  const RunConfig cfg = resolve_config(common);
  for_each_scene(scenes, cfg.workers, [&](const std::string& dir) {
    const SceneData scene = load_scene(dir);
    if (!scene.has_ground_truth) throw ConfigError("sampling needs a scene with gt_graph.txt: " + dir);
    SamplerConfig sc;
    sc.label = cfg.label;
    sc.agent = cfg.agent;
    sc.fusion = cfg.fusion;
    sc.seed = cfg.seed;
    sc.scene_id = scene_name(dir);
    const SampleRun run = sample_scene(scene.ground_truth, scene.frames, sc);
    const fs::path out = output_root(cfg) / scene_name(dir);
    write_dataset(out, run.samples);
    write_file_atomic(out / "config.json", config_to_json(cfg).dump(2) + "\n");
    const CoverageReport cov = coverage_audit(run.samples, scene.ground_truth, scene.poses, scene.spec, cfg.label.step);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: %zu samples, coverage %.4f of %.1f m", out.string().c_str(),
                  run.samples.size(), cov.fraction(), cov.total_length);
    log_line(buf);
  });
  return kOk;
}

int cmd_eval(const Common& common, const std::vector<std::string>& graphs, const std::string& runs,
             const std::string& table) {
  const RunConfig cfg = resolve_config(common);
  MetricConfig mc = cfg.metric;
  mc.workers = cfg.workers;
  if (!runs.empty()) {
    if (!graphs.empty()) throw ConfigError("give either PRED GT or --runs, not both");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(runs))
      if (e.is_directory() && fs::exists(e.path() / "graph.txt") && fs::exists(e.path() / "gt_graph.txt"))
        dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ConfigError("no run directories with graph.txt and gt_graph.txt under " + runs);
    std::vector<MetricReport> reports;
    std::string out = std::string(kResultsHeader) + "\n";
    for (const auto& d : dirs) {
      reports.push_back(evaluate(load_graph(d / "graph.txt"), load_graph(d / "gt_graph.txt"), mc));
      out += report_row(d.filename().string(), reports.back()) + "\n";
      if (!table.empty()) append_result_row(table, d.filename().string(), reports.back());
    }
    const MetricReport mean = mean_report(reports);
    out += report_row("mean", mean) + "\n";
    if (!table.empty()) append_result_row(table, "mean", mean);
    std::cout << out;
    return kOk;
  }
  if (graphs.size() != 2) throw ConfigError("eval needs PRED and GT graph files, or --runs DIR");
  const MetricReport rep = evaluate(load_graph(graphs[0]), load_graph(graphs[1]), mc);
  std::cout << report_to_text(rep);
  if (!table.empty()) append_result_row(table, fs::path(graphs[0]).stem().string(), rep);
  return kOk;
}

int cmd_baseline(const Common& common, const std::vector<std::string>& scenes) {
  const RunConfig cfg = resolve_config(common);
  for_each_scene(scenes, cfg.workers, [&](const std::string& dir) {
    const SceneData scene = load_scene(dir);
    const CenterlineGraph graph = baseline_pipeline(scene.frames, cfg.vectorize);
    const fs::path out = output_root(cfg) / scene_name(dir);
    write_run(out, graph, scene, cfg, {{"predictor", "baseline"}});
    log_line(out.string() + ": " + std::to_string(graph.vertex_count()) + " vertices, " +
             std::to_string(graph.edge_count()) + " edges");
  });
  return kOk;
}

int cmd_render(const Common& common, const std::string& scene_dir, const std::string& gt_file,
               const std::vector<std::string>& pred_files, const std::string& style, bool vertices,
               const std::string& output) {
  const RunConfig cfg = resolve_config(common);
  if (fs::path(output).extension() != ".ppm")
    throw ConfigError("unknown output format for " + output + " (only .ppm is supported)");
  std::optional<SceneData> scene;
  if (!scene_dir.empty()) scene = load_scene(scene_dir);
  CenterlineGraph gt;
  if (!gt_file.empty()) gt = load_graph(gt_file);
  std::vector<CenterlineGraph> preds;
  for (const auto& f : pred_files) preds.push_back(load_graph(f));

  std::vector<const CenterlineGraph*> all{&gt};
  for (const auto& p : preds) all.push_back(&p);
  WorldGridSpec ws;
  WorldRaster heat;
  if (scene) {
    ws = world_spec_covering(scene->poses, scene->spec);
    heat = accumulate_world(scene->frames, ws);
  } else {
    ws = world_spec_for_graphs(all, cfg.grid.resolution);
  }
  WorldCanvas canvas(ws);
  if (scene) canvas.underlay(heat.value);
  if (!gt.empty()) canvas.draw({&gt, GraphStyle::kSolid, Rgb{110, 110, 110}, 3, false});
  const GraphStyle gs = style == "solid" ? GraphStyle::kSolid : GraphStyle::kInstances;
  for (const auto& p : preds) canvas.draw({&p, gs, Rgb{255, 170, 40}, 1, vertices});
  canvas.frame();
  if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
  save_ppm(output, canvas.image());
  std::cout << output << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane centerline graph tracing toolkit"};
  app.require_subcommand(1);
  app.footer("Config fields (JSON file keys or --set paths):\n" + describe_config_fields() +
             "\nExit codes: 0 success, 1 invalid input or config, 2 runtime error, 3 predictor protocol error.");

  Common common;
  std::string name;
  int count = 1;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic scene directory");
  add_common(sim, common);
  sim->add_option("--name", name, "scene directory name (default: <kind>-<seed>)");
  sim->add_option("--count", count, "number of scenes, with consecutive seeds");

  std::vector<std::string> scenes;
  auto* trace = app.add_subcommand("trace", "trace the lane graph of scene directories");
  add_common(trace, common);
  trace->add_option("scenes", scenes, "scene directories")->required()->check(CLI::ExistingDirectory);

  auto* sample = app.add_subcommand("sample", "write expert training samples for scene directories");
  add_common(sample, common);
  sample->add_option("scenes", scenes, "scene directories")->required()->check(CLI::ExistingDirectory);

  std::vector<std::string> graphs;
  std::string runs, table;
  auto* eval = app.add_subcommand("eval", "score a predicted graph against ground truth");
  add_common(eval, common);
  eval->add_option("graphs", graphs, "PRED GT graph files")->check(CLI::ExistingFile);
  eval->add_option("--runs", runs, "directory of run folders holding graph.txt and gt_graph.txt")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--table", table, "append result rows to this CSV file");

  auto* base = app.add_subcommand("baseline", "segment-and-skeletonize baseline on scene directories");
  add_common(base, common);
  base->add_option("scenes", scenes, "scene directories")->required()->check(CLI::ExistingDirectory);

  std::string scene_dir, gt_file, style = "instances", image;
  std::vector<std::string> preds;
  bool vertices = false;
  auto* render = app.add_subcommand("render", "draw graphs and heatmaps to a PPM image");
  add_common(render, common);
  render->add_option("--scene", scene_dir, "scene directory for the heatmap underlay")->check(CLI::ExistingDirectory);
  render->add_option("--gt", gt_file, "ground-truth graph, drawn in grey")->check(CLI::ExistingFile);
  render->add_option("--pred", preds, "predicted graph(s), coloured per instance")->check(CLI::ExistingFile);
  render->add_option("--style", style, "instances or solid")->check(CLI::IsMember({"instances", "solid"}));
  render->add_flag("--vertices", vertices, "mark predicted vertices");
  render->add_option("image", image, "output .ppm file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*sim) return cmd_simulate(common, name, count);
    if (*trace) return cmd_trace(common, scenes);
    if (*sample) return cmd_sample(common, scenes);
    if (*eval) return cmd_eval(common, graphs, runs, table);
    if (*base) return cmd_baseline(common, scenes);
    if (*render) return cmd_render(common, scene_dir, gt_file, preds, style, vertices, image);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const PredictorError& e) {
    std::cerr << "predictor error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kProtocol;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const GraphError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const SceneIoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
