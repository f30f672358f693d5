#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanegraph/geometry.hpp"
#include "lanegraph/graph.hpp"
#include "lanegraph/predictor.hpp"
#include "lanegraph/raster.hpp"
#include "lanegraph/scene_sim.hpp"
#include "lanegraph/temporal_fusion.hpp"

namespace lanegraph {

struct AgentConfig {
  int roi_size = 64;
  int max_queries = 8;             // N-hat
  double valid_threshold = 0.5;    // theta_v
  double peak_threshold = 0.3;     // theta_peak on H_I
  double nms_radius = 8.0;         // px
  double dedup_radius = 1.0;       // m
  double join_radius = 8.0;        // px, stop-to-trace connection reach
  int max_steps_instance = 500;
  int max_steps_frame = 5000;
  double history_width = 1.0;      // px
  int min_spur_edges = 2;
  bool random_pop = false;
  std::uint64_t pop_seed = 0;

  void validate(const GridSpec& spec) const {
    if (roi_size <= 0 || roi_size % 2 != 0 || roi_size > std::min(spec.height, spec.width))
      throw std::invalid_argument("agent.roi_size must be even and no larger than the grid");
    auto open_unit = [](double v, const char* n) {
      if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(n) + " must be in (0,1)");
    };
    open_unit(valid_threshold, "agent.valid_threshold");
    open_unit(peak_threshold, "agent.peak_threshold");
    if (max_queries < 1) throw std::invalid_argument("agent.max_queries must be >= 1");
    if (nms_radius < 0 || dedup_radius < 0 || join_radius < 0 || history_width <= 0)
      throw std::invalid_argument("agent radii must be >= 0 and history_width > 0");
    if (max_steps_instance < 1 || max_steps_frame < 1) throw std::invalid_argument("agent step budgets must be >= 1");
  }
};

enum class Provenance { kPeak, kEndpoint, kBranch };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kPeak: return "peak";
    case Provenance::kEndpoint: return "endpoint";
    case Provenance::kBranch: return "branch";
  }
  return "?";
}

struct Candidate {
  Vec2 world;
  Provenance provenance = Provenance::kPeak;
  int vertex = -1;  // M_W vertex this candidate resumes from, if any
};

enum class ActionKind { kStop, kMove, kBranch };

struct Action {
  ActionKind kind = ActionKind::kStop;
  std::vector<Vec2> targets;  // ego pixels
};

/// Maps a filtered predictor output to the action policy: 0 -> stop,
/// 1 -> move, more -> branch.
inline Action decide(const PredictorOutput& out, Vec2 centre, const AgentConfig& cfg) {
  std::vector<PredictedVertex> valid;
  for (const auto& v : out)
    if (v.probability >= cfg.valid_threshold) valid.push_back(v);
  std::stable_sort(valid.begin(), valid.end(),
                   [](const PredictedVertex& a, const PredictedVertex& b) { return a.probability > b.probability; });
  if (static_cast<int>(valid.size()) > cfg.max_queries) valid.resize(cfg.max_queries);
  Action a;
  a.kind = valid.empty() ? ActionKind::kStop : valid.size() == 1 ? ActionKind::kMove : ActionKind::kBranch;
  for (const auto& v : valid) a.targets.push_back(centre + v.offset);
  return a;
}

struct FrameDiagnostics {
  int frame = 0;
  int candidates = 0;
  int instances = 0;
  int steps = 0;
  int moves = 0;
  int stops = 0;
  int branches = 0;
  int boundary_stops = 0;
  int joins = 0;
  int skipped_candidates = 0;
  int instance_budget_hits = 0;
  bool frame_budget_hit = false;
  int predictor_errors = 0;
  int endpoints = 0;
  double millis = 0.0;
};

struct RunDiagnostics {
  std::vector<FrameDiagnostics> frames;
  std::vector<std::string> errors;
  int pruned_spurs = 0;
  int merged_vertices = 0;

  long total_steps() const {
    long s = 0;
    for (const auto& f : frames) s += f.steps;
    return s;
  }
};

/// Mutable trace state carried across frames.
struct AgentState {
  std::vector<Candidate> candidates;  // S, used as a stack
  CenterlineGraph world;              // M_W
  Raster history;                     // M_E for the current frame
  std::vector<Candidate> pending_endpoints;
  long global_step = 0;
  int next_instance = 0;
};

/// Optional hooks used by the expert sampler.
struct AgentHooks {
  /// Called after every prediction with the context and raw output.
  std::function<void(const StepContext&, const PredictorOutput&)> on_step;
  /// Applied to each accepted target (ego pixels) before it enters M_W.
  std::function<Vec2(Vec2)> perturb;
};

namespace detail {

inline Vec2 to_px(const EgoPose& pose, Vec2 w, const GridSpec& spec) {
  const auto p = world_to_pixel(pose, w, spec);
  return {p.col, p.row};
}

inline Vec2 to_world(const EgoPose& pose, Vec2 px, const GridSpec& spec) {
  return pixel_to_world(pose, px.y, px.x, spec);
}

inline bool inside(Vec2 px, const GridSpec& spec) { return pixel_in_bounds(px.y, px.x, spec); }

}  // namespace detail

/// Renders M_W into an ego-frame binary raster.
inline Raster render_history(const CenterlineGraph& world, const EgoPose& pose, const GridSpec& spec, double width) {
  Raster r(spec.height, spec.width);
  for (const auto& e : world.edges())
    draw_segment(r, detail::to_px(pose, world.vertex(e.src), spec), detail::to_px(pose, world.vertex(e.dst), spec),
                 width);
  return r;
}

/// Distance (m) from `p` to the nearest M_W edge or vertex.
inline double distance_to_trace(const CenterlineGraph& world, Vec2 p) {
  return world.empty() ? std::numeric_limits<double>::infinity() : distance_to_graph(world, p);
}

/// Non-maximum-suppressed peaks of a heatmap (x=col, y=row), highest first.
inline std::vector<Vec2> heatmap_peaks(const Raster& heat, double threshold, double nms_radius) {
  struct P {
    float v;
    int r, c;
  };
  std::vector<P> local;
  for (int r = 0; r < heat.height(); ++r)
    for (int c = 0; c < heat.width(); ++c) {
      const float v = heat.at(r, c);
      if (v < threshold) continue;
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr || dc) && heat.get_or(r + dr, c + dc, -1.0f) > v) {
            is_max = false;
            break;
          }
        }
      if (is_max) local.push_back({v, r, c});
    }
  std::stable_sort(local.begin(), local.end(), [](const P& a, const P& b) { return a.v > b.v; });
  std::vector<Vec2> kept;
  for (const P& p : local) {
    const Vec2 q{static_cast<double>(p.c), static_cast<double>(p.r)};
    if (std::none_of(kept.begin(), kept.end(), [&](Vec2 k) { return distance(k, q) < nms_radius; })) kept.push_back(q);
  }
  return kept;
}

/// Seeds S for a frame: H_I peaks (minus anything already traced) and the
/// previous frame's endpoints, which are pushed last so they pop first.
inline std::vector<Candidate> init_candidates(const BevGrid& grid, const std::vector<Candidate>& prev_endpoints,
                                              const CenterlineGraph& world, const AgentConfig& cfg) {
  std::vector<Candidate> s;
  const auto peaks = heatmap_peaks(grid.initial_vertex, cfg.peak_threshold, cfg.nms_radius);
  // Reverse so the strongest peak is popped first.
  for (auto it = peaks.rbegin(); it != peaks.rend(); ++it) {
    const Vec2 w = detail::to_world(grid.pose, *it, grid.spec);
    if (distance_to_trace(world, w) <= cfg.dedup_radius) continue;
    s.push_back({w, Provenance::kPeak, -1});
  }
  for (auto it = prev_endpoints.rbegin(); it != prev_endpoints.rend(); ++it) {
    Candidate c = *it;
    c.provenance = Provenance::kEndpoint;
    if (c.vertex < 0 && distance_to_trace(world, c.world) <= cfg.dedup_radius) continue;
    s.push_back(c);
  }
  return s;
}

class TracerAgent {
 public:
  TracerAgent(AgentConfig cfg, FusionConfig fusion, Predictor& predictor, AgentHooks hooks = {})
      : cfg_(cfg), fusion_(fusion), predictor_(predictor), hooks_(std::move(hooks)), rng_(cfg.pop_seed) {}

  AgentState& state() { return state_; }
  const RunDiagnostics& diagnostics() const { return diag_; }

  /// Traces one frame given its fused grid and the raw grid's H_I.
  void trace_frame(const BevGrid& fused, int frame_index) {
    const auto t0 = std::chrono::steady_clock::now();
    FrameDiagnostics fd;
    fd.frame = frame_index;
    pose_ = fused.pose;
    spec_ = fused.spec;
    fused_ = &fused;
    state_.history = render_history(state_.world, pose_, spec_, cfg_.history_width);
    fd.candidates = static_cast<int>(state_.candidates.size());
    std::vector<Candidate> endpoints;

    while (!state_.candidates.empty()) {
      if (fd.steps >= cfg_.max_steps_frame) {
        fd.frame_budget_hit = true;
        // Unconsumed candidates carry over so nothing is dropped silently.
        for (const auto& c : state_.candidates)
          if (c.vertex >= 0) endpoints.push_back(c);
        state_.candidates.clear();
        break;
      }
      Candidate c = pop_candidate();
      run_instance(c, fd, endpoints);
    }
    state_.pending_endpoints = std::move(endpoints);
    fd.endpoints = static_cast<int>(state_.pending_endpoints.size());
    fd.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    diag_.frames.push_back(fd);
  }

  /// Full sequence: fuse, seed candidates, trace; then clean up M_W.
  CenterlineGraph trace_sequence(const std::vector<BevGrid>& frames) {
    if (frames.empty()) return {};
    cfg_.validate(frames.front().spec);
    for (int t = 0; t < static_cast<int>(frames.size()); ++t) {
      const BevGrid fused = fuse_window(frames, t, fusion_);
      state_.candidates = init_candidates(frames[t], state_.pending_endpoints, state_.world, cfg_);
      trace_frame(fused, t);
    }
    return finalize();
  }

  /// Deduplicates vertices within the dedup radius and prunes short spurs.
  CenterlineGraph finalize() {
    CenterlineGraph merged = merge_close_vertices(state_.world, cfg_.dedup_radius, &diag_.merged_vertices);
    return prune_spurs(merged, cfg_.min_spur_edges, &diag_.pruned_spurs);
  }

  static CenterlineGraph merge_close_vertices(const CenterlineGraph& g, double radius, int* merged_count = nullptr) {
    const int n = g.vertex_count();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    PointIndex index(g.vertices(), std::max(radius, 1e-6));
    for (int i = 0; i < n; ++i)
      index.for_each_within(g.vertex(i), radius, [&](int j) {
        // Only dangling ends are merged; two through-vertices close together
        // are usually lanes crossing, not duplicates.
        if (g.degree(i) > 1 && g.degree(j) > 1) return true;
        const int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
        return true;
      });
    CenterlineGraph out;
    std::vector<int> remap(n, -1);
    int merged = 0;
    for (int i = 0; i < n; ++i) {
      const int root = find(i);
      if (root == i) remap[i] = out.add_vertex(g.vertex(i), g.tag(i));
      else ++merged;
    }
    for (int i = 0; i < n; ++i) remap[i] = remap[find(i)];
    for (const auto& e : g.edges())
      if (remap[e.src] != remap[e.dst]) out.add_edge(remap[e.src], remap[e.dst]);
    if (merged_count) *merged_count = merged;
    // Drop vertices left without edges.
    std::vector<bool> keep(out.vertex_count());
    for (int i = 0; i < out.vertex_count(); ++i) keep[i] = out.degree(i) > 0;
    return induced_subgraph(out, keep);
  }

  /// Removes dangling chains of fewer than `min_edges` edges that hang off a
  /// junction.
  static CenterlineGraph prune_spurs(const CenterlineGraph& g, int min_edges, int* pruned = nullptr) {
    std::vector<bool> keep(g.vertex_count(), true);
    int count = 0;
    for (int v = 0; v < g.vertex_count(); ++v) {
      if (g.degree(v) != 1) continue;
      std::vector<int> chain{v};
      int prev = -1, cur = v;
      while (true) {
        int next = -1;
        for (int w : g.successors(cur))
          if (w != prev) next = w;
        for (int w : g.predecessors(cur))
          if (w != prev) next = w;
        if (next < 0) break;
        prev = cur;
        cur = next;
        if (g.degree(cur) != 2) break;
        chain.push_back(cur);
      }
      if (g.degree(cur) >= 3 && static_cast<int>(chain.size()) < min_edges) {
        for (int u : chain) keep[u] = false;
        ++count;
      }
    }
    if (pruned) *pruned = count;
    return induced_subgraph(g, keep);
  }

 private:
  static constexpr int kJoinAncestorHops = 6;
  static constexpr double kJoinMinCos = 0.5;

  Candidate pop_candidate() {
    auto& s = state_.candidates;
    std::size_t idx = s.size() - 1;
    if (cfg_.random_pop) idx = std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng_);
    Candidate c = s[idx];
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(idx));
    return c;
  }

  int ensure_vertex(Candidate& c, int tag) {
    if (c.vertex < 0) c.vertex = state_.world.add_vertex(c.world, tag);
    return c.vertex;
  }

  void add_trace_edge(int a, int b) {
    if (state_.world.add_edge(a, b))
      draw_segment(state_.history, detail::to_px(pose_, state_.world.vertex(a), spec_),
                   detail::to_px(pose_, state_.world.vertex(b), spec_), cfg_.history_width);
  }

  std::optional<Vec2> heading_of(int vertex) const {
    if (vertex < 0) return std::nullopt;
    const auto& preds = state_.world.predecessors(vertex);
    if (preds.empty()) return std::nullopt;
    const Vec2 a = detail::to_px(pose_, state_.world.vertex(preds.back()), spec_);
    const Vec2 b = detail::to_px(pose_, state_.world.vertex(vertex), spec_);
    return b - a;
  }

  /// Connects a stopped vertex to nearby trace from another instance.
  bool try_join(int vertex) {
    if (vertex < 0 || state_.world.out_degree(vertex) > 0) return false;
    const Vec2 here = state_.world.vertex(vertex);
    const double reach = cfg_.join_radius * spec_.resolution;
    // Own recent trajectory and its siblings are not join targets.
    std::vector<int> excluded{vertex};
    std::vector<int> frontier{vertex};
    for (int hop = 0; hop < kJoinAncestorHops && !frontier.empty(); ++hop) {
      std::vector<int> next;
      for (int v : frontier)
        for (int p : state_.world.predecessors(v)) {
          if (std::find(excluded.begin(), excluded.end(), p) != excluded.end()) continue;
          excluded.push_back(p);
          next.push_back(p);
          if (hop == 0)
            for (int s : state_.world.successors(p)) excluded.push_back(s);
        }
      frontier = std::move(next);
    }
    // With a known heading only targets inside the forward cone qualify.
    const auto& preds = state_.world.predecessors(vertex);
    const std::optional<Vec2> heading =
        preds.empty() ? std::nullopt : std::optional<Vec2>(here - state_.world.vertex(preds.back()));
    int best = -1;
    double best_d = reach;
    for (int i = 0; i < state_.world.vertex_count(); ++i) {
      if (std::find(excluded.begin(), excluded.end(), i) != excluded.end()) continue;
      const Vec2 to = state_.world.vertex(i) - here;
      const double d = to.norm();
      if (heading && to.dot(*heading) < kJoinMinCos * d * heading->norm()) continue;
      if (d <= best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best < 0) return false;
    add_trace_edge(vertex, best);
    return true;
  }

  void run_instance(Candidate c, FrameDiagnostics& fd, std::vector<Candidate>& endpoints) {
    if (c.vertex < 0 && distance_to_trace(state_.world, c.world) <= cfg_.dedup_radius) {
      ++fd.skipped_candidates;
      return;
    }
    if (!detail::inside(detail::to_px(pose_, c.world, spec_), spec_)) {
      ++fd.skipped_candidates;
      return;
    }
    ++fd.instances;
    const int tag = state_.next_instance++;
    for (int k = 0;; ++k) {
      if (k >= cfg_.max_steps_instance) {
        ++fd.instance_budget_hits;
        return;
      }
      if (fd.steps >= cfg_.max_steps_frame) {
        if (c.vertex >= 0) state_.candidates.push_back(c);
        return;
      }
      const Vec2 px = detail::to_px(pose_, c.world, spec_);
      if (!detail::inside(px, spec_)) {
        // Round-off can push a target taken right on the border just outside.
        ++fd.boundary_stops;
        endpoints.push_back({c.world, Provenance::kEndpoint, c.vertex});
        return;
      }
      const Vec2 centre{std::round(px.x), std::round(px.y)};
      const RoiTensor roi = crop_roi(fused_->features, state_.history, px, cfg_.roi_size);
      const auto heading = heading_of(c.vertex);
      StepContext ctx{roi, px, centre, heading, pose_, spec_, state_.history, *fused_, fd.frame,
                      state_.global_step++};
      ++fd.steps;
      PredictorOutput out;
      try {
        out = predictor_.predict(ctx);
        validate_output(out, cfg_.roi_size, std::max(cfg_.max_queries, static_cast<int>(out.size())));
      } catch (const PredictorError& e) {
        ++fd.predictor_errors;
        diag_.errors.push_back("frame " + std::to_string(fd.frame) + ": " + to_string(e.kind()) + ": " + e.what());
        return;
      }
      if (hooks_.on_step) hooks_.on_step(ctx, out);
      Action action = decide(out, centre, cfg_);
      if (hooks_.perturb)
        for (auto& t : action.targets) t = hooks_.perturb(t);

      if (action.kind == ActionKind::kStop) {
        ++fd.stops;
        if (try_join(c.vertex)) ++fd.joins;
        endpoints.push_back({c.world, Provenance::kEndpoint, c.vertex});
        return;
      }
      if (action.kind == ActionKind::kMove) {
        const Vec2 target = action.targets.front();
        if (!detail::inside(target, spec_)) {
          ++fd.boundary_stops;
          ensure_vertex(c, tag);
          endpoints.push_back({c.world, Provenance::kEndpoint, c.vertex});
          return;
        }
        ++fd.moves;
        const int from = ensure_vertex(c, tag);
        const Vec2 w = detail::to_world(pose_, target, spec_);
        const int to = state_.world.add_vertex(w, tag);
        add_trace_edge(from, to);
        c = {w, c.provenance, to};
        continue;
      }
      ++fd.branches;
      const int from = ensure_vertex(c, tag);
      bool clipped = false;
      for (const Vec2& target : action.targets) {
        if (!detail::inside(target, spec_)) {
          clipped = true;
          continue;
        }
        const Vec2 w = detail::to_world(pose_, target, spec_);
        const int to = state_.world.add_vertex(w, state_.next_instance++);
        add_trace_edge(from, to);
        state_.candidates.push_back({w, Provenance::kBranch, to});
      }
      if (clipped) {
        ++fd.boundary_stops;
        endpoints.push_back({c.world, Provenance::kEndpoint, from});
      }
      return;
    }
  }

  AgentConfig cfg_;
  FusionConfig fusion_;
  Predictor& predictor_;
  AgentHooks hooks_;
  std::mt19937_64 rng_;
  AgentState state_;
  RunDiagnostics diag_;
  EgoPose pose_;
  GridSpec spec_;
  const BevGrid* fused_ = nullptr;
};

struct TraceResult {
  CenterlineGraph graph;
  RunDiagnostics diagnostics;
};

inline TraceResult trace_sequence(const std::vector<BevGrid>& frames, Predictor& predictor, const AgentConfig& cfg,
                                  const FusionConfig& fusion = {}) {
  TracerAgent agent(cfg, fusion, predictor);
  TraceResult r;
  r.graph = agent.trace_sequence(frames);
  r.diagnostics = agent.diagnostics();
  return r;
}

}  // namespace lanegraph
