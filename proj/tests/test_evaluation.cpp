#include <gtest/gtest.h>

#include <random>

#include "lanegraph/baseline_vectorizer.hpp"
#include "lanegraph/evaluation.hpp"
#include "lanegraph/scene_sim.hpp"
#include "oracles.hpp"

using namespace lanegraph;

namespace {

// Scores raw graphs: unit resolution and a spacing that never subdivides.
MetricConfig raw_config(double delta = 3.0, double eps = 15.0) {
  MetricConfig c;
  c.delta = delta;
  c.epsilon = eps;
  c.resolution = 1.0;
  c.spacing = 1e9;
  return c;
}

void expect_all(const MetricReport& r, double v) {
  for (double s : {r.pixel.precision, r.pixel.recall, r.pixel.f1, r.topology.precision, r.topology.recall,
                   r.topology.f1})
    EXPECT_EQ(s, v);
}

CenterlineGraph line(Vec2 a, Vec2 b) {
  CenterlineGraph g;
  g.add_vertex(a);
  g.add_vertex(b);
  g.add_edge(0, 1);
  return g;
}

}  // namespace

TEST(Metric, IdentityScoresOne) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10; ++i) {
    const auto g = oracle::random_graph(rng, 15, 10.0);
    expect_all(evaluate(g, g, MetricConfig{}), 1.0);
  }
}

TEST(Metric, EmptyPredictionScoresZero) {
  std::mt19937_64 rng(4);
  const auto g = oracle::random_graph(rng, 15, 10.0);
  expect_all(evaluate(CenterlineGraph{}, g, MetricConfig{}), 0.0);
  expect_all(evaluate(g, CenterlineGraph{}, MetricConfig{}), 0.0);
}

TEST(Metric, TranslatedByFivePixelsScoresZero) {
  const auto gt = line({0, 0}, {100, 0});
  const auto pred = line({0, 5}, {100, 5});
  MetricConfig c = raw_config();
  c.spacing = 1.0;
  const auto gp = resample(gt, 1.0), pp = resample(pred, 1.0);
  double closest = 1e9;
  for (Vec2 a : gp.vertices())
    for (Vec2 b : pp.vertices()) closest = std::min(closest, distance(a, b));
  ASSERT_GE(closest, 5.0);
  expect_all(evaluate(pred, gt, c), 0.0);
}

TEST(Metric, HalfCoverageMatchesQuadraticScan) {
  const auto gt = line({0, 0}, {100, 0});
  const auto pred = line({0, 0}, {50, 0});
  MetricConfig c = raw_config();
  c.spacing = 1.0;
  const auto r = evaluate(pred, gt, c);
  const auto ref = oracle::pixel(resample(pred, 1.0), resample(gt, 1.0), c.delta);
  EXPECT_EQ(r.pixel.precision, 1.0);
  EXPECT_NEAR(r.pixel.recall, 0.5, 0.04);
  EXPECT_DOUBLE_EQ(r.pixel.precision, ref.precision);
  EXPECT_DOUBLE_EQ(r.pixel.recall, ref.recall);
}

TEST(Metric, BrokenJunctionLowersTopologyRecall) {
  // A crossing of two roads; the prediction has the same pixels but the
  // junction edges are removed so reach through the junction is lost.
  CenterlineGraph gt;
  const int c = gt.add_vertex({0, 0});
  const int w = gt.add_vertex({-40, 0}), e = gt.add_vertex({40, 0}), n = gt.add_vertex({0, 40}),
            s = gt.add_vertex({0, -40});
  gt.add_edge(w, c);
  gt.add_edge(c, e);
  gt.add_edge(s, c);
  gt.add_edge(c, n);
  CenterlineGraph broken;
  for (Vec2 p : gt.vertices()) broken.add_vertex(p);
  broken.add_edge(w, c);
  // c->e, s->c, c->n removed; add short stubs so every pixel is still covered
  const int e2 = broken.add_vertex({2, 0}), s2 = broken.add_vertex({0, -2}), n2 = broken.add_vertex({0, 2});
  broken.add_edge(e2, e);
  broken.add_edge(s, s2);
  broken.add_edge(n2, n);
  MetricConfig cfg = raw_config(3.0, 30.0);
  cfg.spacing = 1.0;
  const auto r = evaluate(broken, gt, cfg);
  EXPECT_LT(r.topology.recall, r.pixel.recall);
  const auto gp = resample(gt, 1.0), bp = resample(broken, 1.0);
  const auto ref = oracle::topology(bp, gp, cfg.delta, cfg.epsilon, cfg.reach);
  EXPECT_NEAR(r.topology.recall, ref.recall, 1e-12);
  EXPECT_NEAR(r.topology.precision, ref.precision, 1e-12);
}

TEST(Metric, MatchesBruteForceOnRandomGraphs) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto gt = oracle::random_graph(rng, 30);
    const auto pred = oracle::random_graph(rng, 30);
    for (Reach reach : {Reach::kUndirected, Reach::kDirected}) {
      MetricConfig c = raw_config(4.0, 20.0);
      c.reach = reach;
      const auto r = evaluate(pred, gt, c);
      const auto px = oracle::pixel(pred, gt, c.delta);
      const auto tp = oracle::topology(pred, gt, c.delta, c.epsilon, reach);
      EXPECT_NEAR(r.pixel.precision, px.precision, 1e-12);
      EXPECT_NEAR(r.pixel.recall, px.recall, 1e-12);
      EXPECT_NEAR(r.pixel.f1, px.f1, 1e-12);
      EXPECT_NEAR(r.topology.precision, tp.precision, 1e-12);
      EXPECT_NEAR(r.topology.recall, tp.recall, 1e-12);
      EXPECT_NEAR(r.topology.f1, tp.f1, 1e-12);
    }
  }
}

TEST(Metric, WorkersDoNotChangeScores) {
  std::mt19937_64 rng(8);
  const auto gt = oracle::random_graph(rng, 30, 15.0);
  const auto pred = oracle::random_graph(rng, 30, 15.0);
  MetricConfig one;
  MetricConfig four;
  four.workers = 4;
  const auto a = evaluate(pred, gt, one), b = evaluate(pred, gt, four);
  EXPECT_EQ(a.topology.f1, b.topology.f1);
  EXPECT_EQ(a.pixel.f1, b.pixel.f1);
}

TEST(Metric, RejectsBadConfig) {
  MetricConfig c;
  c.delta = 0;
  EXPECT_THROW(evaluate(CenterlineGraph{}, CenterlineGraph{}, c), std::invalid_argument);
}

TEST(Metric, ResultRowsAndMean) {
  MetricReport a, b;
  a.pixel = {1, 0.5, 2.0 / 3};
  b.pixel = {0.5, 0.5, 0.5};
  const auto m = mean_report({a, b});
  EXPECT_DOUBLE_EQ(m.pixel.precision, 0.75);
  EXPECT_EQ(report_row("x", a).rfind("x,1.000000,0.500000", 0), 0u);
}

// ---------------------------------------------------------------------------

TEST(Skeleton, BarCollapsesToMedialAxis) {
  Mask m(20, 60);
  for (int r = 8; r <= 12; ++r)
    for (int c = 5; c < 55; ++c) m.set(r, c, true);
  const Mask s = skeletonize(m);
  ASSERT_GT(s.count(), 0);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 60; ++c)
      if (s.get(r, c)) {
        EXPECT_LE(std::abs(r - 10), 1) << "row " << r << " col " << c;
      }
}

TEST(Skeleton, ThinLineUnchanged) {
  Mask m(10, 30);
  for (int c = 3; c < 27; ++c) m.set(5, c, true);
  const Mask s = skeletonize(m);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 30; ++c) EXPECT_EQ(s.get(r, c), m.get(r, c));
}

TEST(Skeleton, EmptyMaskStaysEmpty) { EXPECT_EQ(skeletonize(Mask(10, 10)).count(), 0); }

TEST(SkeletonGraph, StraightLineIsOneEdge) {
  Mask m(10, 30);
  for (int c = 3; c < 27; ++c) m.set(5, c, true);
  const auto g = skeleton_to_graph(m);
  EXPECT_EQ(g.vertex_count(), 2);
  EXPECT_EQ(g.edge_count(), 1);
}

TEST(SkeletonGraph, PlusSignHasFiveVertices) {
  Mask m(31, 31);
  for (int i = 3; i < 28; ++i) {
    m.set(15, i, true);
    m.set(i, 15, true);
  }
  const auto g = skeleton_to_graph(m);
  EXPECT_EQ(g.vertex_count(), 5);
  EXPECT_EQ(g.edge_count(), 4);
}

TEST(Baseline, NoiselessScenesScoreHigh) {
  for (auto kind : {SceneKind::kStraight, SceneKind::kCurve}) {
    SceneConfig sc;
    sc.kind = kind;
    sc.lanes = 2;
    sc.seed = 3;
    const Scene scene = generate_scene(sc);
    const GridSpec spec;
    const auto frames = render_frames(scene, spec, NoiseModel{}, 1);
    const auto pred = baseline_pipeline(frames, VectorizeConfig{});
    const auto gt = clip_to_footprint(scene.ground_truth, scene.poses, spec, 0.25);
    EXPECT_GE(evaluate(pred, gt, MetricConfig{}).pixel.f1, 0.95) << to_string(kind);
  }
}
