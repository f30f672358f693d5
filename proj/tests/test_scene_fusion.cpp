#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include <unistd.h>

#include "lanegraph/scene_io.hpp"
#include "lanegraph/scene_sim.hpp"
#include "lanegraph/temporal_fusion.hpp"
#include "oracles.hpp"

using namespace lanegraph;
namespace fs = std::filesystem;

namespace {

BevGrid constant_grid(const EgoPose& pose, float v) {
  BevGrid g = BevGrid::zeros(GridSpec{}, pose, 1);
  g.centerline.fill(v);
  g.features[0].fill(v);
  return g;
}

CenterlineGraph line(Vec2 a, Vec2 b) {
  CenterlineGraph g;
  g.add_vertex(a);
  g.add_vertex(b);
  g.add_edge(0, 1);
  return g;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lanegraph_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Scene, StraightSingleLaneIsOnePolyline) {
  SceneConfig sc;
  sc.lateral_jitter = 0.0;
  const Scene s = generate_scene(sc);
  const auto comp = weak_components(s.ground_truth);
  EXPECT_EQ(*std::max_element(comp.begin(), comp.end()), 0);
  for (int v = 0; v < s.ground_truth.vertex_count(); ++v) {
    EXPECT_LE(s.ground_truth.in_degree(v), 1);
    EXPECT_LE(s.ground_truth.out_degree(v), 1);
  }
  ASSERT_EQ(s.poses.size(), 40u);
  const Vec2 d = s.poses.back().position() - s.poses.front().position();
  for (const auto& p : s.poses) EXPECT_NEAR(d.cross(p.position() - s.poses.front().position()), 0.0, 1e-9);
}

TEST(Scene, FourWayHasSplittingJunctions) {
  SceneConfig sc;
  sc.kind = SceneKind::kFourWay;
  sc.lanes = 2;
  const Scene s = generate_scene(sc);
  int splits = 0;
  for (int v = 0; v < s.ground_truth.vertex_count(); ++v) splits += s.ground_truth.out_degree(v) >= 2;
  EXPECT_GT(splits, 0);
}

TEST(Scene, SameSeedIsBitIdentical) {
  for (auto kind : {SceneKind::kCurve, SceneKind::kSplitMerge, SceneKind::kRandomComposite}) {
    SceneConfig sc;
    sc.kind = kind;
    sc.seed = 17;
    const Scene a = generate_scene(sc), b = generate_scene(sc);
    EXPECT_EQ(a.ground_truth, b.ground_truth);
    ASSERT_EQ(a.poses.size(), b.poses.size());
    for (std::size_t i = 0; i < a.poses.size(); ++i) {
      EXPECT_EQ(a.poses[i].x, b.poses[i].x);
      EXPECT_EQ(a.poses[i].yaw, b.poses[i].yaw);
    }
    NoiseModel noise;
    noise.amplitude = 0.2;
    noise.dropout = 0.1;
    const auto fa = render_frames(a, GridSpec{}, noise, 5), fb = render_frames(b, GridSpec{}, noise, 5);
    for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(fa[i].centerline.data(), fb[i].centerline.data());
  }
}

TEST(Scene, UnsatisfiableConfigThrows) {
  SceneConfig sc;
  sc.extent = 0.0;
  EXPECT_ANY_THROW(generate_scene(sc));
  sc = SceneConfig{};
  sc.lanes = 0;
  EXPECT_ANY_THROW(generate_scene(sc));
}

TEST(Rasterize, EmptyViewIsZero) {
  const auto g = rasterize_frame(line({500, 500}, {600, 500}), EgoPose(0, 0, 0), GridSpec{}, NoiseModel{});
  EXPECT_TRUE(g.centerline.all_equal(0.0f));
  EXPECT_TRUE(g.initial_vertex.all_equal(0.0f));
}

TEST(Rasterize, ArgmaxFollowsProjectedLane) {
  const GridSpec spec;
  const auto g = rasterize_frame(line({-40, 1.3}, {40, 1.3}), EgoPose(0, 0, 0), spec, NoiseModel{});
  const double row = ego_to_pixel({0, 1.3}, spec).row;
  for (int c = 0; c < spec.width; ++c) {
    int best = 0;
    for (int r = 1; r < spec.height; ++r)
      if (g.centerline.at(r, c) > g.centerline.at(best, c)) best = r;
    EXPECT_LE(std::abs(best - row), 1.0) << "col " << c;
  }
}

TEST(Rasterize, FullDropoutErasesLanes) {
  NoiseModel noise;
  noise.dropout = 1.0;
  const auto g = rasterize_frame(line({-40, 0}, {40, 0}), EgoPose(0, 0, 0), GridSpec{}, noise, 3);
  EXPECT_TRUE(g.centerline.all_equal(0.0f));
}

TEST(InitialVertex, CrossingLaneEntersOnce) {
  const auto pts = initial_vertex_truth(line({-40, 2}, {40, 2}), EgoPose(0, 0, 0), GridSpec{});
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].x, 0.0, 1e-9);  // upstream (left) boundary
}

TEST(InitialVertex, LaneStartingInsideReturnsStart) {
  const auto pts = initial_vertex_truth(line({-5, 2}, {40, 2}), EgoPose(0, 0, 0), GridSpec{});
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_NEAR(pts[0].x, 80.0, 1e-9);
  EXPECT_NEAR(pts[0].y, 108.0, 1e-9);
}

TEST(InitialVertex, FourWayMatchesDenseBoundaryScan) {
  SceneConfig sc;
  sc.kind = SceneKind::kFourWay;
  sc.lanes = 2;
  sc.seed = 4;
  const Scene s = generate_scene(sc);
  const GridSpec spec;
  const CenterlineGraph dense = resample(s.ground_truth, 0.01);
  for (std::size_t f = 0; f < s.poses.size(); f += 3) {
    const auto& pose = s.poses[f];
    int expected = 0;
    for (const auto& e : dense.edges())
      expected += !world_to_pixel(pose, dense.vertex(e.src), spec).in_bounds &&
                  world_to_pixel(pose, dense.vertex(e.dst), spec).in_bounds;
    for (int v = 0; v < s.ground_truth.vertex_count(); ++v)
      expected += s.ground_truth.in_degree(v) == 0 && world_to_pixel(pose, s.ground_truth.vertex(v), spec).in_bounds;
    EXPECT_EQ(static_cast<int>(initial_vertex_truth(s.ground_truth, pose, spec).size()), expected) << "frame " << f;
  }
}

// ---------------------------------------------------------------------------

TEST(Warp, IdentityPose) {
  SceneConfig sc;
  sc.kind = SceneKind::kCurve;
  const Scene s = generate_scene(sc);
  const auto frame = render_frames(s, GridSpec{}, NoiseModel{}, 1)[5];
  const auto w = warp_grid(frame, frame.pose);
  EXPECT_TRUE(w.mask.all_equal(1.0f));
  for (std::size_t i = 0; i < frame.centerline.size(); ++i)
    ASSERT_NEAR(w.centerline.data()[i], frame.centerline.data()[i], 1e-6);
}

TEST(Warp, ConstantGridStaysConstant) {
  const auto src = constant_grid(EgoPose(0, 0, 0), 1.0f);
  const auto w = warp_grid(src, EgoPose(2.5, 0, 0));  // 10 px
  long valid = 0;
  for (std::size_t i = 0; i < w.mask.size(); ++i)
    if (w.mask.data()[i] == 1.0f) {
      ++valid;
      ASSERT_NEAR(w.centerline.data()[i], 1.0f, 1e-6);
    }
  EXPECT_EQ(valid, 190L * 200);
}

TEST(Warp, DoubleWarpRoundTripOnSmoothGrid) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> shift(-5, 5), turn(-0.6, 0.6);
  for (int k = 0; k < 5; ++k) {
    BevGrid g = BevGrid::zeros(GridSpec{}, EgoPose(0, 0, 0), 0);
    g.centerline = oracle::smooth_random_raster(rng, 200, 2.0);
    EXPECT_LE(oracle::double_warp_error(g, EgoPose(shift(rng), shift(rng), turn(rng))), 0.02);
  }
}

TEST(Warp, DoubleWarpErrorShrinksWithSmoothness) {
  SceneConfig sc;
  sc.kind = SceneKind::kFourWay;
  sc.lanes = 2;
  const Scene s = generate_scene(sc);
  double prev = 1.0;
  for (double sigma : {1.5, 3.0, 6.0}) {
    NoiseModel noise;
    noise.falloff_sigma = sigma;
    const auto frame = rasterize_frame(s.ground_truth, s.poses[18], GridSpec{}, noise);
    const EgoPose other(frame.pose.x + 3.1, frame.pose.y - 1.7, frame.pose.yaw + 0.35);
    const double err = oracle::double_warp_error(frame, other);
    EXPECT_LT(err, prev) << "sigma " << sigma;
    prev = err;
  }
}

TEST(Fusion, TauZeroIsIdentity) {
  SceneConfig sc;
  const Scene s = generate_scene(sc);
  NoiseModel noise;
  noise.amplitude = 0.1;
  const auto frames = render_frames(s, GridSpec{}, noise, 2);
  FusionConfig fc;
  fc.tau = 0;
  const auto f = fuse_window(frames, 7, fc);
  EXPECT_EQ(f.centerline.data(), frames[7].centerline.data());
  EXPECT_EQ(f.features[0].data(), frames[7].features[0].data());
}

TEST(Fusion, IdenticalFramesAverageToThemselves) {
  const auto one = rasterize_frame(line({-40, 0}, {40, 3}), EgoPose(1, 2, 0.3), GridSpec{}, NoiseModel{});
  const std::vector<BevGrid> frames(5, one);
  FusionConfig fc;
  fc.tau = 2;
  const auto f = fuse_window(frames, 2, fc);
  for (std::size_t i = 0; i < f.centerline.size(); ++i) ASSERT_NEAR(f.centerline.data()[i], one.centerline.data()[i], 1e-6);
}

TEST(Fusion, PixelValidInTwoFramesAveragesTwo) {
  // Frame 0 is 30 m ahead, so the left edge of frame 1 is outside it.
  const std::vector<BevGrid> frames{constant_grid(EgoPose(30, 0, 0), 0.9f), constant_grid(EgoPose(0, 0, 0), 0.2f),
                                    constant_grid(EgoPose(0, 0, 0), 0.6f)};
  FusionConfig fc;
  const auto f = fuse_window(frames, 1, fc);
  EXPECT_NEAR(f.centerline.at(100, 10), (0.2 + 0.6) / 2, 1e-6);
  EXPECT_NEAR(f.centerline.at(100, 190), (0.9 + 0.2 + 0.6) / 3, 1e-6);
}

TEST(Fusion, EmptyFrameListThrows) { EXPECT_THROW(fuse_window({}, 0, FusionConfig{}), std::invalid_argument); }

TEST(WorldRaster, SingleFrameReprojects) {
  const auto frame = rasterize_frame(line({-40, 1}, {40, 1}), EgoPose(0, 0, 0), GridSpec{}, NoiseModel{});
  const auto ws = world_spec_covering({frame.pose}, frame.spec);
  const auto w = accumulate_world({frame}, ws);
  for (int r = 10; r < 190; r += 7)
    for (int c = 10; c < 190; c += 7) {
      const Vec2 world = pixel_to_world(frame.pose, r, c, frame.spec);
      const Vec2 px = ws.to_pixel(world);
      const int wr = static_cast<int>(std::lround(px.y)), wc = static_cast<int>(std::lround(px.x));
      ASSERT_NEAR(w.value.at(wr, wc), frame.centerline.at(r, c), 1e-5);
    }
}

TEST(WorldRaster, DisjointFramesDoNotMix) {
  const std::vector<BevGrid> frames{constant_grid(EgoPose(0, 0, 0), 0.3f), constant_grid(EgoPose(100, 0, 0), 0.7f)};
  const auto ws = world_spec_covering({frames[0].pose, frames[1].pose}, GridSpec{});
  const auto w = accumulate_world(frames, ws);
  auto at = [&](Vec2 p) {
    const Vec2 px = ws.to_pixel(p);
    return std::pair{w.value.at(std::lround(px.y), std::lround(px.x)), w.weight.at(std::lround(px.y), std::lround(px.x))};
  };
  EXPECT_NEAR(at({0, 0}).first, 0.3f, 1e-6);
  EXPECT_NEAR(at({100, 0}).first, 0.7f, 1e-6);
  EXPECT_EQ(at({50, 0}).second, 0.0f);
  EXPECT_EQ(at({50, 0}).first, 0.0f);
}

TEST(WorldRaster, OverlapIsMean) {
  const std::vector<BevGrid> frames{constant_grid(EgoPose(0, 0, 0), 0.2f), constant_grid(EgoPose(0, 0, 0), 0.6f)};
  const auto ws = world_spec_covering({frames[0].pose}, GridSpec{});
  const auto w = accumulate_world(frames, ws);
  const Vec2 px = ws.to_pixel({0, 0});
  EXPECT_NEAR(w.value.at(std::lround(px.y), std::lround(px.x)), 0.4f, 1e-6);
}

// ---------------------------------------------------------------------------

TEST(SceneIo, RoundTripIsBitExact) {
  SceneConfig sc;
  sc.kind = SceneKind::kSplitMerge;
  sc.frames = 6;
  const Scene s = generate_scene(sc);
  NoiseModel noise;
  noise.amplitude = 0.1;
  const auto frames = render_frames(s, GridSpec{}, noise, 9);
  const fs::path dir = scratch_dir("sceneio");
  write_scene(dir, frames, &s.ground_truth, {{"note", "test"}});
  const SceneData d = load_scene(dir);
  ASSERT_TRUE(d.has_ground_truth);
  EXPECT_EQ(d.ground_truth, s.ground_truth);
  ASSERT_EQ(d.frames.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(d.frames[i].centerline.data(), frames[i].centerline.data());
    EXPECT_EQ(d.frames[i].initial_vertex.data(), frames[i].initial_vertex.data());
    ASSERT_EQ(d.frames[i].features.size(), frames[i].features.size());
    for (std::size_t k = 0; k < frames[i].features.size(); ++k)
      EXPECT_EQ(d.frames[i].features[k].data(), frames[i].features[k].data());
    EXPECT_EQ(d.poses[i].x, frames[i].pose.x);
    EXPECT_EQ(d.poses[i].yaw, frames[i].pose.yaw);
  }
  fs::remove_all(dir);
}

TEST(SceneIo, MissingDirectoryIsAnError) { EXPECT_THROW(load_scene("/nonexistent/scene"), SceneIoError); }
