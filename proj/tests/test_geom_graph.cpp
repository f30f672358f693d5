#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

#include "lanegraph/graph.hpp"
#include "oracles.hpp"

using namespace lanegraph;

TEST(Pose, IdentityPoseKeepsPoint) {
  const Vec2 e = world_to_ego(EgoPose(0, 0, 0), {3, 4});
  EXPECT_DOUBLE_EQ(e.x, 3);
  EXPECT_DOUBLE_EQ(e.y, 4);
}

TEST(Pose, RotatedPoseHandComputed) {
  const Vec2 e = world_to_ego(EgoPose(1, 0, std::numbers::pi / 2), {1, 2});
  EXPECT_NEAR(e.x, 2, 1e-12);
  EXPECT_NEAR(e.y, 0, 1e-12);
}

TEST(Pose, RoundTripRandomPairs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-100, 100), a(-4, 4);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const EgoPose pose(u(rng), u(rng), a(rng));
    const Vec2 p{u(rng), u(rng)};
    worst = std::max(worst, distance(ego_to_world(pose, world_to_ego(pose, p)), p));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Pixel, CentreConvention) {
  const auto px = ego_to_pixel({0, 0}, GridSpec{});
  EXPECT_DOUBLE_EQ(px.row, 100);
  EXPECT_DOUBLE_EQ(px.col, 100);
  EXPECT_TRUE(px.in_bounds);
}

TEST(Pixel, RightEdgeIsOutOfBounds) {
  const auto px = ego_to_pixel({25, 0}, GridSpec{});
  EXPECT_DOUBLE_EQ(px.col, 200);
  EXPECT_FALSE(px.in_bounds);
}

TEST(Pixel, DirectArithmetic) {
  const auto px = ego_to_pixel({1.0, -0.5}, GridSpec{});
  EXPECT_DOUBLE_EQ(px.row, 98);
  EXPECT_DOUBLE_EQ(px.col, 104);
  const Vec2 back = pixel_to_ego(px.row, px.col, GridSpec{});
  EXPECT_DOUBLE_EQ(back.x, 1.0);
  EXPECT_DOUBLE_EQ(back.y, -0.5);
}

TEST(Resample, SingleSegmentUniform) {
  CenterlineGraph g;
  g.add_vertex({0, 0});
  g.add_vertex({10, 0});
  g.add_edge(0, 1);
  const auto r = resample(g, 1.0);
  EXPECT_EQ(r.vertex_count(), 11);
  EXPECT_EQ(r.edge_count(), 10);
}

TEST(Resample, JunctionDegreeKept) {
  CenterlineGraph g;
  const int a = g.add_vertex({0, 0}), j = g.add_vertex({5, 0}), b = g.add_vertex({10, 3}), c = g.add_vertex({10, -3});
  g.add_edge(a, j);
  g.add_edge(j, b);
  g.add_edge(j, c);
  const auto r = resample(g, 0.5);
  EXPECT_EQ(r.degree(j), 3);
  int junctions = 0;
  for (int v = 0; v < r.vertex_count(); ++v) junctions += r.is_junction(v);
  EXPECT_EQ(junctions, 1);
}

TEST(Resample, LengthPreservedAndEdgesShort) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_polyline(rng, 30, 2.7);
    const auto r = resample(g, 0.25);
    double longest = 0;
    for (const auto& e : r.edges()) longest = std::max(longest, r.edge_length(e));
    EXPECT_LE(longest, 0.25 + 1e-12);
    EXPECT_NEAR(r.total_length(), g.total_length(), 1e-6);
  }
}

TEST(Resample, EmptyGraphStaysEmpty) { EXPECT_TRUE(resample(CenterlineGraph{}, 1.0).empty()); }

TEST(GeodesicBall, ZeroRadius) {
  std::mt19937_64 rng(1);
  const auto g = oracle::random_graph(rng, 20);
  EXPECT_EQ(geodesic_ball(g, 0, 0.0), std::vector<int>{0});
}

TEST(GeodesicBall, DirectedChainCount) {
  CenterlineGraph g;
  for (int i = 0; i < 10; ++i) g.add_vertex({double(i), 0});
  for (int i = 0; i + 1 < 10; ++i) g.add_edge(i, i + 1);
  EXPECT_EQ(geodesic_ball(g, 4, 3.5, Reach::kDirected), (std::vector<int>{4, 5, 6, 7}));
  EXPECT_EQ(geodesic_ball(g, 4, 3.5, Reach::kUndirected), (std::vector<int>{1, 2, 3, 4, 5, 6, 7}));
}

TEST(GeodesicBall, MatchesFloydWarshall) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = oracle::random_graph(rng, 50);
    for (Reach reach : {Reach::kDirected, Reach::kUndirected}) {
      const auto d = oracle::all_pairs(g, reach);
      for (int s = 0; s < g.vertex_count(); ++s)
        for (double eps : {5.0, 17.0, 60.0}) ASSERT_EQ(geodesic_ball(g, s, eps, reach), oracle::ball(d, s, eps));
    }
  }
}

TEST(Nearest, ExactVertex) {
  std::mt19937_64 rng(2);
  const auto g = oracle::random_graph(rng, 30);
  const auto r = nearest_vertex(g, g.vertex(5));
  EXPECT_EQ(r.index, 5);
  EXPECT_EQ(r.distance, 0.0);
}

TEST(Nearest, TieGoesToLowerIndex) {
  CenterlineGraph g;
  for (int i = 0; i < 10; ++i) g.add_vertex(i == 2 ? Vec2{-1, 0} : i == 7 ? Vec2{1, 0} : Vec2{50.0 + i, 50});
  EXPECT_EQ(nearest_vertex(g, {0, 0}).index, 2);
  PointIndex index(g.vertices(), 1.0);
  EXPECT_EQ(index.nearest({0, 0}).first, 2);
}

TEST(Nearest, IndexMatchesLinearScan) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-500, 500);
  std::vector<Vec2> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({u(rng) * 0.1, u(rng) * 0.1});
  pts.push_back({400, 400});  // far outlier so some queries leave the dense core
  CenterlineGraph g;
  for (Vec2 p : pts) g.add_vertex(p);
  PointIndex index(g.vertices(), 2.0);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const int expect = oracle::nearest(pts, p);
    ASSERT_EQ(nearest_vertex(g, p).index, expect);
    ASSERT_EQ(index.nearest(p).first, expect);
  }
}

TEST(Nearest, EmptyGraphThrows) { EXPECT_THROW(nearest_vertex(CenterlineGraph{}, {0, 0}), GraphError); }

TEST(GraphText, RoundTripIsExact) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_graph(rng, 40);
    EXPECT_EQ(graph_from_string(graph_to_string(g)), g);
  }
}

TEST(GraphText, RejectsGarbage) {
  EXPECT_THROW(graph_from_string("not a graph"), GraphError);
  EXPECT_THROW(graph_from_string("2 1\n0 0\n1 1\n0 5\n"), GraphError);
}

TEST(Components, WeakComponentsNumberedByFirstVertex) {
  CenterlineGraph g;
  for (int i = 0; i < 5; ++i) g.add_vertex({double(i), 0});
  g.add_edge(1, 0);
  g.add_edge(3, 4);
  EXPECT_EQ(weak_components(g), (std::vector<int>{0, 0, 1, 2, 2}));
}
