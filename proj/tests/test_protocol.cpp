#include <gtest/gtest.h>

#include <random>

#include "lanegraph/external_predictor.hpp"
#include "lanegraph/scene_sim.hpp"
#include "lanegraph/tracer_agent.hpp"

using namespace lanegraph;
using Kind = PredictorError::Kind;

namespace {

constexpr int kChannels = 3;
constexpr int kSize = 16;

std::string echo(const std::string& args = "") { return std::string(ECHO_PREDICTOR_PATH) + " " + args; }

ExternalConfig config(const std::string& command, double timeout = 5.0) {
  ExternalConfig c;
  c.command = command;
  c.timeout = timeout;
  return c;
}

RoiTensor random_roi(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-7.5f, 7.5f);
  RoiTensor roi{kChannels, kSize, std::vector<float>(kChannels * kSize * kSize)};
  for (auto& v : roi.data) v = u(rng);
  return roi;
}

// What the echo server must answer for a given ROI.
PredictedVertex expected_reply(const RoiTensor& roi) {
  std::string raw;
  for (float v : roi.data) append_f32_le(raw, v);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : raw) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return {{roi.data.front(), roi.data.back()}, static_cast<double>(h % 1001) / 1000.0};
}

Kind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const PredictorError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no PredictorError thrown";
  return Kind::kProcess;
}

}  // namespace

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64::encode("Man"), "TWFu");
  EXPECT_EQ(base64::encode("Ma"), "TWE=");
  EXPECT_EQ(base64::encode("M"), "TQ==");
  EXPECT_EQ(base64::decode("TWFu").value(), "Man");
  EXPECT_FALSE(base64::decode("T!Fu").has_value());
  EXPECT_FALSE(base64::decode("TWF").has_value());
}

TEST(Base64, TensorRoundTrip) {
  std::mt19937_64 rng(1);
  const auto roi = random_roi(rng);
  EXPECT_EQ(decode_tensor(encode_tensor(roi.data)).value(), roi.data);
}

TEST(Protocol, EchoRoundTrip) {
  ExternalPredictor p(config(echo()), kChannels, kSize);
  p.start();
  std::mt19937_64 rng(2);
  int mismatches = 0;
  for (long step = 0; step < 200; ++step) {
    const auto roi = random_roi(rng);
    const auto out = p.predict_roi(roi, step);
    const auto want = expected_reply(roi);
    mismatches += out.size() != 1 || out[0].offset.x != want.offset.x || out[0].offset.y != want.offset.y ||
                  out[0].probability != want.probability;
  }
  EXPECT_EQ(mismatches, 0);
  EXPECT_EQ(p.restarts(), 0);
}

TEST(Protocol, ProbabilityAboveOneIsRejected) {
  EXPECT_EQ(error_kind([] { validate_output({{{1, 1}, 1.2}}, 64, 8); }), Kind::kInvalidOutput);
  EXPECT_EQ(error_kind([] { validate_output({{{40, 1}, 0.9}}, 64, 8); }), Kind::kInvalidOutput);
}

TEST(Protocol, HangIsTimeoutThenRestarts) {
  ExternalPredictor p(config(echo("--fault hang --fault-at 2"), 0.3), kChannels, kSize);
  std::mt19937_64 rng(3);
  p.predict_roi(random_roi(rng), 0);
  EXPECT_EQ(error_kind([&] { p.predict_roi(random_roi(rng), 1); }), Kind::kTimeout);
  EXPECT_FALSE(p.running());
  EXPECT_EQ(p.predict_roi(random_roi(rng), 2).size(), 1u);
  EXPECT_EQ(p.restarts(), 1);
}

TEST(Protocol, MalformedReply) {
  ExternalPredictor p(config(echo("--fault malformed --fault-at 1")), kChannels, kSize);
  std::mt19937_64 rng(4);
  EXPECT_EQ(error_kind([&] { p.predict_roi(random_roi(rng), 0); }), Kind::kMalformed);
}

TEST(Protocol, WrongStepIsMalformed) {
  ExternalPredictor p(config(echo("--fault bad-step --fault-at 1")), kChannels, kSize);
  std::mt19937_64 rng(5);
  EXPECT_EQ(error_kind([&] { p.predict_roi(random_roi(rng), 7); }), Kind::kMalformed);
}

TEST(Protocol, ChildExitIsReported) {
  ExternalPredictor p(config(echo("--fault exit --fault-at 1")), kChannels, kSize);
  std::mt19937_64 rng(6);
  const Kind k = error_kind([&] { p.predict_roi(random_roi(rng), 0); });
  EXPECT_TRUE(k == Kind::kProcess || k == Kind::kMalformed) << to_string(k);
  EXPECT_FALSE(p.running());
}

TEST(Protocol, HandshakeErrorsAreDistinct) {
  ExternalPredictor bad_hello(config(echo("--fault bad-hello")), kChannels, kSize);
  EXPECT_EQ(error_kind([&] { bad_hello.start(); }), Kind::kMalformed);
  ExternalPredictor wrong_size(config(echo("--size 32")), kChannels, kSize);
  EXPECT_EQ(error_kind([&] { wrong_size.start(); }), Kind::kDimensionMismatch);
  ExternalPredictor missing(config("/nonexistent/predictor"), kChannels, kSize);
  try {
    missing.start();
    ADD_FAILURE();
  } catch (const PredictorError& e) {
    EXPECT_EQ(e.kind(), Kind::kProcess);
    EXPECT_NE(std::string(e.what()).find("127"), std::string::npos);
  }
}

TEST(Protocol, RoiShapeMismatchIsDimensionError) {
  ExternalPredictor p(config(echo()), kChannels, kSize);
  RoiTensor roi{kChannels, 8, std::vector<float>(kChannels * 64)};
  EXPECT_EQ(error_kind([&] { p.predict_roi(roi, 0); }), Kind::kDimensionMismatch);
}

TEST(Protocol, FaultsEndInstancesNotTheRun) {
  SceneConfig sc;
  sc.kind = SceneKind::kFourWay;
  sc.lanes = 2;
  sc.frames = 3;
  const Scene s = generate_scene(sc);
  const auto frames = render_frames(s, GridSpec{}, NoiseModel{}, 1);
  AgentConfig cfg;
  for (const char* fault : {"hang", "malformed"}) {
    ExternalConfig ec = config(echo(std::string("--stop --fault ") + fault + " --fault-at 2"), 0.3);
    ExternalPredictor p(ec, static_cast<int>(frames[0].features.size()) + 1, cfg.roi_size);
    TracerAgent agent(cfg, FusionConfig{}, p);
    agent.trace_sequence(frames);
    const auto& d = agent.diagnostics();
    ASSERT_EQ(d.frames.size(), frames.size()) << fault;
    int errors = 0, instances = 0;
    for (const auto& f : d.frames) {
      errors += f.predictor_errors;
      instances += f.instances;
    }
    EXPECT_GE(errors, 1) << fault;
    EXPECT_GT(instances, errors) << fault;
    EXPECT_GE(p.restarts(), 1) << fault;
  }
}
