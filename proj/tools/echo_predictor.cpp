// Test server for the external predictor protocol. For every request it
// answers with one vertex taken from the payload itself: x is the first float,
// y the last, p is derived from a hash of the whole payload. Fault modes make
// it misbehave on a chosen request.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "lanegraph/external_predictor.hpp"

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void reply(const nlohmann::json& j) { std::cout << j.dump() << '\n' << std::flush; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Echo predictor for protocol tests"};
  std::string fault = "none";
  long fault_at = 0;
  int channels = -1, size = -1;
  bool stop = false;
  app.add_option("--fault", fault, "none, malformed, hang, exit, bad-step, bad-hello")
      ->check(CLI::IsMember({"none", "malformed", "hang", "exit", "bad-step", "bad-hello"}));
  app.add_option("--fault-at", fault_at, "1-based request number that misbehaves (0: every request)");
  app.add_option("--channels", channels, "channels to claim in the handshake (default: echo)");
  app.add_option("--size", size, "ROI size to claim in the handshake (default: echo)");
  app.add_flag("--stop", stop, "answer every request with no vertices");
  CLI11_PARSE(app, argc, argv);

  std::ios::sync_with_stdio(false);
  long requests = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      return 2;
    }
    const std::string type = req.value("type", "");
    if (type == "hello") {
      if (fault == "bad-hello") {
        reply({{"type", "greeting"}});
        continue;
      }
      reply({{"type", "hello"},
             {"protocol", lanegraph::kProtocolVersion},
             {"channels", channels >= 0 ? channels : req.value("channels", 0)},
             {"height", size >= 0 ? size : req.value("height", 0)},
             {"width", size >= 0 ? size : req.value("width", 0)}});
      continue;
    }
    if (type != "predict") return 2;
    ++requests;
    const bool misbehave = fault != "none" && (fault_at == 0 || requests == fault_at);
    if (misbehave && fault == "hang") {
      std::this_thread::sleep_for(std::chrono::hours(1));
    }
    if (misbehave && fault == "exit") return 3;
    if (misbehave && fault == "malformed") {
      std::cout << "{\"type\": \"result\", \"step\": " << std::flush;
      std::cout << "oops\n" << std::flush;
      continue;
    }
    const long step = req.value("step", -1L);
    const auto raw = lanegraph::base64::decode(req.value("payload", ""));
    const long expected = static_cast<long>(req.value("c", 0)) * req.value("h", 0) * req.value("w", 0) * 4;
    nlohmann::json vertices = nlohmann::json::array();
    if (raw && static_cast<long>(raw->size()) == expected && expected > 0 && !stop) {
      const float first = lanegraph::read_f32_le(raw->data());
      const float last = lanegraph::read_f32_le(raw->data() + raw->size() - 4);
      const double p = static_cast<double>(fnv1a(*raw) % 1001) / 1000.0;
      vertices.push_back({{"x", first}, {"y", last}, {"p", p}});
    } else if (!raw || static_cast<long>(raw->size()) != expected) {
      reply({{"type", "error"}, {"step", step}, {"message", "payload size mismatch"}});
      continue;
    }
    reply({{"type", "result"}, {"step", misbehave && fault == "bad-step" ? step + 1 : step}, {"vertices", vertices}});
  }
  return 0;
}
