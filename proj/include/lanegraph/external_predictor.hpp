#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lanegraph/predictor.hpp"
#include "lanegraph/raster.hpp"

extern char** environ;

namespace lanegraph {

// Line-delimited JSON over the child's stdin/stdout.
//   -> {"type":"hello","protocol":1,"channels":C,"height":H,"width":W}
//   <- {"type":"hello","protocol":1,"channels":C,"height":H,"width":W}
//   -> {"type":"predict","run":R,"step":S,"c":C,"h":H,"w":W,
//       "threshold":T,"max_queries":N,"payload":"<base64 float32 LE>"}
//   <- {"type":"result","step":S,"vertices":[{"x":..,"y":..,"p":..},...]}
// Vertex x/y are offsets from the ROI centre pixel (x=col, y=row).

inline constexpr int kProtocolVersion = 1;

namespace base64 {

inline constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(std::string_view in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (std::uint8_t(in[i]) << 16) | (std::uint8_t(in[i + 1]) << 8) | std::uint8_t(in[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  if (i < in.size()) {
    std::uint32_t v = std::uint8_t(in[i]) << 16;
    if (i + 1 < in.size()) v |= std::uint8_t(in[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < in.size() ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

/// Returns nullopt on characters outside the alphabet or bad padding.
inline std::optional<std::string> decode(std::string_view in) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (in.size() % 4 != 0) return std::nullopt;
  std::string out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      if (in[i + k] == '=' && i + 4 == in.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) return std::nullopt;
      v[k] = value(in[i + k]);
      if (v[k] < 0) return std::nullopt;
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<char>((w >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((w >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(w & 0xff));
  }
  return out;
}

}  // namespace base64

inline std::string encode_tensor(const std::vector<float>& data) {
  std::string raw;
  raw.reserve(data.size() * 4);
  for (float v : data) append_f32_le(raw, v);
  return base64::encode(raw);
}

inline std::optional<std::vector<float>> decode_tensor(std::string_view text) {
  const auto raw = base64::decode(text);
  if (!raw || raw->size() % 4 != 0) return std::nullopt;
  std::vector<float> out(raw->size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_f32_le(raw->data() + 4 * i);
  return out;
}

struct ExternalConfig {
  std::string command;        // run through /bin/sh -c
  double timeout = 5.0;       // s, per request
  double valid_threshold = 0.5;
  int max_queries = 8;
  std::string run_id = "run";
  int max_restarts = 100;
};

/// Predictor backed by a child process. Timeouts and malformed replies kill
/// the child; the next request starts a fresh one.
class ExternalPredictor : public Predictor {
 public:
  ExternalPredictor(ExternalConfig cfg, int channels, int roi_size)
      : cfg_(std::move(cfg)), channels_(channels), roi_size_(roi_size) {}
  ~ExternalPredictor() override { stop(); }

  ExternalPredictor(const ExternalPredictor&) = delete;
  ExternalPredictor& operator=(const ExternalPredictor&) = delete;

  std::string name() const override { return "external"; }
  int restarts() const { return std::max(0, launches_ - 1); }
  bool running() const { return pid_ > 0; }

  /// Spawns the child and performs the handshake.
  void start() {
    using K = PredictorError::Kind;
    stop();
    if (launches_ > cfg_.max_restarts) throw PredictorError(K::kProcess, "predictor restart limit reached");
    ++launches_;
    ::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw PredictorError(K::kProcess, std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw PredictorError(K::kProcess, std::string("pipe: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    // Own process group, so a kill also reaches whatever the shell started.
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    const char* argv[] = {"sh", "-c", cfg_.command.c_str(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, &attr, const_cast<char* const*>(argv), environ);
    posix_spawnattr_destroy(&attr);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      throw PredictorError(K::kProcess, std::string("cannot spawn predictor: ") + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    buffer_.clear();

    const nlohmann::json hello = {{"type", "hello"},   {"protocol", kProtocolVersion}, {"channels", channels_},
                                  {"height", roi_size_}, {"width", roi_size_}};
    const auto deadline = now() + timeout();
    nlohmann::json reply;
    try {
      send(hello.dump(), deadline);
      reply = receive(deadline);
    } catch (const PredictorError& e) {
      fail();
      std::string why = std::string("handshake failed: ") + e.what();
      if (last_status_ && WIFEXITED(*last_status_)) {
        const int code = WEXITSTATUS(*last_status_);
        why += " (exit status " + std::to_string(code) + (code == 127 ? ": command not found)" : ")");
      }
      throw PredictorError(e.kind(), why);
    }
    if (reply.value("type", "") != "hello" || reply.value("protocol", -1) != kProtocolVersion) {
      fail();
      throw PredictorError(K::kMalformed, "handshake reply is not a protocol " + std::to_string(kProtocolVersion) +
                                              " hello");
    }
    if (reply.value("channels", -1) != channels_ || reply.value("height", -1) != roi_size_ ||
        reply.value("width", -1) != roi_size_) {
      fail();
      throw PredictorError(K::kDimensionMismatch, "predictor expects different ROI dimensions");
    }
  }

  PredictorOutput predict(const StepContext& ctx) override { return predict_roi(ctx.roi, ctx.step); }

  PredictorOutput predict_roi(const RoiTensor& roi, long step) {
    using K = PredictorError::Kind;
    if (roi.channels != channels_ || roi.size != roi_size_)
      throw PredictorError(K::kDimensionMismatch, "ROI does not match the negotiated dimensions");
    if (!running()) start();
    const nlohmann::json req = {{"type", "predict"},
                                {"run", cfg_.run_id},
                                {"step", step},
                                {"c", roi.channels},
                                {"h", roi.size},
                                {"w", roi.size},
                                {"threshold", cfg_.valid_threshold},
                                {"max_queries", cfg_.max_queries},
                                {"payload", encode_tensor(roi.data)}};
    const auto deadline = now() + timeout();
    nlohmann::json reply;
    try {
      send(req.dump(), deadline);
      reply = receive(deadline);
    } catch (const PredictorError&) {
      fail();
      throw;
    }
    PredictorOutput out;
    try {
      if (reply.at("type").get<std::string>() != "result") throw PredictorError(K::kMalformed, "reply is not a result");
      if (reply.at("step").get<long>() != step)
        throw PredictorError(K::kMalformed, "reply step " + reply.at("step").dump() + " for request " +
                                                std::to_string(step));
      for (const auto& v : reply.at("vertices"))
        out.push_back({{v.at("x").get<double>(), v.at("y").get<double>()}, v.at("p").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      fail();
      throw PredictorError(K::kMalformed, std::string("bad result: ") + e.what());
    } catch (const PredictorError&) {
      fail();
      throw;
    }
    validate_output(out, roi_size_, cfg_.max_queries);
    return out;
  }

  /// Terminates the child, if any.
  void stop() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
      // Closing stdin lets a well-behaved child exit; anything else is killed.
      int status = 0;
      bool reaped = false;
      for (int i = 0; i < 20 && !reaped; ++i) {
        reaped = ::waitpid(pid_, &status, WNOHANG) == pid_;
        if (!reaped) ::usleep(1000);
      }
      ::kill(-pid_, SIGKILL);
      if (!reaped) ::waitpid(pid_, &status, 0);
      last_status_ = status;
      pid_ = -1;
    }
  }

 private:
  using Clock = std::chrono::steady_clock;
  static Clock::time_point now() { return Clock::now(); }
  Clock::duration timeout() const {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg_.timeout));
  }
  static int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now()).count();
    return static_cast<int>(std::max<long long>(0, left));
  }

  // Gives an exiting child a moment to be reaped with its real status.
  void fail() {
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          last_status_ = status;
          ::kill(-pid_, SIGKILL);
          pid_ = -1;
          break;
        }
        ::usleep(1000);
      }
      if (pid_ > 0) ::kill(-pid_, SIGKILL);
    }
    stop();
  }

  void send(const std::string& line, Clock::time_point deadline) {
    using K = PredictorError::Kind;
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
      if (n > 0) {
        off += static_cast<std::size_t>(n);
        continue;
      }
      if (n < 0 && errno == EINTR) continue;
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        pollfd p{to_child_, POLLOUT, 0};
        const int ms = remaining_ms(deadline);
        if (ms == 0 || ::poll(&p, 1, ms) == 0) throw PredictorError(K::kTimeout, "timed out writing request");
        continue;
      }
      throw PredictorError(K::kProcess, "predictor closed its input");
    }
  }

  nlohmann::json receive(Clock::time_point deadline) {
    using K = PredictorError::Kind;
    while (true) {
      const auto eol = buffer_.find('\n');
      if (eol != std::string::npos) {
        const std::string line = buffer_.substr(0, eol);
        buffer_.erase(0, eol + 1);
        try {
          return nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
          throw PredictorError(K::kMalformed, "reply is not JSON");
        }
      }
      pollfd p{from_child_, POLLIN, 0};
      const int ms = remaining_ms(deadline);
      const int ready = ms == 0 ? 0 : ::poll(&p, 1, ms);
      if (ready < 0 && errno == EINTR) continue;
      if (ready <= 0) throw PredictorError(K::kTimeout, "no reply within " + std::to_string(cfg_.timeout) + " s");
      char chunk[65536];
      const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw PredictorError(K::kProcess, "predictor exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  ExternalConfig cfg_;
  int channels_;
  int roi_size_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  int launches_ = 0;
  std::optional<int> last_status_;
  std::string buffer_;
};

}  // namespace lanegraph
