#include "pano/teacher.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "pano/dataio.hpp"
#include "pano/error.hpp"
#include "pano/rng.hpp"

namespace pano {

// ---- mock ----------------------------------------------------------------

MockTeacher::MockTeacher(AnalyticScene scene, MockTeacherOptions opts)
    : scene_(scene), opts_(opts), info_{"mock", scene.name(), "inverse_depth_relative"} {}

Raster MockTeacher::infer_one(const FaceQuery& q) const {
  const int w = q.intrinsics.w;
  if (q.rgb.height() != w || q.rgb.width() != w) throw InvalidInput("face image does not match intrinsics");
  Raster out(w, w, 1);
  for (int r = 0; r < w; ++r)
    for (int c = 0; c < w; ++c)
      out.at(r, c) = scene_.inverse_depth(camera_pixel_to_direction({c + 0.5, r + 0.5}, q.camera, q.intrinsics));
  if (opts_.scramble == Scramble::None) return out;

  const std::uint64_t key = opts_.per_call ? hash_string(q.key) : std::uint64_t(q.slot);
  std::mt19937_64 rng(derive_seed(opts_.seed, {key}));
  const double a = std::exp(uniform(rng, std::log(0.5), std::log(2.0)));
  if (opts_.scramble == Scramble::DisparityAffine) {
    const double b = uniform(rng, -0.5, 0.5);
    for (double& x : out.values()) x = a * x + b;
  } else {
    const double b = uniform(rng, 0.2, 1.0);
    for (double& x : out.values()) x = x > 0 ? 1.0 / (a / x + b) : 0.0;
  }
  return out;
}

std::vector<Raster> MockTeacher::infer(const std::vector<FaceQuery>& queries) {
  std::vector<Raster> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(infer_one(q));
  return out;
}

// ---- luminance -------------------------------------------------------------

LuminanceTeacher::LuminanceTeacher() : info_{"in-process", "luminance", "inverse_depth_relative"} {}

float LuminanceTeacher::luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<float>((0.299 * r + 0.587 * g + 0.114 * b) / 255.0);
}

std::vector<Raster> LuminanceTeacher::infer(const std::vector<FaceQuery>& queries) {
  std::vector<Raster> out;
  for (const auto& q : queries) {
    if (q.rgb.channels() != 3) throw InvalidInput("luminance teacher expects RGB faces");
    Raster d(q.rgb.height(), q.rgb.width(), 1);
    auto byte = [](double v) { return std::uint8_t(std::clamp(std::round(v), 0.0, 255.0)); };
    for (int r = 0; r < d.height(); ++r)
      for (int c = 0; c < d.width(); ++c)
        d.at(r, c) = luminance(byte(q.rgb.at(r, c, 0)), byte(q.rgb.at(r, c, 1)), byte(q.rgb.at(r, c, 2)));
    out.push_back(std::move(d));
  }
  return out;
}

// ---- bridge ----------------------------------------------------------------

BridgeTeacher::BridgeTeacher(BridgeOptions opts) : opts_(std::move(opts)) {
  // A dead child must surface as a BackendError, not a SIGPIPE.
  ::signal(SIGPIPE, SIG_IGN);
  if (opts_.command.empty()) throw BackendError("bridge command is empty");
  std::filesystem::create_directories(opts_.work_dir);

  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0) throw BackendError("pipe() failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw BackendError("pipe() failed");
  }
  pid_ = ::fork();
  if (pid_ < 0) throw BackendError("fork() failed");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", opts_.command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);

  try {
    const auto hello = nlohmann::json::parse(read_line());
    info_.tool = hello.at("tool").get<std::string>();
    info_.model = hello.at("model").get<std::string>();
    info_.output_space = hello.at("output_space").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    shutdown();
    throw BackendError(std::string("bridge sent a malformed health line: ") + e.what());
  } catch (...) {
    shutdown();
    throw;
  }
  if (info_.output_space != "inverse_depth_relative") {
    shutdown();
    throw BackendError("bridge output space '" + info_.output_space + "' is not inverse_depth_relative");
  }
}

BridgeTeacher::~BridgeTeacher() { shutdown(); }

void BridgeTeacher::shutdown() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // Closing stdin asks the bridge to exit; give it a moment before forcing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      ::usleep(20000);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void BridgeTeacher::send_line(const std::string& line) {
  const std::string data = line + '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw BackendError("bridge is not accepting requests (" + std::string(std::strerror(errno)) + ")");
    }
    off += std::size_t(n);
  }
}

std::string BridgeTeacher::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
  for (;;) {
    if (const auto nl = pending_.find('\n'); nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw BackendError("bridge timed out");
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, int(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) throw BackendError("bridge timed out");
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BackendError("bridge closed its output");
    pending_.append(buf, std::size_t(n));
  }
}

std::vector<Raster> BridgeTeacher::infer(const std::vector<FaceQuery>& queries) {
  if (to_child_ < 0) throw BackendError("bridge is shut down");
  std::map<std::string, std::size_t> slot_of;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    if (!slot_of.emplace(q.key, i).second) throw BackendError("duplicate in-flight request id " + q.key);
    std::string stem = q.key;
    for (char& c : stem)
      if (c == '/' || c == '\\' || c == ' ') c = '_';
    const auto png = opts_.work_dir / (stem + ".png");
    write_rgb8(png, q.rgb);
    send_line(nlohmann::json{{"id", q.key}, {"rgb", png.string()}, {"width", q.rgb.width()}, {"height", q.rgb.height()}}
                  .dump());
  }
  std::vector<Raster> out(queries.size());
  std::size_t remaining = queries.size();
  while (remaining > 0) {
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(read_line());
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed bridge response: ") + e.what());
    }
    if (!resp.contains("id") || !resp["id"].is_string())
      throw BackendError("bridge error: " + resp.value("msg", std::string("response without id")));
    const auto it = slot_of.find(resp["id"].get<std::string>());
    if (it == slot_of.end() || !out[it->second].empty()) throw BackendError("unexpected bridge response id");
    if (resp.value("status", "") != "ok")
      throw BackendError("bridge failed on " + it->first + ": " + resp.value("msg", std::string("unknown error")));
    Raster disp = read_pfm(resp.at("disparity").get<std::string>());
    const auto& q = queries[it->second];
    if (disp.height() != q.rgb.height() || disp.width() != q.rgb.width() || disp.channels() != 1)
      throw BackendError("bridge returned a disparity map of the wrong shape for " + it->first);
    out[it->second] = std::move(disp);
    --remaining;
  }
  return out;
}

// ---- factory ---------------------------------------------------------------

Scramble scramble_from_string(const std::string& s) {
  if (s == "none") return Scramble::None;
  if (s == "disparity_affine") return Scramble::DisparityAffine;
  if (s == "depth_affine") return Scramble::DepthAffine;
  throw InvalidInput("unknown scramble mode '" + s + "'");
}

std::unique_ptr<TeacherBackend> make_teacher(const std::string& spec, const std::filesystem::path& work_dir,
                                             MockTeacherOptions mock) {
  if (spec.rfind("mock:", 0) == 0) return std::make_unique<MockTeacher>(AnalyticScene::parse(spec.substr(5)), mock);
  if (spec == "luminance") return std::make_unique<LuminanceTeacher>();
  if (spec.rfind("bridge:", 0) == 0) return std::make_unique<BridgeTeacher>(BridgeOptions{spec.substr(7), work_dir});
  throw InvalidInput("teacher must be mock:<scene>, luminance or bridge:<command>");
}

}  // namespace pano
