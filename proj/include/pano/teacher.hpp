#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pano/geometry.hpp"
#include "pano/raster.hpp"
#include "pano/scene.hpp"

namespace pano {

/// One perspective face sent to a teacher.
struct FaceQuery {
  /// Unique per query and stable across reruns, e.g. "<sample>/<seed>/F".
  std::string key;
  /// 3-channel face image, values 0..255.
  Raster rgb;
  /// Camera-to-world orientation in the frame of the unrotated ERP image, and the
  /// face intrinsics. Real models ignore both; analytic backends trace rays with them.
  Rotation camera;
  CubeIntrinsics intrinsics;
  /// Position of the face within its set (cube face index or patch index).
  int slot = 0;
};

struct TeacherInfo {
  std::string tool;
  std::string model;
  std::string output_space = "inverse_depth_relative";

  nlohmann::json to_json() const {
    return {{"tool", tool}, {"model", model}, {"output_space", output_space}};
  }
};

/// Frozen perspective depth model: face RGB in, relative inverse depth out (same shape).
class TeacherBackend {
 public:
  virtual ~TeacherBackend() = default;
  virtual const TeacherInfo& info() const = 0;
  /// Result i answers queries[i]; implementations may evaluate in any order.
  virtual std::vector<Raster> infer(const std::vector<FaceQuery>& queries) = 0;
};

/// How the mock teacher corrupts its exact answers.
enum class Scramble {
  None,
  /// a * x + b on inverse depth, a > 0: the ambiguity of a relative-depth model.
  DisparityAffine,
  /// 1 / (a * depth + b), a, b > 0: a per-face inconsistency no affine map of
  /// inverse depth removes.
  DepthAffine,
};

struct MockTeacherOptions {
  Scramble scramble = Scramble::None;
  std::uint64_t seed = 0;
  /// Draw a fresh map per query key; otherwise one fixed map per face slot.
  bool per_call = true;
};

/// Exact inverse depth of an analytic scene along each face pixel ray.
class MockTeacher : public TeacherBackend {
 public:
  MockTeacher(AnalyticScene scene, MockTeacherOptions opts = {});
  const TeacherInfo& info() const override { return info_; }
  std::vector<Raster> infer(const std::vector<FaceQuery>& queries) override;
  Raster infer_one(const FaceQuery& q) const;

 private:
  AnalyticScene scene_;
  MockTeacherOptions opts_;
  TeacherInfo info_;
};

/// Inverse depth := luminance of the 8-bit-rounded face (BT.601 weights) / 255. Same
/// arithmetic as the stub model used to test the bridge protocol.
class LuminanceTeacher : public TeacherBackend {
 public:
  LuminanceTeacher();
  const TeacherInfo& info() const override { return info_; }
  std::vector<Raster> infer(const std::vector<FaceQuery>& queries) override;
  static float luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

 private:
  TeacherInfo info_;
};

struct BridgeOptions {
  /// Shell command starting the bridge process.
  std::string command;
  /// Scratch directory for face PNGs and returned PFMs.
  std::filesystem::path work_dir;
  std::chrono::milliseconds timeout{120000};
};

/// Client side of the bridge protocol. The child process speaks newline-delimited JSON
/// over its standard streams: it first prints {tool, model, output_space}; then answers
/// each request {id, rgb, width, height} with {id, status, disparity, msg}. Responses may
/// arrive in any order.
class BridgeTeacher : public TeacherBackend {
 public:
  explicit BridgeTeacher(BridgeOptions opts);
  ~BridgeTeacher() override;
  BridgeTeacher(const BridgeTeacher&) = delete;
  BridgeTeacher& operator=(const BridgeTeacher&) = delete;

  const TeacherInfo& info() const override { return info_; }
  std::vector<Raster> infer(const std::vector<FaceQuery>& queries) override;

 private:
  void send_line(const std::string& line);
  std::string read_line();
  void shutdown();

  BridgeOptions opts_;
  TeacherInfo info_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
};

/// "mock:<scene>", "luminance" or "bridge:<command>".
std::unique_ptr<TeacherBackend> make_teacher(const std::string& spec, const std::filesystem::path& work_dir,
                                             MockTeacherOptions mock = {});

Scramble scramble_from_string(const std::string& s);

}  // namespace pano
