#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "pano/dataio.hpp"
#include "pano/resample.hpp"
#include "pano/teacher.hpp"

namespace pano {

struct PseudoConfig {
  int face_px = 256;
  RotationMode rotation_mode = RotationMode::FullSO3;
  int workers = 1;
};

/// Per-face supervision for one unlabeled panorama under one random rotation.
struct PseudoSample {
  std::string id;
  std::uint64_t seed = 0;
  Rotation rotation;
  CubeFaceSet rgb;
  /// Teacher inverse depth per face (one channel).
  CubeFaceSet pseudo;
  std::array<Mask, 6> masks;
  /// False for faces that were all-invalid or came back constant; their masks are cleared.
  std::array<bool, 6> usable{};
  TeacherInfo teacher;

  std::size_t usable_faces() const;
};

/// Key sent to the teacher for one face: "<id>/<seed>/<face letter>".
std::string face_query_key(const std::string& id, std::uint64_t seed, CubeFace f);

/// Rotate the panorama by random_rotation(seed), cut six faces, and query the teacher on
/// every face that has at least one valid pixel.
PseudoSample generate_pseudo(const std::string& id, const Raster& rgb, const Mask* mask, TeacherBackend& teacher,
                             std::uint64_t seed, const PseudoConfig& cfg = {});
/// Loads rgb and optional mask through the manifest's path resolution.
PseudoSample generate_pseudo(const SampleRecord& rec, const DatasetManifest& manifest, TeacherBackend& teacher,
                             std::uint64_t seed, const PseudoConfig& cfg = {});

/// Writes <id>_<F..D>.png, <id>_<F..D>.pfm, <id>_<F..D>_mask.png and <id>_rotation.json into `dir`.
void write_pseudo_bundle(const std::filesystem::path& dir, const PseudoSample& s, RotationMode mode);

enum class StitchAlignment { None, PerFaceMedianToFront };

/// Diagnostic only: cube-to-ERP of per-face pseudo depth. Training never consumes this.
Raster stitch_cube_depth_to_erp(const CubeFaceSet& pseudo, int h, StitchAlignment alignment);

/// Mean |difference| between neighbouring ERP pixels on different cube faces, divided by
/// the same quantity for neighbours on the same face. Neighbours wrap horizontally.
/// Returns 0 for a flat map.
double seam_score(const Raster& erp);

}  // namespace pano
