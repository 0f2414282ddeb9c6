#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "pano/geometry.hpp"
#include "pano/raster.hpp"

namespace pano {

/// Six square faces with identical size and channel count, indexed by CubeFace.
struct CubeFaceSet {
  std::array<Raster, 6> faces;

  CubeFaceSet() = default;
  CubeFaceSet(int w, int channels);

  int width() const { return faces[0].width(); }
  int channels() const { return faces[0].channels(); }
  Raster& operator[](CubeFace f) { return faces[static_cast<int>(f)]; }
  const Raster& operator[](CubeFace f) const { return faces[static_cast<int>(f)]; }
  /// Throws unless all six faces are square and share size and channels.
  void validate() const;
};

/// Precomputed inverse warp: each output pixel reads up to four weighted source pixels
/// (bilinear) and has one nearest source pixel for mask transport. Being linear, the
/// plan also provides its transpose for back-propagating gradients.
class GatherPlan {
 public:
  struct Tap {
    std::array<std::uint32_t, 4> src{};
    std::array<double, 4> weight{};
    std::uint32_t nearest = 0;
  };

  GatherPlan() = default;
  GatherPlan(int out_h, int out_w, int src_h, int src_w, std::vector<Tap> taps);

  int out_height() const { return out_h_; }
  int out_width() const { return out_w_; }
  int src_height() const { return src_h_; }
  int src_width() const { return src_w_; }
  const std::vector<Tap>& taps() const { return taps_; }

  Raster apply(const Raster& src, int workers = 1) const;
  /// Output pixel is valid iff its nearest source pixel is valid.
  Mask apply_mask(const Mask& src) const;
  /// Adjoint: accumulates out-gradients back onto source pixels (single channel).
  Raster apply_transpose(const Raster& out_grad) const;

 private:
  int out_h_ = 0, out_w_ = 0, src_h_ = 0, src_w_ = 0;
  std::vector<Tap> taps_;
};

/// Bilinear taps on an ERP grid: wraps horizontally, clamps at the poles.
GatherPlan::Tap erp_tap(SphericalCoord c, int h, int w_erp);

/// Perspective camera (orientation `cam`, camera-to-source) gathering from an ERP grid of height `src_h`.
GatherPlan camera_gather_plan(int src_h, const Rotation& cam, const CubeIntrinsics& intr, int workers = 1);
/// ERP-to-ERP inverse warp: output direction q reads source direction R^T q.
GatherPlan rotation_gather_plan(int h, const Rotation& r, int workers = 1);

/// Bilinear sample of channel `ch` at a spherical coordinate.
double sample_bilinear(const Raster& erp, SphericalCoord c, int ch = 0);

struct CubeProjection {
  CubeFaceSet faces;
  std::array<Mask, 6> masks;
};

CubeProjection erp_to_cube(const Raster& erp, int face_px, const Mask* mask = nullptr, int workers = 1);

/// Hard face assignment per ERP pixel (no seam blending), bilinear within the face.
Raster cube_to_erp(const CubeFaceSet& faces, int h, int workers = 1);

struct ErpWarp {
  Raster image;
  Mask mask;
};

ErpWarp rotate_erp(const Raster& erp, const Rotation& r, const Mask* mask = nullptr, int workers = 1);

/// Identity disables augmentation (static viewpoint).
enum class RotationMode { FullSO3, YawOnly, Identity };

std::string_view to_string(RotationMode m);
RotationMode rotation_mode_from_string(std::string_view s);

/// Deterministic in `seed`. FullSO3 is uniform (Haar) on SO(3) via a uniform unit
/// quaternion; YawOnly is a rotation about +y with angle uniform in [0, 2 pi).
Rotation random_rotation(std::uint64_t seed, RotationMode mode);

/// Orientations at the face centers of an icosahedron subdivided k times; n = 20 * 4^k.
std::vector<Rotation> icosahedral_layout(int n_patches);

struct TangentPatches {
  std::vector<Raster> patches;
  std::vector<Mask> masks;
  std::vector<Rotation> orientations;
  CubeIntrinsics intrinsics;
};

TangentPatches erp_to_tangent(const Raster& erp, const std::vector<Rotation>& orientations, double fov,
                              int patch_px, const Mask* mask = nullptr, int workers = 1);
/// Default layout: icosahedral with `n_patches` centers.
TangentPatches erp_to_tangent(const Raster& erp, int n_patches, double fov, int patch_px,
                              const Mask* mask = nullptr, int workers = 1);

/// Peak signal-to-noise ratio in dB over all channels; +inf for identical rasters.
double psnr(const Raster& a, const Raster& b, double peak);

}  // namespace pano
