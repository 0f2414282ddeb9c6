#pragma once

#include <string>

#include "pano/geometry.hpp"
#include "pano/raster.hpp"

namespace pano {

/// Closed-form indoor scenes used by the mock teacher, the demo corpus and the tests.
///
/// unit_sphere_room: the inside of a sphere of radius 1 centered at the origin. With the
///   camera at the origin every ray hits at distance 1; moving the camera (|camera| < 1)
///   gives a smoothly varying depth field.
/// two_plane_corridor: floor plane y = -1 and ceiling plane y = +2 relative to the world
///   origin. Rays parallel to the planes never hit (inverse depth 0).
struct AnalyticScene {
  enum class Kind { UnitSphereRoom, TwoPlaneCorridor };

  Kind kind = Kind::UnitSphereRoom;
  Vec3 camera{0, 0, 0};

  static AnalyticScene parse(const std::string& spec);
  std::string name() const;

  /// Metric distance along the world direction q; +inf when the ray escapes.
  double depth(UnitVec q) const;
  double inverse_depth(UnitVec q) const;

  /// ERP depth map (meters). Pixels with infinite depth are marked invalid.
  DepthMap render_depth(int h) const;
  /// Smooth, deterministic 8-bit-range RGB texture of the scene surfaces.
  Raster render_rgb(int h) const;
};

}  // namespace pano
