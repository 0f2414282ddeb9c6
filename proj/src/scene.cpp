#include "pano/scene.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pano/error.hpp"

namespace pano {

namespace {
constexpr double kFloorY = -1.0;
constexpr double kCeilingY = 2.0;
}  // namespace

AnalyticScene AnalyticScene::parse(const std::string& spec) {
  // "<name>" or "<name>@x,y,z" for an off-center camera.
  AnalyticScene s;
  const auto at = spec.find('@');
  const std::string name = spec.substr(0, at);
  if (name == "unit_sphere_room")
    s.kind = Kind::UnitSphereRoom;
  else if (name == "two_plane_corridor")
    s.kind = Kind::TwoPlaneCorridor;
  else
    throw InvalidInput("unknown scene '" + name + "'");
  if (at != std::string::npos) {
    std::istringstream is(spec.substr(at + 1));
    char c1 = 0, c2 = 0;
    if (!(is >> s.camera.x >> c1 >> s.camera.y >> c2 >> s.camera.z) || c1 != ',' || c2 != ',')
      throw InvalidInput("scene camera must be written as x,y,z");
  }
  if (s.kind == Kind::UnitSphereRoom && !(norm(s.camera) < 1.0))
    throw InvalidInput("camera must lie inside the unit sphere");
  if (s.kind == Kind::TwoPlaneCorridor && !(s.camera.y > kFloorY && s.camera.y < kCeilingY))
    throw InvalidInput("camera must lie between floor and ceiling");
  return s;
}

std::string AnalyticScene::name() const {
  std::ostringstream os;
  os << (kind == Kind::UnitSphereRoom ? "unit_sphere_room" : "two_plane_corridor");
  if (camera != Vec3{0, 0, 0}) os << '@' << camera.x << ',' << camera.y << ',' << camera.z;
  return os.str();
}

double AnalyticScene::depth(UnitVec q) const {
  const Vec3 d = q.vec();
  if (kind == Kind::UnitSphereRoom) {
    // |c + t d| = 1 with |c| < 1 has exactly one positive root.
    const double b = dot(camera, d);
    const double c = dot(camera, camera) - 1.0;
    return -b + std::sqrt(b * b - c);
  }
  if (d.y < 0) return (kFloorY - camera.y) / d.y;
  if (d.y > 0) return (kCeilingY - camera.y) / d.y;
  return std::numeric_limits<double>::infinity();
}

double AnalyticScene::inverse_depth(UnitVec q) const {
  const double t = depth(q);
  return std::isinf(t) ? 0.0 : 1.0 / t;
}

DepthMap AnalyticScene::render_depth(int h) const {
  Raster v(h, 2 * h, 1);
  Mask m(h, 2 * h, true);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < 2 * h; ++c) {
      const double t = depth(spherical_to_unit_vec(erp_pixel_to_spherical(r, c, h, 2 * h)));
      v.at(r, c) = std::isfinite(t) ? t : 0.0;
      m.set(r, c, std::isfinite(t));
    }
  return DepthMap(std::move(v), std::move(m));
}

Raster AnalyticScene::render_rgb(int h) const {
  Raster out(h, 2 * h, 3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < 2 * h; ++c) {
      const UnitVec q = spherical_to_unit_vec(erp_pixel_to_spherical(r, c, h, 2 * h));
      const double t = depth(q);
      const double shade = std::isfinite(t) ? 1.0 / (1.0 + 0.25 * t) : 0.5;
      const Vec3 d = q.vec();
      out.at(r, c, 0) = 255.0 * shade * (0.55 + 0.35 * std::sin(2.0 * d.x + 0.5));
      out.at(r, c, 1) = 255.0 * shade * (0.55 + 0.35 * std::sin(2.5 * d.y + 1.0));
      out.at(r, c, 2) = 255.0 * shade * (0.55 + 0.35 * std::cos(1.7 * d.z));
    }
  return out;
}

}  // namespace pano
