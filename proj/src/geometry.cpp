#include "pano/geometry.hpp"

#include <algorithm>

#include "pano/error.hpp"

namespace pano {

double wrap_longitude(double theta) {
  if (theta >= -kPi && theta < kPi) return theta;
  double t = std::fmod(theta + kPi, 2 * kPi);
  if (t < 0) t += 2 * kPi;
  t -= kPi;
  return t >= kPi ? -kPi : t;
}

UnitVec UnitVec::make(Vec3 v, double tol) {
  if (!(std::abs(norm(v) - 1.0) <= tol)) throw InvalidInput("direction is not unit length");
  return UnitVec(v);
}

UnitVec UnitVec::from(Vec3 v) {
  const double n = norm(v);
  if (!(n > 0) || !std::isfinite(n)) throw InvalidInput("cannot normalize a zero or non-finite vector");
  return UnitVec((1.0 / n) * v);
}

Rotation Rotation::from_rows(const std::array<double, 9>& m, double tol) {
  Rotation r;
  r.m_ = m;
  if (!(orthonormality_error(r) <= tol)) throw InvalidInput("matrix is not a proper rotation");
  return r;
}

Rotation Rotation::yaw(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Rotation r;
  r.m_ = {c, 0, s, 0, 1, 0, -s, 0, c};
  return r;
}

Rotation Rotation::pitch(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Rotation r;
  r.m_ = {1, 0, 0, 0, c, s, 0, -s, c};
  return r;
}

Rotation Rotation::looking_at(SphericalCoord c) { return yaw(c.theta) * pitch(c.phi); }

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0)) throw InvalidInput("zero quaternion");
  w /= n, x /= n, y /= n, z /= n;
  Rotation r;
  r.m_ = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

Rotation Rotation::transpose() const {
  Rotation r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m_[i * 3 + j] = m_[j * 3 + i];
  return r;
}

Vec3 Rotation::apply(Vec3 v) const {
  return {m_[0] * v.x + m_[1] * v.y + m_[2] * v.z, m_[3] * v.x + m_[4] * v.y + m_[5] * v.z,
          m_[6] * v.x + m_[7] * v.y + m_[8] * v.z};
}

Vec3 Rotation::apply_transpose(Vec3 v) const {
  return {m_[0] * v.x + m_[3] * v.y + m_[6] * v.z, m_[1] * v.x + m_[4] * v.y + m_[7] * v.z,
          m_[2] * v.x + m_[5] * v.y + m_[8] * v.z};
}

double Rotation::determinant() const {
  const auto& m = m_;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

double Rotation::angle() const { return std::acos(std::clamp((trace() - 1.0) / 2.0, -1.0, 1.0)); }

Rotation operator*(const Rotation& a, const Rotation& b) {
  Rotation r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a.m_[i * 3 + k] * b.m_[k * 3 + j];
      r.m_[i * 3 + j] = s;
    }
  return r;
}

double orthonormality_error(const Rotation& r) {
  double err = std::abs(r.determinant() - 1.0);
  const Rotation p = r.transpose() * r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(p(i, j) - (i == j ? 1.0 : 0.0)));
  return err;
}

char face_letter(CubeFace f) {
  static constexpr char kLetters[] = {'F', 'R', 'B', 'L', 'U', 'D'};
  return kLetters[static_cast<int>(f)];
}

std::string_view face_name(CubeFace f) {
  static constexpr std::string_view kNames[] = {"front", "right", "back", "left", "up", "down"};
  return kNames[static_cast<int>(f)];
}

CubeIntrinsics CubeIntrinsics::with_fov(int w, double fov) {
  if (!(fov > 0 && fov < kPi)) throw InvalidInput("field of view must lie in (0, pi)");
  return {w, (w / 2.0) / std::tan(fov / 2.0)};
}

SphericalCoord erp_pixel_to_spherical(int row, int col, int h, int w_erp) {
  if (h <= 0 || w_erp != 2 * h) throw InvalidInput("ERP grid must have width == 2 * height");
  if (row < 0 || row >= h || col < 0 || col >= w_erp) throw InvalidInput("ERP pixel out of range");
  return {2 * kPi * (col + 0.5) / w_erp - kPi, kPi / 2 - kPi * (row + 0.5) / h};
}

std::pair<double, double> spherical_to_erp_pixel(SphericalCoord c, int h, int w_erp) {
  const double col = (c.theta + kPi) / (2 * kPi) * w_erp - 0.5;
  const double row = (kPi / 2 - c.phi) / kPi * h - 0.5;
  return {row, col};
}

UnitVec spherical_to_unit_vec(SphericalCoord c) {
  const double cp = std::cos(c.phi);
  return UnitVec::from({std::sin(c.theta) * cp, std::sin(c.phi), std::cos(c.theta) * cp});
}

SphericalCoord unit_vec_to_spherical(UnitVec q) {
  const double r = std::hypot(q.x(), q.z());
  const double phi = std::atan2(q.y(), r);
  const double theta = r == 0.0 ? 0.0 : wrap_longitude(std::atan2(q.x(), q.z()));
  return {theta, phi};
}

UnitVec rotate_direction(const Rotation& r, UnitVec q) { return UnitVec::from(r.apply(q.vec())); }

Rotation face_rotation(CubeFace f) {
  // Exact integer matrices: yaw(0), yaw(90), yaw(180), yaw(-90), pitch(90), pitch(-90).
  switch (f) {
    case CubeFace::Front: return Rotation::identity();
    case CubeFace::Right: return Rotation::from_rows({0, 0, 1, 0, 1, 0, -1, 0, 0});
    case CubeFace::Back: return Rotation::from_rows({-1, 0, 0, 0, 1, 0, 0, 0, -1});
    case CubeFace::Left: return Rotation::from_rows({0, 0, -1, 0, 1, 0, 1, 0, 0});
    case CubeFace::Up: return Rotation::from_rows({1, 0, 0, 0, 0, 1, 0, -1, 0});
    case CubeFace::Down: return Rotation::from_rows({1, 0, 0, 0, 0, -1, 0, 1, 0});
  }
  throw InvalidInput("unknown cube face");
}

namespace {
constexpr double kEdgeSlack = 1e-9;
}

std::optional<FacePixel> project_to_camera(UnitVec q, const Rotation& cam, const CubeIntrinsics& intr) {
  const Vec3 c = cam.apply_transpose(q.vec());
  if (c.z <= 0) return std::nullopt;
  // Camera y points up; image v points down.
  const FacePixel p{intr.focal * c.x / c.z + intr.principal(), -intr.focal * c.y / c.z + intr.principal()};
  const double lo = -kEdgeSlack, hi = intr.w + kEdgeSlack;
  if (p.u < lo || p.u > hi || p.v < lo || p.v > hi) return std::nullopt;
  return p;
}

UnitVec camera_pixel_to_direction(FacePixel p, const Rotation& cam, const CubeIntrinsics& intr) {
  const Vec3 c{(p.u - intr.principal()) / intr.focal, -(p.v - intr.principal()) / intr.focal, 1.0};
  return UnitVec::from(cam.apply(normalized(c)));
}

std::optional<FacePixel> project_to_face(UnitVec q, CubeFace f, const CubeIntrinsics& intr) {
  return project_to_camera(q, face_rotation(f), intr);
}

UnitVec face_pixel_to_direction(FacePixel p, CubeFace f, const CubeIntrinsics& intr) {
  return camera_pixel_to_direction(p, face_rotation(f), intr);
}

CubeFace face_of_direction(UnitVec q) {
  const std::array<double, 6> score{q.z(), q.x(), -q.z(), -q.x(), q.y(), -q.y()};
  int best = 0;
  for (int i = 1; i < 6; ++i)
    if (score[i] > score[best]) best = i;
  return static_cast<CubeFace>(best);
}

}  // namespace pano
