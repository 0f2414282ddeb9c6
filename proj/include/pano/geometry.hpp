#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string_view>

#include "pano/error.hpp"

namespace pano {

inline constexpr double kPi = std::numbers::pi;

// Frame: x right, y up, z forward. ERP row 0 looks at phi = +pi/2, column 0 starts at theta = -pi.

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return (1.0 / norm(a)) * a; }

/// Longitude theta in [-pi, pi), latitude phi in [-pi/2, pi/2].
struct SphericalCoord {
  double theta = 0;
  double phi = 0;
};

/// Wraps any angle into [-pi, pi).
double wrap_longitude(double theta);

/// Direction on the unit sphere. Construction through make() enforces unit length.
class UnitVec {
 public:
  UnitVec() = default;
  /// Rejects vectors whose norm differs from 1 by more than `tol`.
  static UnitVec make(Vec3 v, double tol = 1e-9);
  /// Normalizes any non-zero vector.
  static UnitVec from(Vec3 v);

  double x() const { return v_.x; }
  double y() const { return v_.y; }
  double z() const { return v_.z; }
  Vec3 vec() const { return v_; }

 private:
  explicit UnitVec(Vec3 v) : v_(v) {}
  Vec3 v_{0, 0, 1};
};

/// Proper rotation (orthonormal, det +1), row-major.
class Rotation {
 public:
  Rotation() = default;
  /// Validates orthonormality and det = +1 within `tol`.
  static Rotation from_rows(const std::array<double, 9>& m, double tol = 1e-10);
  static Rotation identity() { return {}; }
  /// About +y; yaw(+pi/2) carries +z onto +x.
  static Rotation yaw(double angle);
  /// Tilts +z toward +y by `angle`; pitch(+pi/2) carries +z onto +y.
  static Rotation pitch(double angle);
  /// Camera orientation whose optical axis points at (theta, phi): yaw(theta) * pitch(phi).
  static Rotation looking_at(SphericalCoord c);
  /// From a (not necessarily normalized) quaternion w + xi + yj + zk.
  static Rotation from_quaternion(double w, double x, double y, double z);

  double operator()(int r, int c) const { return m_[r * 3 + c]; }
  const std::array<double, 9>& rows() const { return m_; }

  Rotation transpose() const;
  Rotation inverse() const { return transpose(); }
  Vec3 apply(Vec3 v) const;
  Vec3 apply_transpose(Vec3 v) const;
  double trace() const { return m_[0] + m_[4] + m_[8]; }
  double determinant() const;
  /// Rotation angle in [0, pi].
  double angle() const;

  friend Rotation operator*(const Rotation& a, const Rotation& b);
  friend bool operator==(const Rotation&, const Rotation&) = default;

 private:
  std::array<double, 9> m_{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

/// max |R^T R - I| and |det R - 1|.
double orthonormality_error(const Rotation& r);

enum class CubeFace { Front = 0, Right, Back, Left, Up, Down };
inline constexpr std::array<CubeFace, 6> kCubeFaces{CubeFace::Front, CubeFace::Right, CubeFace::Back,
                                                   CubeFace::Left,  CubeFace::Up,    CubeFace::Down};
/// Single-letter tag used in file names: F R B L U D.
char face_letter(CubeFace f);
std::string_view face_name(CubeFace f);

/// Pinhole intrinsics of a square perspective face: focal f, principal point (w/2, w/2).
/// The cube face has f = w/2 (90 degree field of view).
struct CubeIntrinsics {
  int w = 0;
  double focal = 0;

  static CubeIntrinsics cube(int w) { return {w, w / 2.0}; }
  /// Square patch of `w` pixels spanning `fov` radians edge to edge.
  static CubeIntrinsics with_fov(int w, double fov);
  double principal() const { return w / 2.0; }
  /// Row-major K.
  std::array<double, 9> matrix() const { return {focal, 0, principal(), 0, focal, principal(), 0, 0, 1}; }
};

struct FacePixel {
  double u = 0;
  double v = 0;
};

// Pixel <-> angle conversions use pixel centers at half-integer offsets.
SphericalCoord erp_pixel_to_spherical(int row, int col, int h, int w_erp);
/// Continuous inverse of erp_pixel_to_spherical: returns fractional (row, col).
std::pair<double, double> spherical_to_erp_pixel(SphericalCoord c, int h, int w_erp);

UnitVec spherical_to_unit_vec(SphericalCoord c);
/// theta = 0 at the poles.
SphericalCoord unit_vec_to_spherical(UnitVec q);

UnitVec rotate_direction(const Rotation& r, UnitVec q);

Rotation face_rotation(CubeFace f);

/// Pixel position of q on face f under a camera with orientation `cam` (camera-to-world).
/// Image u grows to the right, v grows downward. Returns nullopt when q lies behind the
/// camera or outside [0, w] x [0, w].
std::optional<FacePixel> project_to_camera(UnitVec q, const Rotation& cam, const CubeIntrinsics& intr);
UnitVec camera_pixel_to_direction(FacePixel p, const Rotation& cam, const CubeIntrinsics& intr);

std::optional<FacePixel> project_to_face(UnitVec q, CubeFace f, const CubeIntrinsics& intr);
UnitVec face_pixel_to_direction(FacePixel p, CubeFace f, const CubeIntrinsics& intr);

/// Face whose axis carries the largest component; ties go to the earlier face in
/// Front, Right, Back, Left, Up, Down order.
CubeFace face_of_direction(UnitVec q);

}  // namespace pano
