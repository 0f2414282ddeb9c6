#include "pano/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "pano/parallel.hpp"
#include "pano/rng.hpp"

namespace pano {

namespace {

// Fractional coordinates this close to an integer are snapped, so exact pixel-center
// hits (identity warps, integer column shifts) reproduce source values bit for bit.
constexpr double kSnap = 1e-9;

double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < kSnap ? r : x;
}

int wrap_index(long i, int n) {
  long m = i % n;
  return static_cast<int>(m < 0 ? m + n : m);
}

GatherPlan::Tap face_tap(FacePixel p, int w) {
  const double x = std::clamp(snap(p.u - 0.5), 0.0, double(w - 1));
  const double y = std::clamp(snap(p.v - 0.5), 0.0, double(w - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, w - 1);
  const double fx = x - x0, fy = y - y0;
  GatherPlan::Tap t;
  t.src = {std::uint32_t(y0 * w + x0), std::uint32_t(y0 * w + x1), std::uint32_t(y1 * w + x0),
           std::uint32_t(y1 * w + x1)};
  t.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int xn = std::clamp(static_cast<int>(std::floor(x + 0.5)), 0, w - 1);
  const int yn = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, w - 1);
  t.nearest = std::uint32_t(yn * w + xn);
  return t;
}

}  // namespace

CubeFaceSet::CubeFaceSet(int w, int channels) {
  for (auto& f : faces) f = Raster(w, w, channels);
}

void CubeFaceSet::validate() const {
  const int w = width(), c = channels();
  for (const auto& f : faces)
    if (f.width() != w || f.height() != w || f.channels() != c)
      throw InvalidInput("cube faces must be square and share size and channel count");
  if (w <= 0) throw InvalidInput("cube faces are empty");
}

GatherPlan::GatherPlan(int out_h, int out_w, int src_h, int src_w, std::vector<Tap> taps)
    : out_h_(out_h), out_w_(out_w), src_h_(src_h), src_w_(src_w), taps_(std::move(taps)) {
  if (taps_.size() != static_cast<std::size_t>(out_h) * out_w) throw InvalidInput("gather plan size mismatch");
}

Raster GatherPlan::apply(const Raster& src, int workers) const {
  if (src.height() != src_h_ || src.width() != src_w_) throw InvalidInput("gather source shape mismatch");
  const int ch = src.channels();
  Raster out(out_h_, out_w_, ch);
  auto in = src.values();
  auto dst = out.values();
  parallel_for(taps_.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Tap& t = taps_[i];
      for (int c = 0; c < ch; ++c) {
        double v = 0;
        for (int k = 0; k < 4; ++k)
          if (t.weight[k] != 0.0) v += t.weight[k] * in[std::size_t(t.src[k]) * ch + c];
        dst[i * ch + c] = v;
      }
    }
  });
  return out;
}

Mask GatherPlan::apply_mask(const Mask& src) const {
  if (src.height() != src_h_ || src.width() != src_w_) throw InvalidInput("gather mask shape mismatch");
  Mask out(out_h_, out_w_, false);
  for (std::size_t i = 0; i < taps_.size(); ++i) out.set(i, src.valid(std::size_t(taps_[i].nearest)));
  return out;
}

Raster GatherPlan::apply_transpose(const Raster& out_grad) const {
  if (out_grad.height() != out_h_ || out_grad.width() != out_w_ || out_grad.channels() != 1)
    throw InvalidInput("gather gradient shape mismatch");
  Raster src(src_h_, src_w_, 1);
  auto g = out_grad.values();
  auto s = src.values();
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    if (g[i] == 0.0) continue;
    const Tap& t = taps_[i];
    for (int k = 0; k < 4; ++k) s[t.src[k]] += t.weight[k] * g[i];
  }
  return src;
}

GatherPlan::Tap erp_tap(SphericalCoord c, int h, int w_erp) {
  auto [row, col] = spherical_to_erp_pixel(c, h, w_erp);
  row = std::clamp(snap(row), 0.0, double(h - 1));
  col = snap(col);
  const long c0 = static_cast<long>(std::floor(col));
  const int r0 = static_cast<int>(std::floor(row));
  const int r1 = std::min(r0 + 1, h - 1);
  const double fx = col - double(c0), fy = row - r0;
  const int ca = wrap_index(c0, w_erp), cb = wrap_index(c0 + 1, w_erp);
  GatherPlan::Tap t;
  t.src = {std::uint32_t(r0 * w_erp + ca), std::uint32_t(r0 * w_erp + cb), std::uint32_t(r1 * w_erp + ca),
           std::uint32_t(r1 * w_erp + cb)};
  t.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int cn = wrap_index(static_cast<long>(std::floor(col + 0.5)), w_erp);
  const int rn = std::clamp(static_cast<int>(std::floor(row + 0.5)), 0, h - 1);
  t.nearest = std::uint32_t(rn * w_erp + cn);
  return t;
}

GatherPlan camera_gather_plan(int src_h, const Rotation& cam, const CubeIntrinsics& intr, int workers) {
  if (src_h <= 0 || intr.w <= 0) throw InvalidInput("gather plan: empty grid");
  const int w = intr.w;
  std::vector<GatherPlan::Tap> taps(std::size_t(w) * w);
  parallel_for(taps.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const FacePixel p{double(i % w) + 0.5, double(i / w) + 0.5};
      const UnitVec q = camera_pixel_to_direction(p, cam, intr);
      taps[i] = erp_tap(unit_vec_to_spherical(q), src_h, 2 * src_h);
    }
  });
  return GatherPlan(w, w, src_h, 2 * src_h, std::move(taps));
}

GatherPlan rotation_gather_plan(int h, const Rotation& r, int workers) {
  if (h <= 0) throw InvalidInput("gather plan: empty grid");
  const int w = 2 * h;
  std::vector<GatherPlan::Tap> taps(std::size_t(h) * w);
  parallel_for(taps.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const int row = int(i / w), col = int(i % w);
      const UnitVec q = spherical_to_unit_vec(erp_pixel_to_spherical(row, col, h, w));
      const UnitVec src = UnitVec::from(r.apply_transpose(q.vec()));
      taps[i] = erp_tap(unit_vec_to_spherical(src), h, w);
    }
  });
  return GatherPlan(h, w, h, w, std::move(taps));
}

double sample_bilinear(const Raster& erp, SphericalCoord c, int ch) {
  if (!erp.is_erp()) throw InvalidInput("sample_bilinear expects an ERP raster");
  const auto t = erp_tap(c, erp.height(), erp.width());
  auto v = erp.values();
  double s = 0;
  for (int k = 0; k < 4; ++k)
    if (t.weight[k] != 0.0) s += t.weight[k] * v[std::size_t(t.src[k]) * erp.channels() + ch];
  return s;
}

CubeProjection erp_to_cube(const Raster& erp, int face_px, const Mask* mask, int workers) {
  if (!erp.is_erp()) throw InvalidInput("erp_to_cube expects an ERP raster (width == 2 * height)");
  if (face_px <= 0) throw InvalidInput("face size must be positive");
  if (mask && !mask->matches(erp)) throw InvalidInput("mask shape differs from image");
  const auto intr = CubeIntrinsics::cube(face_px);
  CubeProjection out;
  for (CubeFace f : kCubeFaces) {
    const auto plan = camera_gather_plan(erp.height(), face_rotation(f), intr, workers);
    out.faces[f] = plan.apply(erp, workers);
    out.masks[static_cast<int>(f)] = mask ? plan.apply_mask(*mask) : Mask(face_px, face_px, true);
  }
  return out;
}

Raster cube_to_erp(const CubeFaceSet& faces, int h, int workers) {
  faces.validate();
  if (h <= 0) throw InvalidInput("ERP height must be positive");
  const int w = 2 * h, ch = faces.channels(), fw = faces.width();
  const auto intr = CubeIntrinsics::cube(fw);
  Raster out(h, w, ch);
  auto dst = out.values();
  parallel_for(std::size_t(h) * w, workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const UnitVec q = spherical_to_unit_vec(erp_pixel_to_spherical(int(i / w), int(i % w), h, w));
      const CubeFace f = face_of_direction(q);
      // face_of_direction guarantees the hit lies inside the face (up to rounding).
      const auto hit = project_to_face(q, f, intr);
      const FacePixel p = hit ? *hit : FacePixel{fw / 2.0, fw / 2.0};
      const auto t = face_tap(p, fw);
      auto src = faces[f].values();
      for (int c = 0; c < ch; ++c) {
        double v = 0;
        for (int k = 0; k < 4; ++k)
          if (t.weight[k] != 0.0) v += t.weight[k] * src[std::size_t(t.src[k]) * ch + c];
        dst[i * ch + c] = v;
      }
    }
  });
  return out;
}

ErpWarp rotate_erp(const Raster& erp, const Rotation& r, const Mask* mask, int workers) {
  if (!erp.is_erp()) throw InvalidInput("rotate_erp expects an ERP raster");
  if (mask && !mask->matches(erp)) throw InvalidInput("mask shape differs from image");
  const auto plan = rotation_gather_plan(erp.height(), r, workers);
  return {plan.apply(erp, workers), mask ? plan.apply_mask(*mask) : Mask::like(erp)};
}

std::string_view to_string(RotationMode m) {
  switch (m) {
    case RotationMode::FullSO3: return "full_so3";
    case RotationMode::YawOnly: return "yaw_only";
    case RotationMode::Identity: return "identity";
  }
  return "full_so3";
}

RotationMode rotation_mode_from_string(std::string_view s) {
  if (s == "full_so3") return RotationMode::FullSO3;
  if (s == "yaw_only") return RotationMode::YawOnly;
  if (s == "identity") return RotationMode::Identity;
  throw InvalidInput("unknown rotation mode '" + std::string(s) + "'");
}

Rotation random_rotation(std::uint64_t seed, RotationMode mode) {
  if (mode == RotationMode::Identity) return Rotation::identity();
  std::mt19937_64 rng(seed);
  if (mode == RotationMode::YawOnly) return Rotation::yaw(2 * kPi * uniform01(rng));
  // Shoemake: uniform unit quaternion from three uniforms.
  const double u1 = uniform01(rng), u2 = uniform01(rng), u3 = uniform01(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  return Rotation::from_quaternion(b * std::cos(2 * kPi * u3), a * std::sin(2 * kPi * u2),
                                   a * std::cos(2 * kPi * u2), b * std::sin(2 * kPi * u3));
}

std::vector<Rotation> icosahedral_layout(int n_patches) {
  int level = -1;
  for (int k = 0, n = 20; n <= n_patches; ++k, n *= 4)
    if (n == n_patches) level = k;
  if (level < 0) throw InvalidInput("icosahedral layout supports 20 * 4^k patches");

  const double g = (1 + std::sqrt(5.0)) / 2;
  std::vector<Vec3> v;
  for (double s1 : {-1.0, 1.0})
    for (double s2 : {-1.0, 1.0}) {
      v.push_back({0, s1, s2 * g});
      v.push_back({s1, s2 * g, 0});
      v.push_back({s2 * g, 0, s1});
    }
  using Tri = std::array<Vec3, 3>;
  std::vector<Tri> tris;
  auto adjacent = [](Vec3 a, Vec3 b) { return std::abs(dot(a - b, a - b) - 4.0) < 1e-9; };
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      for (std::size_t k = j + 1; k < v.size(); ++k)
        if (adjacent(v[i], v[j]) && adjacent(v[j], v[k]) && adjacent(v[i], v[k]))
          tris.push_back({normalized(v[i]), normalized(v[j]), normalized(v[k])});

  for (int l = 0; l < level; ++l) {
    std::vector<Tri> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      const Vec3 ab = normalized(t[0] + t[1]), bc = normalized(t[1] + t[2]), ca = normalized(t[2] + t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({ab, t[1], bc});
      next.push_back({ca, bc, t[2]});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  std::vector<Rotation> out;
  out.reserve(tris.size());
  for (const auto& t : tris)
    out.push_back(Rotation::looking_at(unit_vec_to_spherical(UnitVec::from(t[0] + t[1] + t[2]))));
  return out;
}

TangentPatches erp_to_tangent(const Raster& erp, const std::vector<Rotation>& orientations, double fov,
                              int patch_px, const Mask* mask, int workers) {
  if (!erp.is_erp()) throw InvalidInput("erp_to_tangent expects an ERP raster");
  if (patch_px <= 0) throw InvalidInput("patch size must be positive");
  if (mask && !mask->matches(erp)) throw InvalidInput("mask shape differs from image");
  TangentPatches out;
  out.intrinsics = CubeIntrinsics::with_fov(patch_px, fov);
  out.orientations = orientations;
  for (const auto& r : orientations) {
    const auto plan = camera_gather_plan(erp.height(), r, out.intrinsics, workers);
    out.patches.push_back(plan.apply(erp, workers));
    out.masks.push_back(mask ? plan.apply_mask(*mask) : Mask(patch_px, patch_px, true));
  }
  return out;
}

TangentPatches erp_to_tangent(const Raster& erp, int n_patches, double fov, int patch_px, const Mask* mask,
                              int workers) {
  if (n_patches < 4) throw InvalidInput("at least four tangent patches are required");
  if (!(fov > 0 && fov < kPi)) throw InvalidInput("field of view must lie in (0, pi)");
  return erp_to_tangent(erp, icosahedral_layout(n_patches), fov, patch_px, mask, workers);
}

double psnr(const Raster& a, const Raster& b, double peak) {
  if (!a.same_shape(b)) throw InvalidInput("psnr: shape mismatch");
  auto x = a.values();
  auto y = b.values();
  double se = 0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
  if (se == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / (se / double(x.size())));
}

}  // namespace pano
