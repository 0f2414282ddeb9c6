#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "pano/resample.hpp"
#include "support.hpp"

using namespace pano;
using testing::erp_of_field;
using testing::smooth_field;

namespace {

double max_abs_diff(const Raster& a, const Raster& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

Raster constant(int h, int w, int ch, double v) { return Raster(h, w, ch, v); }

}  // namespace

TEST_CASE("sample_bilinear basics") {
  const Raster img = testing::random_raster(8, 16, 2, 4, -3, 3);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 16; ++c)
      for (int ch = 0; ch < 2; ++ch)
        CHECK(sample_bilinear(img, erp_pixel_to_spherical(r, c, 8, 16), ch) == img.at(r, c, ch));
  const Raster k = constant(8, 16, 1, 2.5);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i)
    CHECK(sample_bilinear(k, {uniform(rng, -kPi, kPi), uniform(rng, -kPi / 2, kPi / 2)}) == doctest::Approx(2.5));
}

TEST_CASE("sample_bilinear wraps continuously across the date line") {
  const Raster img = erp_of_field(64, smooth_field);
  for (double phi : {-1.2, -0.4, 0.0, 0.7, 1.3}) {
    const double left = sample_bilinear(img, {wrap_longitude(-kPi - 1e-9), phi});
    const double right = sample_bilinear(img, {kPi - 1e-9, phi});
    const double other = sample_bilinear(img, {-kPi + 1e-9, phi});
    CHECK(std::abs(left - right) < 1e-6);
    CHECK(std::abs(left - other) < 1e-6);
  }
}

TEST_CASE("erp_to_cube matches the analytic field along face rays") {
  const int face_px = 256;
  const Raster erp = erp_of_field(1024, smooth_field);
  const CubeProjection cube = erp_to_cube(erp, face_px);
  const auto intr = CubeIntrinsics::cube(face_px);
  double worst = 0;
  for (CubeFace f : kCubeFaces)
    for (int v = 0; v < face_px; ++v)
      for (int u = 0; u < face_px; ++u) {
        const UnitVec q = face_pixel_to_direction({u + 0.5, v + 0.5}, f, intr);
        worst = std::max(worst, std::abs(cube.faces[f].at(v, u) - smooth_field(q.vec())));
      }
  CHECK(worst < 1e-3);
}

TEST_CASE("constant and all-invalid inputs") {
  const CubeProjection cube = erp_to_cube(constant(16, 32, 3, 7.0), 9);
  for (CubeFace f : kCubeFaces)
    for (double v : cube.faces[f].values()) CHECK(v == doctest::Approx(7.0));
  const Mask none(16, 32, false);
  const CubeProjection masked = erp_to_cube(constant(16, 32, 1, 1.0), 9, &none);
  for (const auto& m : masked.masks) CHECK(m.count() == 0);

  CubeFaceSet faces(12, 1);
  for (auto& f : faces.faces) f = Raster(12, 12, 1, -4.0);
  for (double v : cube_to_erp(faces, 20).values()) CHECK(v == doctest::Approx(-4.0));

  const TangentPatches t = erp_to_tangent(constant(16, 32, 1, 3.0), 20, 80 * kPi / 180, 8);
  for (const auto& p : t.patches)
    for (double v : p.values()) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("cube round trip keeps a smooth image at 30 dB or better") {
  const Raster img = testing::smooth_rgb_erp(512);
  const Raster back = cube_to_erp(erp_to_cube(img, 256).faces, 512);
  CHECK(psnr(img, back, 255.0) >= 30.0);
}

TEST_CASE("face-index faces partition the sphere by solid angle") {
  const int h = 512;
  CubeFaceSet faces(16, 1);
  for (CubeFace f : kCubeFaces) faces[f] = Raster(16, 16, 1, double(int(f)));
  const Raster erp = cube_to_erp(faces, h);
  std::array<double, 6> area{};
  for (int r = 0; r < h; ++r) {
    // Exact solid angle of an ERP cell: dtheta * (sin phi_top - sin phi_bottom).
    const double top = kPi / 2 - kPi * r / h, bottom = kPi / 2 - kPi * (r + 1) / h;
    const double cell = (2 * kPi / (2 * h)) * (std::sin(top) - std::sin(bottom));
    for (int c = 0; c < 2 * h; ++c) {
      const double v = erp.at(r, c);
      const long k = std::lround(v);
      REQUIRE(std::abs(v - double(k)) < 1e-9);
      area[std::size_t(k)] += cell;
    }
  }
  for (double a : area) CHECK(std::abs(a - 4 * kPi / 6) / (4 * kPi / 6) < 0.01);
}

TEST_CASE("rotate_erp: identity, integer yaw shift, round trip") {
  const int h = 64;
  const Raster img = testing::random_raster(h, 2 * h, 3, 9, 0, 255);
  CHECK(rotate_erp(img, Rotation::identity()).image == img);
  for (int k : {1, 5, -3, 64}) {
    const Raster out = rotate_erp(img, Rotation::yaw(2 * kPi * k / (2 * h))).image;
    bool exact = true;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < 2 * h; ++c)
        for (int ch = 0; ch < 3; ++ch)
          exact = exact && out.at(r, (((c + k) % (2 * h)) + 2 * h) % (2 * h), ch) == img.at(r, c, ch);
    CHECK(exact);
  }
  const Raster smooth = testing::smooth_rgb_erp(512);
  for (std::uint64_t seed : {1, 2, 3}) {
    const Rotation r = random_rotation(seed, RotationMode::FullSO3);
    const Raster back = rotate_erp(rotate_erp(smooth, r).image, r.inverse()).image;
    CHECK(psnr(smooth, back, 255.0) >= 28.0);
  }
}

TEST_CASE("rotations compose up to interpolation error") {
  const Raster img = testing::smooth_rgb_erp(256);
  const Rotation a = random_rotation(21, RotationMode::FullSO3), b = random_rotation(22, RotationMode::FullSO3);
  const Raster two_steps = rotate_erp(rotate_erp(img, a).image, b).image;
  const Raster one_step = rotate_erp(img, b * a).image;
  CHECK(psnr(two_steps, one_step, 255.0) >= 25.0);
}

TEST_CASE("shift-then-project equals projecting the yawed field") {
  const int h = 1024, k = 37;
  const Raster erp = erp_of_field(h, smooth_field);
  const Rotation yaw = Rotation::yaw(2 * kPi * k / (2 * h));
  const Raster shifted = rotate_erp(erp, yaw).image;
  const CubeProjection cube = erp_to_cube(shifted, 128);
  const auto intr = CubeIntrinsics::cube(128);
  double worst = 0;
  for (CubeFace f : kCubeFaces)
    for (int v = 0; v < 128; v += 3)
      for (int u = 0; u < 128; u += 3) {
        const UnitVec q = face_pixel_to_direction({u + 0.5, v + 0.5}, f, intr);
        worst = std::max(worst, std::abs(cube.faces[f].at(v, u) - smooth_field(yaw.apply_transpose(q.vec()))));
      }
  CHECK(worst < 1e-3);
}

TEST_CASE("gathers stay inside the input range") {
  const Raster img = testing::random_raster(32, 64, 1, 77, -2, 5);
  const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
  auto inside = [&](const Raster& r) {
    for (double v : r.values())
      if (v < *lo - 1e-12 || v > *hi + 1e-12) return false;
    return true;
  };
  for (std::uint64_t s = 0; s < 5; ++s) CHECK(inside(rotate_erp(img, random_rotation(s, RotationMode::FullSO3)).image));
  for (const auto& f : erp_to_cube(img, 20).faces.faces) CHECK(inside(f));
}

TEST_CASE("mask transport is nearest-neighbour and conservative") {
  const int h = 32;
  const Mask mask = testing::random_mask(h, 2 * h, 5, 0.6);
  const Raster img(h, 2 * h, 1, 1.0);
  const Rotation r = random_rotation(4, RotationMode::FullSO3);
  const ErpWarp w = rotate_erp(img, r, &mask);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < 2 * h; ++col) {
      const UnitVec q = spherical_to_unit_vec(erp_pixel_to_spherical(row, col, h, 2 * h));
      const auto [sr, sc] = spherical_to_erp_pixel(unit_vec_to_spherical(UnitVec::from(r.apply_transpose(q.vec()))), h, 2 * h);
      const int nr = std::clamp(int(std::floor(sr + 0.5)), 0, h - 1);
      const int nc = ((int(std::floor(sc + 0.5)) % (2 * h)) + 2 * h) % (2 * h);
      CHECK(w.mask.valid(row, col) == mask.valid(nr, nc));
    }
  const Mask wrong(4, 8);
  CHECK_THROWS_AS(rotate_erp(img, r, &wrong), InvalidInput);
}

TEST_CASE("worker count never changes results") {
  const Raster img = testing::random_raster(48, 96, 3, 12, 0, 1);
  const Rotation r = random_rotation(3, RotationMode::FullSO3);
  CHECK(rotate_erp(img, r, nullptr, 1).image == rotate_erp(img, r, nullptr, 4).image);
  const auto a = erp_to_cube(img, 24, nullptr, 1), b = erp_to_cube(img, 24, nullptr, 3);
  for (CubeFace f : kCubeFaces) CHECK(a.faces[f] == b.faces[f]);
  CHECK(cube_to_erp(a.faces, 48, 1) == cube_to_erp(a.faces, 48, 5));
}

TEST_CASE("random_rotation: determinism, modes, angle distribution") {
  CHECK(random_rotation(99, RotationMode::FullSO3) == random_rotation(99, RotationMode::FullSO3));
  CHECK_FALSE(random_rotation(99, RotationMode::FullSO3) == random_rotation(100, RotationMode::FullSO3));
  CHECK(random_rotation(5, RotationMode::Identity) == Rotation::identity());
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Rotation y = random_rotation(s, RotationMode::YawOnly);
    CHECK(y.apply({0, 1, 0}) == Vec3{0, 1, 0});
    CHECK(orthonormality_error(random_rotation(s, RotationMode::FullSO3)) < 1e-12);
  }

  // Haar measure: angle density (1 - cos a) / pi, CDF (a - sin a) / pi.
  const int n = 10000, bins = 10;
  std::array<int, bins> count{};
  double trace_dev = 0;
  for (int i = 0; i < n; ++i) {
    const Rotation r = random_rotation(derive_seed(2024, {std::uint64_t(i)}), RotationMode::FullSO3);
    trace_dev += std::abs(r.trace() - 3);
    count[std::min(bins - 1, int(r.angle() / kPi * bins))]++;
  }
  CHECK(trace_dev / n > 0);
  auto cdf = [](double a) { return (a - std::sin(a)) / kPi; };
  double chi2 = 0;
  for (int b = 0; b < bins; ++b) {
    const double expected = n * (cdf(kPi * (b + 1) / bins) - cdf(kPi * b / bins));
    chi2 += (count[b] - expected) * (count[b] - expected) / expected;
  }
  CHECK(chi2 < 21.666);  // chi-square, 9 degrees of freedom, 1% level
}

TEST_CASE("tangent patches at 90 degrees on cube axes reproduce cube faces") {
  const Raster img = testing::random_raster(64, 128, 3, 31, 0, 255);
  std::vector<Rotation> axes;
  for (CubeFace f : kCubeFaces) axes.push_back(face_rotation(f));
  const TangentPatches t = erp_to_tangent(img, axes, kPi / 2, 32);
  const CubeProjection c = erp_to_cube(img, 32);
  for (CubeFace f : kCubeFaces) CHECK(max_abs_diff(t.patches[int(f)], c.faces[f]) < 1e-6);
}

TEST_CASE("icosahedral layout") {
  CHECK(icosahedral_layout(20).size() == 20);
  CHECK(icosahedral_layout(80).size() == 80);
  CHECK_THROWS_AS(icosahedral_layout(24), InvalidInput);
  CHECK_THROWS_AS(erp_to_tangent(Raster(8, 16, 1), 20, kPi, 8), InvalidInput);
  CHECK_THROWS_AS(erp_to_tangent(Raster(8, 16, 1), 2, 1.0, 8), InvalidInput);

  // Coverage: every direction of a dense grid lands inside at least one 80-degree patch.
  const auto layout = icosahedral_layout(20);
  const auto intr = CubeIntrinsics::with_fov(64, 80 * kPi / 180);
  const int h = 180;
  int uncovered = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < 2 * h; ++c) {
      const UnitVec q = spherical_to_unit_vec(erp_pixel_to_spherical(r, c, h, 2 * h));
      bool hit = false;
      for (const auto& o : layout) hit = hit || project_to_camera(q, o, intr).has_value();
      uncovered += !hit;
    }
  CHECK(uncovered == 0);
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(erp_to_cube(Raster(8, 8, 1), 4), InvalidInput);
  CHECK_THROWS_AS(erp_to_cube(Raster(8, 16, 1), 0), InvalidInput);
  CubeFaceSet bad(8, 1);
  bad.faces[3] = Raster(7, 7, 1);
  CHECK_THROWS_AS(cube_to_erp(bad, 8), InvalidInput);
  CHECK_THROWS_AS(psnr(Raster(2, 4, 1), Raster(2, 4, 3), 1), InvalidInput);
}
