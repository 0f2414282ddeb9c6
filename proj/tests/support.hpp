#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "pano/geometry.hpp"
#include "pano/raster.hpp"
#include "pano/rng.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("panodepth_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Smooth intensity field on the sphere, values inside [0, 1].
inline double smooth_field(pano::Vec3 q) { return 0.5 + 0.25 * q.x + 0.15 * q.y + 0.1 * q.z * q.x; }

/// Low-order RGB pattern in 0..255, smooth enough for bilinear round trips.
inline pano::Vec3 smooth_rgb(pano::Vec3 q) {
  return {127.5 + 100 * q.x * q.z + 20 * q.y, 127.5 + 90 * q.y - 30 * q.x * q.x, 127.5 + 80 * q.z + 40 * q.x * q.y};
}

inline pano::Raster erp_of_field(int h, double (*f)(pano::Vec3)) {
  pano::Raster r(h, 2 * h, 1);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < 2 * h; ++col)
      r.at(row, col) = f(pano::spherical_to_unit_vec(pano::erp_pixel_to_spherical(row, col, h, 2 * h)).vec());
  return r;
}

inline pano::Raster smooth_rgb_erp(int h) {
  pano::Raster r(h, 2 * h, 3);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < 2 * h; ++col) {
      const auto c = smooth_rgb(pano::spherical_to_unit_vec(pano::erp_pixel_to_spherical(row, col, h, 2 * h)).vec());
      r.at(row, col, 0) = c.x;
      r.at(row, col, 1) = c.y;
      r.at(row, col, 2) = c.z;
    }
  return r;
}

inline pano::Raster random_raster(int h, int w, int ch, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  pano::Raster r(h, w, ch);
  for (double& v : r.values()) v = pano::uniform(rng, lo, hi);
  return r;
}

inline pano::Mask random_mask(int h, int w, std::uint64_t seed, double p_valid) {
  std::mt19937_64 rng(seed);
  pano::Mask m(h, w, false);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, pano::uniform01(rng) < p_valid);
  return m;
}

}  // namespace testing
