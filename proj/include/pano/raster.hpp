#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pano/error.hpp"

namespace pano {

/// Row-major interleaved raster of doubles. Used for ERP images, cube faces and
/// scalar maps alike; ERP-ness (width == 2 * height) is checked where it matters.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels, double fill = 0.0)
      : h_(height), w_(width), c_(channels) {
    if (height < 0 || width < 0 || channels < 1) throw InvalidInput("raster: bad dimensions");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(h_) * w_; }
  bool empty() const { return data_.empty(); }
  bool is_erp() const { return h_ > 0 && w_ == 2 * h_; }

  double& at(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
  double at(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }
  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * w_ + col) * c_ + ch;
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Raster& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }
  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  int c_ = 1;
  std::vector<double> data_;
};

/// Boolean validity raster; 1 = valid.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = true)
      : h_(height), w_(width),
        bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  static Mask like(const Raster& r, bool fill = true) { return Mask(r.height(), r.width(), fill); }

  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return bits_.size(); }

  bool valid(std::size_t i) const { return bits_[i] != 0; }
  bool valid(int row, int col) const { return bits_[static_cast<std::size_t>(row) * w_ + col] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  void set(int row, int col, bool v) { bits_[static_cast<std::size_t>(row) * w_ + col] = v ? 1 : 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  double valid_fraction() const { return bits_.empty() ? 0.0 : double(count()) / double(bits_.size()); }

  bool matches(const Raster& r) const { return h_ == r.height() && w_ == r.width(); }
  bool same_shape(const Mask& o) const { return h_ == o.h_ && w_ == o.w_; }

  Mask operator&(const Mask& o) const {
    if (!same_shape(o)) throw InvalidInput("mask: shape mismatch");
    Mask out(h_, w_, false);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & o.bits_[i];
    return out;
  }
  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Single-channel scalar raster paired with its validity. Depth (meters) or disparity.
struct ScalarMap {
  Raster values;
  Mask valid;

  ScalarMap() = default;
  ScalarMap(Raster v, Mask m) : values(std::move(v)), valid(std::move(m)) {
    if (values.channels() != 1) throw InvalidInput("scalar map must have one channel");
    if (!valid.matches(values)) throw InvalidInput("scalar map: mask shape mismatch");
  }
  explicit ScalarMap(Raster v) : ScalarMap(v, Mask::like(v)) {}

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  std::size_t size() const { return values.pixel_count(); }
  double operator[](std::size_t i) const { return values.values()[i]; }
};

using DepthMap = ScalarMap;
using DisparityMap = ScalarMap;

}  // namespace pano
