#include "pano/depthspace.hpp"

#include <algorithm>
#include <cmath>

namespace pano {

namespace {

Mask joint_mask(const ScalarMap& a, const ScalarMap& b, const Mask& mask) {
  if (!a.values.same_shape(b.values) || !mask.matches(a.values)) throw InvalidInput("loss: shape mismatch");
  return mask & a.valid & b.valid;
}

AlignStats checked_stats(const ScalarMap& m, const Mask& joint) {
  auto v = gather_valid(m.values, joint);
  return align_stats(v);
}

}  // namespace

double median_inplace(std::vector<double>& values) {
  if (values.empty()) throw InsufficientData("median of an empty set");
  const std::size_t n = values.size(), mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return (lo + hi) / 2.0;
}

std::vector<double> gather_valid(const Raster& values, const Mask& mask) {
  if (!mask.matches(values) || values.channels() != 1) throw InvalidInput("gather_valid: shape mismatch");
  std::vector<double> out;
  out.reserve(mask.count());
  auto v = values.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask.valid(i)) out.push_back(v[i]);
  return out;
}

DisparityMap depth_to_disparity(const DepthMap& depth) {
  Raster out = depth.values;
  auto v = out.values();
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!depth.valid.valid(i)) continue;
    if (!(v[i] > 0) || !std::isfinite(v[i])) throw InvalidInput("depth must be finite and positive at valid pixels");
    v[i] = 1.0 / v[i];
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  if (!(hi > lo)) throw DegenerateMap("disparity map has no spread over valid pixels");
  const double range = hi - lo;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (depth.valid.valid(i)) v[i] = (v[i] - lo) / range;
  return DisparityMap(std::move(out), depth.valid);
}

AlignStats align_stats(std::span<const double> valid_values) {
  if (valid_values.size() < 2) throw InsufficientData("alignment statistics need at least two valid pixels");
  std::vector<double> tmp(valid_values.begin(), valid_values.end());
  AlignStats st;
  st.t = median_inplace(tmp);
  double acc = 0;
  for (double x : valid_values) acc += std::abs(x - st.t);
  st.s = acc / double(valid_values.size());
  if (!(st.s > 0)) throw DegenerateMap("map has zero mean absolute deviation");
  return st;
}

AlignStats align_stats(const ScalarMap& m, const Mask& mask) { return checked_stats(m, mask & m.valid); }

AlignStats align_stats(const ScalarMap& m) { return checked_stats(m, m.valid); }

double affine_invariant_loss_frozen(const DisparityMap& pred, const AlignStats& ps, const DisparityMap& gt,
                                    const Mask& mask) {
  const Mask joint = joint_mask(pred, gt, mask);
  const AlignStats gs = checked_stats(gt, joint);
  auto p = pred.values.values();
  auto g = gt.values.values();
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!joint.valid(i)) continue;
    acc += std::abs((p[i] - ps.t) / ps.s - (g[i] - gs.t) / gs.s);
    ++n;
  }
  return acc / double(n);
}

double affine_invariant_loss(const DisparityMap& pred, const DisparityMap& gt, const Mask& mask) {
  return affine_invariant_loss_grad(pred, gt, mask).loss;
}

LossAndGrad affine_invariant_loss_grad(const DisparityMap& pred, const DisparityMap& gt, const Mask& mask) {
  const Mask joint = joint_mask(pred, gt, mask);
  const AlignStats ps = checked_stats(pred, joint);
  const AlignStats gs = checked_stats(gt, joint);
  auto p = pred.values.values();
  auto g = gt.values.values();
  const std::size_t n = joint.count();

  LossAndGrad out;
  out.grad = Raster(pred.height(), pred.width(), 1);
  out.n_valid = n;
  auto dg = out.grad.values();
  const double k = 1.0 / (ps.s * double(n));
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!joint.valid(i)) continue;
    const double r = (p[i] - ps.t) / ps.s - (g[i] - gs.t) / gs.s;
    acc += std::abs(r);
    dg[i] = r > 0 ? k : (r < 0 ? -k : 0.0);
  }
  out.loss = acc / double(n);
  return out;
}

DepthMap median_align_depth(const DepthMap& pred, const DepthMap& gt, const Mask& mask) {
  const Mask joint = joint_mask(pred, gt, mask);
  auto pv = gather_valid(pred.values, joint);
  auto gv = gather_valid(gt.values, joint);
  const double mp = median_inplace(pv), mg = median_inplace(gv);
  if (!(mp > 0) || !(mg > 0)) throw DegenerateMap("median alignment needs positive medians");
  const double scale = mg / mp;
  Raster out = pred.values;
  for (double& x : out.values()) x *= scale;
  return DepthMap(std::move(out), pred.valid);
}

DepthMap disparity_to_depth(const DisparityMap& pred, const AlignStats& frame) {
  const AlignStats own = align_stats(pred);
  Raster out(pred.height(), pred.width(), 1);
  Mask valid(pred.height(), pred.width(), false);
  auto p = pred.values.values();
  auto o = out.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!pred.valid.valid(i)) continue;
    const double d = (p[i] - own.t) / own.s * frame.s + frame.t;
    if (d > 0) {
      o[i] = 1.0 / d;
      valid.set(i, true);
    }
  }
  return DepthMap(std::move(out), std::move(valid));
}

}  // namespace pano
