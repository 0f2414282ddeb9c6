#pragma once

#include <span>
#include <vector>

#include "pano/raster.hpp"

namespace pano {

/// Robust location/scale of a map: t = median, s = mean |x - t|.
struct AlignStats {
  double t = 0;
  double s = 0;
};

/// Median of `values`; even counts average the two central order statistics.
/// Reorders `values`. Throws InsufficientData when empty.
double median_inplace(std::vector<double>& values);

/// Values at pixels where `mask` is set, in raster order.
std::vector<double> gather_valid(const Raster& values, const Mask& mask);

/// 1/d on valid pixels followed by min-max normalization to [0, 1] over valid pixels.
/// Invalid pixels keep their input value and stay masked.
DisparityMap depth_to_disparity(const DepthMap& depth);

AlignStats align_stats(std::span<const double> valid_values);
/// Statistics over pixels valid in both the map and `mask`.
AlignStats align_stats(const ScalarMap& m, const Mask& mask);
AlignStats align_stats(const ScalarMap& m);

/// Mean over jointly valid pixels of |(p - t_p)/s_p - (g - t_g)/s_g|, with each map's
/// statistics computed on the joint mask (mask & pred.valid & gt.valid).
double affine_invariant_loss(const DisparityMap& pred, const DisparityMap& gt, const Mask& mask);

struct LossAndGrad {
  double loss = 0;
  Raster grad;  ///< d loss / d pred; zero outside the joint mask
  std::size_t n_valid = 0;
};

/// Loss and its gradient with respect to `pred`, holding the prediction's median and
/// MAD fixed (stop-gradient through the alignment statistics).
LossAndGrad affine_invariant_loss_grad(const DisparityMap& pred, const DisparityMap& gt, const Mask& mask);

/// Loss with the prediction's statistics supplied instead of recomputed. Differentiating this
/// with respect to pred is exactly what affine_invariant_loss_grad returns.
double affine_invariant_loss_frozen(const DisparityMap& pred, const AlignStats& pred_stats,
                                    const DisparityMap& gt, const Mask& mask);

/// pred * median(gt) / median(pred), medians over pixels valid in pred, gt and `mask`.
DepthMap median_align_depth(const DepthMap& pred, const DepthMap& gt, const Mask& mask);

}  // namespace pano

namespace pano {

/// Re-expresses a relative disparity map in a reference frame: normalize by its own statistics,
/// rescale to `frame`, invert to depth. Pixels whose mapped disparity is not positive are invalid.
DepthMap disparity_to_depth(const DisparityMap& pred, const AlignStats& frame);

}  // namespace pano
