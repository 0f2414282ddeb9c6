#pragma once

#include <cstddef>
#include <string>

#include "pano/raster.hpp"

namespace pano {

/// Ground truth beyond this range (meters) is excluded from evaluation.
inline constexpr double kMaxEvalDepth = 10.0;

struct EvalReport {
  double abs_rel = 0;
  double mae = 0;
  double rmse = 0;
  double rmse_log = 0;
  double delta1 = 0;
  double delta2 = 0;
  double delta3 = 0;
  std::size_t n_pixels = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

enum class Alignment { Median, None };

/// Valid iff gt's own mask is set and 0 < gt <= 10.
Mask eval_mask(const DepthMap& gt);

/// AbsRel, MAE, RMSE, RMSE(log, natural), and delta_j = share of max(a/d, d/a) < 1.25^j,
/// over pixels passing eval_mask(gt) and pred's mask. Optional median alignment first.
EvalReport compute_metrics(const DepthMap& pred, const DepthMap& gt, Alignment align);

/// Field-wise mean of reports (n_pixels summed).
EvalReport mean_report(const std::vector<EvalReport>& reports);

/// "key=value" pairs separated by spaces, fixed field order.
std::string to_kv(const EvalReport& r);
/// JSON object with keys abs_rel, mae, rmse, rmse_log, delta1, delta2, delta3, n_pixels.
std::string to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

}  // namespace pano
