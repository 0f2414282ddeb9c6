#include "pano/metrics.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>
#include <vector>

#include "pano/depthspace.hpp"

namespace pano {

Mask eval_mask(const DepthMap& gt) {
  Mask m(gt.height(), gt.width(), false);
  auto g = gt.values.values();
  for (std::size_t i = 0; i < g.size(); ++i) m.set(i, gt.valid.valid(i) && g[i] > 0 && g[i] <= kMaxEvalDepth);
  return m;
}

EvalReport compute_metrics(const DepthMap& pred, const DepthMap& gt, Alignment align) {
  if (!pred.values.same_shape(gt.values)) throw InvalidInput("metrics: shape mismatch");
  const Mask mask = eval_mask(gt) & pred.valid;
  const std::size_t n = mask.count();
  if (n == 0) throw EmptyEvaluation("no pixel passes the evaluation mask");

  const DepthMap aligned = align == Alignment::Median ? median_align_depth(pred, gt, mask) : pred;
  auto a = aligned.values.values();
  auto d = gt.values.values();

  double abs_rel = 0, mae = 0, se = 0, se_log = 0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.valid(i)) continue;
    if (!(a[i] > 0) || !std::isfinite(a[i])) throw InvalidInput("predicted depth must be positive and finite");
    const double diff = a[i] - d[i];
    abs_rel += std::abs(diff) / d[i];
    mae += std::abs(diff);
    se += diff * diff;
    const double ld = std::log(a[i]) - std::log(d[i]);
    se_log += ld * ld;
    const double ratio = std::max(a[i] / d[i], d[i] / a[i]);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
  }
  const double m = double(n);
  return {abs_rel / m, mae / m, std::sqrt(se / m), std::sqrt(se_log / m), d1 / m, d2 / m, d3 / m, n};
}

EvalReport mean_report(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw EmptyEvaluation("no reports to aggregate");
  EvalReport out;
  for (const auto& r : reports) {
    out.abs_rel += r.abs_rel;
    out.mae += r.mae;
    out.rmse += r.rmse;
    out.rmse_log += r.rmse_log;
    out.delta1 += r.delta1;
    out.delta2 += r.delta2;
    out.delta3 += r.delta3;
    out.n_pixels += r.n_pixels;
  }
  const double k = double(reports.size());
  out.abs_rel /= k;
  out.mae /= k;
  out.rmse /= k;
  out.rmse_log /= k;
  out.delta1 /= k;
  out.delta2 /= k;
  out.delta3 /= k;
  return out;
}

namespace {

nlohmann::ordered_json as_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["abs_rel"] = r.abs_rel;
  j["mae"] = r.mae;
  j["rmse"] = r.rmse;
  j["rmse_log"] = r.rmse_log;
  j["delta1"] = r.delta1;
  j["delta2"] = r.delta2;
  j["delta3"] = r.delta3;
  j["n_pixels"] = r.n_pixels;
  return j;
}

}  // namespace

std::string to_kv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  const auto j = as_json(r);
  for (const auto& [k, v] : j.items()) {
    os << (first ? "" : " ") << k << '=' << v.dump();
    first = false;
  }
  return os.str();
}

std::string to_json(const EvalReport& r) { return as_json(r).dump(); }

EvalReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.abs_rel = j.at("abs_rel").get<double>();
  r.mae = j.at("mae").get<double>();
  r.rmse = j.at("rmse").get<double>();
  r.rmse_log = j.at("rmse_log").get<double>();
  r.delta1 = j.at("delta1").get<double>();
  r.delta2 = j.at("delta2").get<double>();
  r.delta3 = j.at("delta3").get<double>();
  r.n_pixels = j.at("n_pixels").get<std::size_t>();
  return r;
}

}  // namespace pano
