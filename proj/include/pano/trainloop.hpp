#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pano/dataio.hpp"
#include "pano/depthspace.hpp"
#include "pano/metrics.hpp"
#include "pano/pseudolabel.hpp"
#include "pano/resample.hpp"

namespace pano {

// ---- batches -------------------------------------------------------------

/// batch_size entries split labeled:pseudo = gt_parts:pseudo_parts, exactly.
struct BatchSpec {
  int batch_size = 8;
  int gt_parts = 1;
  int pseudo_parts = 1;
  std::uint64_t seed = 0;
};

struct BatchCounts {
  int labeled = 0;
  int pseudo = 0;
};

/// Throws ConfigError unless the ratio divides batch_size exactly.
BatchCounts batch_counts(const BatchSpec& spec);

struct PseudoDraw {
  std::size_t sample = 0;
  /// Pass number over the pseudo pool; one rotation per (sample, epoch, draw).
  std::uint64_t epoch = 0;
};

struct Batch {
  std::vector<std::size_t> labeled;
  std::vector<PseudoDraw> pseudo;
};

/// Batch number `batch_index`. Each pool walks its own permutation, reshuffled on every
/// pass with a key derived from (seed, pool, pass), so the two pools cycle independently.
Batch compose_batch(std::size_t n_labeled, std::size_t n_pseudo, const BatchSpec& spec, std::uint64_t batch_index);

/// Rotation seed for one draw of one pseudo sample.
std::uint64_t rotation_seed(std::uint64_t seed, const PseudoDraw& d, int draw);

// ---- predictors ----------------------------------------------------------

/// Differentiable 360 depth model producing a positive disparity map.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Raster forward(const Raster& rgb, int h) const = 0;
  /// d loss / d parameters given d loss / d output (one-channel ERP of height h).
  virtual std::vector<double> backward(const Raster& rgb, const Raster& grad_out) const = 0;
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
};

/// A gh x 2gh grid of free parameters, bilinearly upsampled over the sphere (wrapping in
/// longitude) and mapped through softplus. Ignores the input image: it can fit exactly
/// one scene, which is all a desk-scale pipeline check needs.
class GridPredictor : public Predictor {
 public:
  static constexpr std::uint32_t kSoftplus = 1;

  GridPredictor() = default;
  /// Parameters start at `center` + uniform noise in [-spread, spread].
  GridPredictor(int grid_h, std::uint64_t init_seed, double center = 0.5, double spread = 0.5);

  int grid_height() const { return gh_; }
  int grid_width() const { return 2 * gh_; }

  Raster forward(const Raster& rgb, int h) const override;
  std::vector<double> backward(const Raster& rgb, const Raster& grad_out) const override;
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  /// Output at ERP height h, independent of any image.
  Raster predict(int h) const;

  void save(const std::filesystem::path& path) const;
  static GridPredictor load(const std::filesystem::path& path);

 private:
  const GatherPlan& plan(int h) const;
  Raster pre_activation(int h) const;

  int gh_ = 0;
  std::vector<double> params_;
  mutable std::optional<GatherPlan> plan_;
};

double softplus(double x);
double sigmoid(double x);

// ---- data ----------------------------------------------------------------

struct LabeledItem {
  std::string id;
  Raster rgb;
  DepthMap depth;
  DisparityMap disparity;  ///< depth_to_disparity(depth)
};

struct UnlabeledItem {
  std::string id;
  Raster rgb;
  std::optional<Mask> mask;
};

struct TrainingPools {
  std::vector<LabeledItem> labeled;
  std::vector<UnlabeledItem> unlabeled;
  /// Common ERP height of every panorama.
  int erp_h = 0;
};

/// Loads every record; all panoramas must share one resolution.
TrainingPools load_pools(const DatasetManifest& labeled, const DatasetManifest& unlabeled);

// ---- losses --------------------------------------------------------------

struct LossWeights {
  double gt = 1.0;
  double pseudo = 1.0;
};

struct PreparedBatch {
  std::vector<const LabeledItem*> labeled;
  std::vector<const UnlabeledItem*> pseudo_items;
  std::vector<PseudoSample> pseudo;  ///< parallel to pseudo_items
  int erp_h = 0;
};

/// Alignment statistics of the prediction for every loss term, for frozen-statistics replays.
struct FrozenStats {
  std::vector<AlignStats> labeled;
  std::vector<std::array<std::optional<AlignStats>, 6>> pseudo;
};

struct LossBreakdown {
  std::optional<double> gt;
  std::optional<double> pseudo;
  std::optional<double> total;
};

struct BatchEval {
  LossBreakdown loss;
  std::vector<double> grad;  ///< d total / d parameters; empty for frozen replays
  FrozenStats stats;
};

/// Labeled term: affine-invariant loss between the ERP prediction and normalized ground-truth
/// disparity, averaged over labeled items. Pseudo term: per item, the prediction is gathered onto
/// each usable face of the recorded rotation and compared with the teacher's face; faces with fewer
/// than two valid pixels or zero spread drop out; per-item means are averaged over items.
/// total = weighted mean of the terms that are present.
///
/// With `frozen`, the prediction's statistics are taken from it instead of recomputed and only
/// losses are returned; differentiating that replay reproduces `grad`.
BatchEval evaluate_batch(const Predictor& model, const PreparedBatch& batch, const LossWeights& weights,
                         const FrozenStats* frozen = nullptr, int face_px = 0);

// ---- training ------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.1;
  int n_steps = 500;
  int face_px = 16;
  RotationMode rotation_mode = RotationMode::FullSO3;
  LossWeights loss_weights;
  BatchSpec batch;
  int grid_h = 16;
  std::uint64_t init_seed = 0;
  /// Grid parameters start at init_center + uniform noise in [-init_spread, init_spread].
  double init_center = 0.5;
  double init_spread = 0.5;
  /// Rotations drawn per pseudo entry; their face losses are pooled.
  int rotation_multiplicity = 1;
  int workers = 1;

  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const TrainConfig& c);

struct LogRecord {
  int step = 0;
  LossBreakdown loss;
  double lr = 0;
  bool skipped = false;
};

/// {"step", "loss_total", "loss_gt", "loss_pseudo", "lr"}; absent terms are null.
std::string to_jsonl(const LogRecord& r);

PreparedBatch prepare_batch(const TrainingPools& pools, const Batch& batch, TeacherBackend& teacher,
                            const TrainConfig& cfg);

/// One gradient-descent update. Returns the log entry; a batch with no usable term is skipped.
LogRecord step(GridPredictor& model, const PreparedBatch& batch, const TrainConfig& cfg, int step_index);

struct TrainResult {
  GridPredictor model;
  std::vector<LogRecord> log;
};

TrainResult train(const TrainingPools& pools, TeacherBackend& teacher, const TrainConfig& cfg,
                  const std::function<void(const LogRecord&)>& on_step = {});
TrainResult train(const DatasetManifest& labeled, const DatasetManifest& unlabeled, TeacherBackend& teacher,
                  const TrainConfig& cfg, const std::function<void(const LogRecord&)>& on_step = {});

/// Maps a relative disparity prediction into the ground truth's disparity frame (median and
/// MAD of 1/gt), inverts it to depth, and evaluates with median alignment.
EvalReport evaluate_relative_disparity(const Raster& pred_disparity, const DepthMap& gt);

}  // namespace pano
