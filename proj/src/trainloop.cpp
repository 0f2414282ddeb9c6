#include "pano/trainloop.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "pano/rng.hpp"

namespace pano {

// ---- batches -------------------------------------------------------------

BatchCounts batch_counts(const BatchSpec& spec) {
  if (spec.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (spec.gt_parts < 0 || spec.pseudo_parts < 0 || spec.gt_parts + spec.pseudo_parts == 0)
    throw ConfigError("ratio parts must be non-negative and not both zero");
  const int parts = spec.gt_parts + spec.pseudo_parts;
  if ((spec.batch_size * spec.gt_parts) % parts != 0)
    throw ConfigError("batch size " + std::to_string(spec.batch_size) + " cannot be split " +
                      std::to_string(spec.gt_parts) + ":" + std::to_string(spec.pseudo_parts) + " exactly");
  const int n_gt = spec.batch_size * spec.gt_parts / parts;
  return {n_gt, spec.batch_size - n_gt};
}

namespace {

constexpr std::uint64_t kLabeledPool = 1;
constexpr std::uint64_t kPseudoPool = 2;
constexpr std::uint64_t kRotationTag = 3;

std::vector<std::size_t> pool_permutation(std::size_t n, std::uint64_t seed, std::uint64_t pool, std::uint64_t pass) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, {pool, pass}));
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
  return p;
}

struct PoolPick {
  std::size_t index;
  std::uint64_t pass;
};

std::vector<PoolPick> take(std::size_t pool_size, std::uint64_t start, int count, std::uint64_t seed,
                           std::uint64_t pool) {
  std::vector<PoolPick> out;
  std::uint64_t cached_pass = ~0ULL;
  std::vector<std::size_t> perm;
  for (int k = 0; k < count; ++k) {
    const std::uint64_t pos = start + std::uint64_t(k);
    const std::uint64_t pass = pos / pool_size;
    if (pass != cached_pass) {
      perm = pool_permutation(pool_size, seed, pool, pass);
      cached_pass = pass;
    }
    out.push_back({perm[pos % pool_size], pass});
  }
  return out;
}

}  // namespace

Batch compose_batch(std::size_t n_labeled, std::size_t n_pseudo, const BatchSpec& spec, std::uint64_t batch_index) {
  const BatchCounts counts = batch_counts(spec);
  if (counts.labeled > 0 && n_labeled == 0) throw ConfigError("labeled pool is empty but the ratio requires it");
  if (counts.pseudo > 0 && n_pseudo == 0) throw ConfigError("pseudo pool is empty but the ratio requires it");
  Batch b;
  if (counts.labeled > 0)
    for (const auto& p : take(n_labeled, batch_index * counts.labeled, counts.labeled, spec.seed, kLabeledPool))
      b.labeled.push_back(p.index);
  if (counts.pseudo > 0)
    for (const auto& p : take(n_pseudo, batch_index * counts.pseudo, counts.pseudo, spec.seed, kPseudoPool))
      b.pseudo.push_back({p.index, p.pass});
  return b;
}

std::uint64_t rotation_seed(std::uint64_t seed, const PseudoDraw& d, int draw) {
  return derive_seed(seed, {kRotationTag, std::uint64_t(d.sample), d.epoch, std::uint64_t(draw)});
}

// ---- predictors ----------------------------------------------------------

double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

GridPredictor::GridPredictor(int grid_h, std::uint64_t init_seed, double center, double spread) : gh_(grid_h) {
  if (grid_h <= 0) throw ConfigError("grid height must be positive");
  params_.resize(std::size_t(grid_h) * 2 * grid_h);
  std::mt19937_64 rng(init_seed);
  for (double& p : params_) p = center + uniform(rng, -spread, spread);
}

const GatherPlan& GridPredictor::plan(int h) const {
  if (!plan_ || plan_->out_height() != h) {
    std::vector<GatherPlan::Tap> taps(std::size_t(h) * 2 * h);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < 2 * h; ++c) taps[std::size_t(r) * 2 * h + c] = erp_tap(erp_pixel_to_spherical(r, c, h, 2 * h), gh_, 2 * gh_);
    plan_.emplace(h, 2 * h, gh_, 2 * gh_, std::move(taps));
  }
  return *plan_;
}

Raster GridPredictor::pre_activation(int h) const {
  Raster grid(gh_, 2 * gh_, 1);
  std::copy(params_.begin(), params_.end(), grid.values().begin());
  return plan(h).apply(grid);
}

Raster GridPredictor::predict(int h) const {
  Raster z = pre_activation(h);
  for (double& x : z.values()) x = softplus(x);
  return z;
}

Raster GridPredictor::forward(const Raster&, int h) const { return predict(h); }

std::vector<double> GridPredictor::backward(const Raster&, const Raster& grad_out) const {
  const int h = grad_out.height();
  Raster local = pre_activation(h);
  auto z = local.values();
  auto g = grad_out.values();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = g[i] * sigmoid(z[i]);
  const Raster back = plan(h).apply_transpose(local);
  return {back.values().begin(), back.values().end()};
}

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'G', 'R', 'D'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated checkpoint");
  return v;
}

}  // namespace

// Layout (little-endian): "PGRD", u32 version, u32 gh, u32 gw, u32 transform, gh*gw f64.
void GridPredictor::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, std::uint32_t(gh_));
  put<std::uint32_t>(os, std::uint32_t(2 * gh_));
  put<std::uint32_t>(os, kSoftplus);
  for (double p : params_) put<double>(os, p);
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

GridPredictor GridPredictor::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("not a grid checkpoint");
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  const auto gh = get<std::uint32_t>(is), gw = get<std::uint32_t>(is);
  if (get<std::uint32_t>(is) != kSoftplus) throw DataError("unknown output transform");
  if (gh == 0 || gw != 2 * gh) throw DataError("checkpoint grid must be gh x 2gh");
  GridPredictor g;
  g.gh_ = int(gh);
  g.params_.resize(std::size_t(gh) * gw);
  for (double& p : g.params_) p = get<double>(is);
  return g;
}

// ---- data ----------------------------------------------------------------

TrainingPools load_pools(const DatasetManifest& labeled, const DatasetManifest& unlabeled) {
  TrainingPools pools;
  auto check_h = [&pools](const Raster& r, const std::string& id) {
    if (pools.erp_h == 0) pools.erp_h = r.height();
    if (r.height() != pools.erp_h) throw DataError("panorama " + id + " differs in resolution from the pool");
  };
  for (const auto& rec : labeled.records) {
    if (!rec.depth) throw DataError("labeled pool record " + rec.id + " has no depth");
    LabeledItem item{rec.id, load_rgb8(labeled.resolve(rec.rgb)),
                     load_depth(labeled.resolve(*rec.depth), labeled.depth_png_scale()), {}};
    if (!item.depth.valid.matches(item.rgb)) throw DataError("depth shape differs from RGB for " + rec.id);
    if (rec.mask) item.depth.valid = item.depth.valid & load_mask(labeled.resolve(*rec.mask));
    item.disparity = depth_to_disparity(item.depth);
    check_h(item.rgb, rec.id);
    pools.labeled.push_back(std::move(item));
  }
  for (const auto& rec : unlabeled.records) {
    UnlabeledItem item{rec.id, load_rgb8(unlabeled.resolve(rec.rgb)), std::nullopt};
    if (rec.mask) item.mask = load_mask(unlabeled.resolve(*rec.mask));
    if (item.mask && !item.mask->matches(item.rgb)) throw DataError("mask shape differs from RGB for " + rec.id);
    check_h(item.rgb, rec.id);
    pools.unlabeled.push_back(std::move(item));
  }
  return pools;
}

// ---- losses --------------------------------------------------------------

namespace {

struct TermResult {
  double loss = 0;
  Raster grad;
  AlignStats stats;
};

/// One affine-invariant term; nullopt when the pair is degenerate on its joint mask.
std::optional<TermResult> term(const Raster& pred, const Raster& target, const Mask& mask,
                               const std::optional<AlignStats>& frozen) {
  const DisparityMap p(pred), t(target, mask);
  try {
    if (frozen) return TermResult{affine_invariant_loss_frozen(p, *frozen, t, mask), {}, *frozen};
    const AlignStats st = align_stats(p, mask);
    LossAndGrad lg = affine_invariant_loss_grad(p, t, mask);
    return TermResult{lg.loss, std::move(lg.grad), st};
  } catch (const DegenerateMap&) {
    return std::nullopt;
  } catch (const InsufficientData&) {
    return std::nullopt;
  }
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& g, double k) {
  if (acc.empty()) acc.assign(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += k * g[i];
}

}  // namespace

BatchEval evaluate_batch(const Predictor& model, const PreparedBatch& batch, const LossWeights& weights,
                         const FrozenStats* frozen, int face_px) {
  BatchEval ev;
  const int h = batch.erp_h;
  const bool replay = frozen != nullptr;

  // Labeled term.
  std::vector<double> grad_gt;
  double sum_gt = 0;
  std::size_t n_gt = 0;
  for (std::size_t k = 0; k < batch.labeled.size(); ++k) {
    const LabeledItem& item = *batch.labeled[k];
    const Raster pred = model.forward(item.rgb, h);
    const Mask& mask = item.disparity.valid;
    std::optional<AlignStats> fz;
    if (replay) fz = frozen->labeled.at(k);
    auto t = term(pred, item.disparity.values, mask, fz);
    if (!t) throw DegenerateMap("labeled sample " + item.id + " is degenerate");
    sum_gt += t->loss;
    ++n_gt;
    ev.stats.labeled.push_back(t->stats);
    if (!replay) add_scaled(grad_gt, model.backward(item.rgb, t->grad), 1.0);
  }

  // Pseudo term: prediction gathered onto the faces of the recorded rotation.
  std::vector<double> grad_ps;
  double sum_ps = 0;
  std::size_t n_ps = 0;
  for (std::size_t k = 0; k < batch.pseudo.size(); ++k) {
    const PseudoSample& ps = batch.pseudo[k];
    const UnlabeledItem& item = *batch.pseudo_items[k];
    const int fw = face_px > 0 ? face_px : ps.pseudo.width();
    const auto intr = CubeIntrinsics::cube(fw);
    const Raster pred = model.forward(item.rgb, h);
    const Rotation to_world = ps.rotation.transpose();

    std::array<std::optional<AlignStats>, 6> used{};
    double face_sum = 0;
    int faces = 0;
    Raster erp_grad(h, 2 * h, 1);
    for (CubeFace f : kCubeFaces) {
      const int fi = int(f);
      if (!ps.usable[fi]) continue;
      if (replay && !frozen->pseudo.at(k)[fi]) continue;
      const GatherPlan plan = camera_gather_plan(h, to_world * face_rotation(f), intr);
      const Raster pred_face = plan.apply(pred);
      std::optional<AlignStats> fz;
      if (replay) fz = frozen->pseudo.at(k)[fi];
      auto t = term(pred_face, ps.pseudo[f], ps.masks[fi], fz);
      if (!t) continue;
      used[fi] = t->stats;
      face_sum += t->loss;
      ++faces;
      if (!replay) {
        const Raster back = plan.apply_transpose(t->grad);
        auto eg = erp_grad.values();
        auto bg = back.values();
        for (std::size_t i = 0; i < eg.size(); ++i) eg[i] += bg[i];
      }
    }
    ev.stats.pseudo.push_back(used);
    if (faces == 0) continue;
    sum_ps += face_sum / faces;
    ++n_ps;
    if (!replay) {
      for (double& g : erp_grad.values()) g /= faces;
      add_scaled(grad_ps, model.backward(item.rgb, erp_grad), 1.0);
    }
  }

  double wsum = 0, total = 0;
  if (n_gt > 0) {
    ev.loss.gt = sum_gt / double(n_gt);
    wsum += weights.gt;
    total += weights.gt * *ev.loss.gt;
  }
  if (n_ps > 0) {
    ev.loss.pseudo = sum_ps / double(n_ps);
    wsum += weights.pseudo;
    total += weights.pseudo * *ev.loss.pseudo;
  }
  if (wsum <= 0) return ev;
  ev.loss.total = total / wsum;
  if (!replay) {
    const std::size_t np = model.parameters().size();
    ev.grad.assign(np, 0.0);
    if (n_gt > 0) add_scaled(ev.grad, grad_gt, weights.gt / (wsum * double(n_gt)));
    if (n_ps > 0) add_scaled(ev.grad, grad_ps, weights.pseudo / (wsum * double(n_ps)));
  }
  return ev;
}

// ---- training ------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
  if (face_px < 1) throw ConfigError("face_px must be positive");
  if (grid_h < 1) throw ConfigError("grid_h must be positive");
  if (rotation_multiplicity < 1) throw ConfigError("rotation_multiplicity must be at least 1");
  if (loss_weights.gt < 0 || loss_weights.pseudo < 0) throw ConfigError("loss weights must be non-negative");
  if (!std::isfinite(init_center) || !(init_spread >= 0)) throw ConfigError("bad grid initialization");
  batch_counts(batch);
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.face_px = j.value("face_px", c.face_px);
    if (j.contains("rotation_mode")) c.rotation_mode = rotation_mode_from_string(j["rotation_mode"].get<std::string>());
    c.loss_weights.gt = j.value("loss_weight_gt", c.loss_weights.gt);
    c.loss_weights.pseudo = j.value("loss_weight_pseudo", c.loss_weights.pseudo);
    c.batch.batch_size = j.value("batch_size", c.batch.batch_size);
    c.batch.gt_parts = j.value("gt_parts", c.batch.gt_parts);
    c.batch.pseudo_parts = j.value("pseudo_parts", c.batch.pseudo_parts);
    c.batch.seed = j.value("seed", c.batch.seed);
    c.grid_h = j.value("grid_h", c.grid_h);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.init_center = j.value("init_center", c.init_center);
    c.init_spread = j.value("init_spread", c.init_spread);
    c.rotation_multiplicity = j.value("rotation_multiplicity", c.rotation_multiplicity);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"n_steps", c.n_steps},
          {"face_px", c.face_px},
          {"rotation_mode", std::string(to_string(c.rotation_mode))},
          {"loss_weight_gt", c.loss_weights.gt},
          {"loss_weight_pseudo", c.loss_weights.pseudo},
          {"batch_size", c.batch.batch_size},
          {"gt_parts", c.batch.gt_parts},
          {"pseudo_parts", c.batch.pseudo_parts},
          {"seed", c.batch.seed},
          {"grid_h", c.grid_h},
          {"init_seed", c.init_seed},
          {"init_center", c.init_center},
          {"init_spread", c.init_spread},
          {"rotation_multiplicity", c.rotation_multiplicity},
          {"workers", c.workers}};
}

std::string to_jsonl(const LogRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss_total"] = opt(r.loss.total);
  j["loss_gt"] = opt(r.loss.gt);
  j["loss_pseudo"] = opt(r.loss.pseudo);
  j["lr"] = r.lr;
  if (r.skipped) j["skipped"] = true;
  return j.dump();
}

PreparedBatch prepare_batch(const TrainingPools& pools, const Batch& batch, TeacherBackend& teacher,
                            const TrainConfig& cfg) {
  PreparedBatch pb;
  pb.erp_h = pools.erp_h;
  for (std::size_t i : batch.labeled) pb.labeled.push_back(&pools.labeled.at(i));
  const PseudoConfig pc{cfg.face_px, cfg.rotation_mode, cfg.workers};
  for (const auto& d : batch.pseudo) {
    const UnlabeledItem& item = pools.unlabeled.at(d.sample);
    for (int draw = 0; draw < cfg.rotation_multiplicity; ++draw) {
      pb.pseudo_items.push_back(&item);
      pb.pseudo.push_back(generate_pseudo(item.id, item.rgb, item.mask ? &*item.mask : nullptr, teacher,
                                          rotation_seed(cfg.batch.seed, d, draw), pc));
    }
  }
  return pb;
}

LogRecord step(GridPredictor& model, const PreparedBatch& batch, const TrainConfig& cfg, int step_index) {
  LogRecord rec;
  rec.step = step_index;
  rec.lr = cfg.learning_rate;
  BatchEval ev = evaluate_batch(model, batch, cfg.loss_weights, nullptr, cfg.face_px);
  rec.loss = ev.loss;
  if (!ev.loss.total) {
    rec.skipped = true;
    std::cerr << "warning: step " << step_index << " skipped, no usable loss term\n";
    return rec;
  }
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * ev.grad[i];
  return rec;
}

TrainResult train(const TrainingPools& pools, TeacherBackend& teacher, const TrainConfig& cfg,
                  const std::function<void(const LogRecord&)>& on_step) {
  cfg.validate();
  if (pools.erp_h == 0) throw ConfigError("training pools are empty");
  TrainResult out;
  out.model = GridPredictor(cfg.grid_h, cfg.init_seed, cfg.init_center, cfg.init_spread);
  for (int s = 0; s < cfg.n_steps; ++s) {
    const Batch b = compose_batch(pools.labeled.size(), pools.unlabeled.size(), cfg.batch, std::uint64_t(s));
    const PreparedBatch pb = prepare_batch(pools, b, teacher, cfg);
    out.log.push_back(step(out.model, pb, cfg, s));
    if (on_step) on_step(out.log.back());
  }
  return out;
}

TrainResult train(const DatasetManifest& labeled, const DatasetManifest& unlabeled, TeacherBackend& teacher,
                  const TrainConfig& cfg, const std::function<void(const LogRecord&)>& on_step) {
  cfg.validate();
  return train(load_pools(labeled, unlabeled), teacher, cfg, on_step);
}

EvalReport evaluate_relative_disparity(const Raster& pred_disparity, const DepthMap& gt) {
  Raster inv = gt.values;
  auto v = inv.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = gt.valid.valid(i) && v[i] > 0 ? 1.0 / v[i] : 0.0;
  const Mask gt_ok = eval_mask(gt);
  const AlignStats frame = align_stats(DisparityMap(inv, gt_ok));
  const DepthMap pred = disparity_to_depth(DisparityMap(pred_disparity), frame);
  return compute_metrics(pred, DepthMap(gt.values, gt_ok), Alignment::Median);
}

}  // namespace pano
