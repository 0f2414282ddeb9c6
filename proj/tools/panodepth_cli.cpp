// panodepth: command-line front end for projection, pseudo-labeling, training and evaluation.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pano/dataio.hpp"
#include "pano/depthspace.hpp"
#include "pano/metrics.hpp"
#include "pano/pseudolabel.hpp"
#include "pano/resample.hpp"
#include "pano/rng.hpp"
#include "pano/scene.hpp"
#include "pano/teacher.hpp"
#include "pano/trainloop.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pano;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

bool is_pfm(const fs::path& p) { return p.extension() == ".pfm"; }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  os.close();
  if (!os) throw DataError("cannot write " + path.string());
}

/// Writes next to the target and renames, so readers never see a half-written file.
void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_text(tmp, text);
  fs::rename(tmp, path);
}

json rotation_json(const Rotation& r) {
  const auto& m = r.rows();
  return json::array({{m[0], m[1], m[2]}, {m[3], m[4], m[5]}, {m[6], m[7], m[8]}});
}

/// Rewrites relative paths of `m` so they resolve from `new_base`.
DatasetManifest relocate(DatasetManifest m, const fs::path& new_base) {
  const fs::path base = fs::absolute(new_base).lexically_normal();
  auto fix = [&](std::string& p) {
    if (fs::path(p).is_absolute()) return;
    p = fs::absolute(m.resolve(p)).lexically_normal().lexically_relative(base).generic_string();
  };
  for (auto& r : m.records) {
    fix(r.rgb);
    if (r.depth) fix(*r.depth);
    if (r.mask) fix(*r.mask);
    if (r.pseudo) fix(*r.pseudo);
  }
  m.base_dir = new_base;
  return m;
}

// ---- project ---------------------------------------------------------------

struct ProjectArgs {
  std::string input, output, out_dir, faces_dir, id, mask, mask_output, mode = "full_so3";
  int face_px = 256, height = 0, patches = 20, patch_px = 128, workers = 1;
  double fov_deg = 90;
  std::uint64_t seed = 0;
};

struct Loaded {
  Raster image;
  bool pfm = false;
};

Loaded load_any(const fs::path& p) {
  if (is_pfm(p)) return {read_pfm(p), true};
  return {load_rgb8(p), false};
}

void save_any(const fs::path& p, const Raster& r) {
  if (is_pfm(p)) {
    write_pfm(p, r);
  } else {
    write_rgb8(p, r);
  }
}

std::string stem_or(const std::string& id, const fs::path& input) { return id.empty() ? input.stem().string() : id; }

int run_e2c(const ProjectArgs& a) {
  const Loaded in = load_any(a.input);
  std::optional<Mask> mask;
  if (!a.mask.empty()) mask = load_mask(a.mask);
  const std::string id = stem_or(a.id, a.input);
  const std::string ext = in.pfm ? ".pfm" : ".png";
  const CubeProjection cube = erp_to_cube(in.image, a.face_px, mask ? &*mask : nullptr, a.workers);
  fs::create_directories(a.out_dir);
  for (CubeFace f : kCubeFaces) {
    const std::string stem = id + '_' + face_letter(f);
    save_any(fs::path(a.out_dir) / (stem + ext), cube.faces[f]);
    if (mask) write_mask(fs::path(a.out_dir) / (stem + "_mask.png"), cube.masks[int(f)]);
  }
  const Raster back = cube_to_erp(cube.faces, in.image.height(), a.workers);
  double peak = 255.0;
  if (in.pfm) {
    peak = 0;
    for (double v : in.image.values())
      if (std::isfinite(v)) peak = std::max(peak, std::abs(v));
  }
  const double db = psnr(in.image, back, peak);
  json summary{{"id", id}, {"face_px", a.face_px}, {"roundtrip_psnr_db", std::isinf(db) ? json(nullptr) : json(db)}};
  write_text(fs::path(a.out_dir) / (id + "_e2c.json"), summary.dump(1) + "\n");
  std::cout << "wrote 6 faces of " << a.face_px << "px to " << a.out_dir << "; round-trip PSNR "
            << (std::isinf(db) ? std::string("inf") : fmt(db, 2)) << " dB\n";
  return kOk;
}

int run_c2e(const ProjectArgs& a) {
  if (a.height <= 0) throw InvalidInput("--height must be positive");
  CubeFaceSet faces;
  bool pfm = false;
  for (CubeFace f : kCubeFaces) {
    const fs::path base = fs::path(a.faces_dir) / (a.id + '_' + face_letter(f));
    fs::path png = base, pf = base;
    png += ".png";
    pf += ".pfm";
    if (fs::exists(pf)) {
      faces[f] = read_pfm(pf);
      pfm = true;
    } else if (fs::exists(png)) {
      faces[f] = load_rgb8(png, false);
    } else {
      throw DataError("missing face " + base.string() + ".{png,pfm}");
    }
  }
  faces.validate();
  const Raster erp = cube_to_erp(faces, a.height, a.workers);
  if (is_pfm(a.output) != pfm) throw InvalidInput("output extension must match the face format");
  save_any(a.output, erp);
  std::cout << "wrote " << a.height << "x" << 2 * a.height << " ERP to " << a.output << "\n";
  return kOk;
}

int run_rotate(const ProjectArgs& a) {
  const Loaded in = load_any(a.input);
  std::optional<Mask> mask;
  if (!a.mask.empty()) mask = load_mask(a.mask);
  const RotationMode mode = rotation_mode_from_string(a.mode);
  const Rotation r = random_rotation(a.seed, mode);
  const ErpWarp w = rotate_erp(in.image, r, mask ? &*mask : nullptr, a.workers);
  if (fs::path(a.output).has_parent_path()) fs::create_directories(fs::path(a.output).parent_path());
  save_any(a.output, w.image);
  if (mask && !a.mask_output.empty()) write_mask(a.mask_output, w.mask);
  fs::path rec = a.output;
  rec.replace_extension(".rotation.json");
  json j{{"seed", a.seed}, {"mode", a.mode}, {"rotation", rotation_json(r)}, {"angle_rad", r.angle()}};
  write_text(rec, j.dump(1) + "\n");
  std::cout << "rotated by " << fmt(r.angle() * 180 / kPi, 3) << " deg; matrix in " << rec.string() << "\n";
  return kOk;
}

int run_tangent(const ProjectArgs& a) {
  const Loaded in = load_any(a.input);
  std::optional<Mask> mask;
  if (!a.mask.empty()) mask = load_mask(a.mask);
  const std::string id = stem_or(a.id, a.input);
  const TangentPatches t = erp_to_tangent(in.image, a.patches, a.fov_deg * kPi / 180, a.patch_px,
                                          mask ? &*mask : nullptr, a.workers);
  fs::create_directories(a.out_dir);
  json layout = json::array();
  for (std::size_t i = 0; i < t.patches.size(); ++i) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "_T%02zu", i);
    const std::string stem = id + tag;
    save_any(fs::path(a.out_dir) / (stem + (in.pfm ? ".pfm" : ".png")), t.patches[i]);
    if (mask) write_mask(fs::path(a.out_dir) / (stem + "_mask.png"), t.masks[i]);
    layout.push_back(rotation_json(t.orientations[i]));
  }
  json j{{"id", id}, {"patches", a.patches}, {"fov_deg", a.fov_deg}, {"patch_px", a.patch_px},
         {"orientations", layout}};
  write_text(fs::path(a.out_dir) / (id + "_tangent.json"), j.dump(1) + "\n");
  std::cout << "wrote " << t.patches.size() << " tangent patches to " << a.out_dir << "\n";
  return kOk;
}

// ---- pseudolabel -------------------------------------------------------------

struct PseudoArgs {
  std::string manifest, teacher, out_dir, rotation_mode = "full_so3", scramble = "none";
  std::uint64_t seed = 0;
  int face_px = 256, workers = 1;
  bool per_face = false;
};

int run_pseudolabel(const PseudoArgs& a) {
  const DatasetManifest in = read_manifest(a.manifest);
  const fs::path out = a.out_dir;
  fs::create_directories(out);
  const fs::path manifest_path = out / "pseudo_manifest.jsonl";
  fs::remove(manifest_path);

  MockTeacherOptions mock{scramble_from_string(a.scramble), a.seed, !a.per_face};
  auto teacher = make_teacher(a.teacher, out / "_bridge", mock);
  PseudoConfig cfg{a.face_px, rotation_mode_from_string(a.rotation_mode), a.workers};

  DatasetManifest result = relocate(in, out);
  result.header["pseudo"] = {{"teacher", teacher->info().to_json()},
                             {"seed", a.seed},
                             {"face_px", a.face_px},
                             {"rotation_mode", a.rotation_mode}};
  std::size_t degenerate = 0;
  for (auto& rec : result.records) {
    const SampleRecord* src = in.find(rec.id);
    const std::uint64_t seed = derive_seed(a.seed, {hash_string(rec.id)});
    const PseudoSample s = generate_pseudo(*src, in, *teacher, seed, cfg);
    write_pseudo_bundle(out / rec.id, s, cfg.rotation_mode);
    rec.pseudo = rec.id;
    if (s.usable_faces() < 6) {
      ++degenerate;
      std::cerr << "warning: " << rec.id << ": " << 6 - s.usable_faces() << " face(s) unusable\n";
    }
  }
  write_text_atomic(manifest_path, serialize_manifest(result));
  std::cout << "pseudo-labeled " << result.records.size() << " samples (" << degenerate
            << " with unusable faces) with " << teacher->info().tool << "/" << teacher->info().model << "; manifest "
            << manifest_path.string() << "\n";
  return kOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string pred_manifest, gt_manifest, align = "median", output;
};

json report_json(const EvalReport& r) { return json::parse(to_json(r)); }

int run_eval(const EvalArgs& a) {
  Alignment align;
  if (a.align == "median") {
    align = Alignment::Median;
  } else if (a.align == "none") {
    align = Alignment::None;
  } else {
    throw InvalidInput("--align must be median or none");
  }
  const DatasetManifest pred = read_manifest(a.pred_manifest);
  const DatasetManifest gt = read_manifest(a.gt_manifest);
  std::set<std::string> pid, gid;
  for (const auto& r : pred.records) pid.insert(r.id);
  for (const auto& r : gt.records) gid.insert(r.id);
  if (pid != gid) throw DataError("prediction and ground-truth manifests cover different ids");

  std::vector<EvalReport> reports;
  json samples = json::array();
  for (const auto& g : gt.records) {
    const SampleRecord* p = pred.find(g.id);
    if (!g.depth || !p->depth) throw DataError("sample '" + g.id + "' has no depth in both manifests");
    const DepthMap gd = load_depth(gt.resolve(*g.depth), gt.depth_png_scale());
    const DepthMap pd = load_depth(pred.resolve(*p->depth), pred.depth_png_scale());
    const EvalReport r = compute_metrics(pd, gd, align);
    reports.push_back(r);
    json s = report_json(r);
    s["id"] = g.id;
    samples.push_back(s);
  }
  const EvalReport agg = mean_report(reports);
  json out{{"align", a.align}, {"samples", samples}, {"aggregate", report_json(agg)}};
  if (!a.output.empty()) write_text(a.output, out.dump(1) + "\n");
  std::cout << out.dump() << "\n";
  std::cerr << "AbsRel " << fmt(agg.abs_rel) << "  RMSE " << fmt(agg.rmse) << "  delta1 " << fmt(100 * agg.delta1, 2)
            << "%  over " << reports.size() << " samples\n";
  return kOk;
}

// ---- stats / mask-filter / ingest ----------------------------------------------

int run_stats(const std::vector<std::string>& manifests, const std::string& json_out) {
  std::vector<DatasetManifest> ms;
  for (const auto& p : manifests) ms.push_back(read_manifest(p, false));
  const CorpusStats s = corpus_stats(ms);
  if (!json_out.empty()) write_text(json_out, to_json(s).dump(1) + "\n");
  std::cout << format_table(s);
  return kOk;
}

int run_mask_filter(const std::string& manifest, const std::string& output, const std::string& report,
                    double min_valid) {
  const DatasetManifest in = read_manifest(manifest);
  FilterResult res = apply_validity_filter(in, min_valid);
  const DatasetManifest kept = relocate(res.kept, fs::path(output).parent_path());
  json rej = json::array();
  for (const auto& r : res.rejected) rej.push_back({{"id", r.id}, {"valid_fraction", r.valid_fraction}});
  write_text(output, serialize_manifest(kept));
  if (!report.empty())
    write_text(report, json{{"min_valid_fraction", min_valid},
                            {"kept", kept.records.size()},
                            {"rejected", rej}}
                               .dump(1) +
                           "\n");
  std::cout << "kept " << kept.records.size() << ", rejected " << res.rejected.size() << "\n";
  for (const auto& r : res.rejected) std::cout << "  rejected " << r.id << " (" << fmt(100 * r.valid_fraction, 1) << "% valid)\n";
  return kOk;
}

int run_ingest(const std::string& rgb_dir, const std::string& mask_dir, const std::string& output,
               const std::string& source, const std::string& split) {
  const DatasetManifest m = ingest_external_masks(rgb_dir, mask_dir, {}, source, split_from_string(split));
  write_text(output, serialize_manifest(m));
  std::cout << "ingested " << m.records.size() << " samples into " << output << "\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------------

struct TrainArgs {
  std::string labeled, unlabeled, teacher, out_dir, rotation_mode = "full_so3", scramble = "none";
  std::uint64_t seed = 0;
  int steps = 500, face_px = 16, grid_h = 16, batch_size = 2, gt_parts = 1, pseudo_parts = 1, multiplicity = 1,
      workers = 1;
  double learning_rate = 0.1, weight_gt = 1.0, weight_pseudo = 1.0, init_center = 0.5, init_spread = 0.5;
  bool per_face = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.learning_rate = a.learning_rate;
  cfg.n_steps = a.steps;
  cfg.face_px = a.face_px;
  cfg.rotation_mode = rotation_mode_from_string(a.rotation_mode);
  cfg.loss_weights = {a.weight_gt, a.weight_pseudo};
  cfg.batch = {a.batch_size, a.gt_parts, a.pseudo_parts, a.seed};
  cfg.grid_h = a.grid_h;
  cfg.init_seed = derive_seed(a.seed, {1});
  cfg.init_center = a.init_center;
  cfg.init_spread = a.init_spread;
  cfg.rotation_multiplicity = a.multiplicity;
  cfg.workers = a.workers;
  cfg.validate();

  const DatasetManifest lab = read_manifest(a.labeled);
  const DatasetManifest unl = read_manifest(a.unlabeled);
  const fs::path out = a.out_dir;
  fs::create_directories(out);
  MockTeacherOptions mock{scramble_from_string(a.scramble), a.seed, !a.per_face};
  auto teacher = make_teacher(a.teacher, out / "_bridge", mock);

  std::ofstream log(out / "train_log.jsonl", std::ios::binary);
  std::size_t skipped = 0;
  const TrainResult res = train(lab, unl, *teacher, cfg, [&](const LogRecord& r) {
    log << to_jsonl(r) << '\n';
    if (r.skipped) ++skipped;
  });
  log.close();
  if (!log) throw DataError("cannot write training log");

  res.model.save(out / "model.ckpt");
  const TrainingPools pools = load_pools(lab, unl);
  write_pfm(out / "prediction.pfm", res.model.predict(pools.erp_h));
  json conf = to_json(cfg);
  conf["teacher"] = teacher->info().to_json();
  write_text(out / "config.json", conf.dump(1) + "\n");

  const auto first = res.log.front().loss.total, last = res.log.back().loss.total;
  std::cout << "trained " << cfg.n_steps << " steps (" << skipped << " skipped); loss "
            << (first ? fmt(*first, 5) : "n/a") << " -> " << (last ? fmt(*last, 5) : "n/a") << "; outputs in "
            << out.string() << "\n";
  if (!pools.labeled.empty()) {
    const EvalReport r = evaluate_relative_disparity(res.model.predict(pools.erp_h), pools.labeled.front().depth);
    std::cout << "labeled[0] " << to_kv(r) << "\n";
  }
  return kOk;
}

// ---- pointcloud ------------------------------------------------------------------

int run_pointcloud(const std::string& depth_path, const std::string& rgb_path, const std::string& mask_path,
                   const std::string& output, double scale) {
  const DepthMap d = load_depth(depth_path, scale);
  std::optional<Raster> rgb;
  if (!rgb_path.empty()) {
    rgb = load_rgb8(rgb_path);
    if (rgb->height() != d.height()) throw DataError("RGB and depth resolutions differ");
  }
  Mask valid = d.valid;
  if (!mask_path.empty()) valid = valid & load_mask(mask_path);
  std::ostringstream body;
  std::size_t n = 0;
  char line[160];
  for (int r = 0; r < d.height(); ++r)
    for (int c = 0; c < d.width(); ++c) {
      if (!valid.valid(r, c)) continue;
      const double z = d.values.at(r, c);
      if (!(z > 0) || !std::isfinite(z)) continue;
      const Vec3 q = spherical_to_unit_vec(erp_pixel_to_spherical(r, c, d.height(), d.width())).vec();
      int col[3] = {255, 255, 255};
      if (rgb)
        for (int k = 0; k < 3; ++k) col[k] = int(std::lround(std::clamp(rgb->at(r, c, k), 0.0, 255.0)));
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g %d %d %d\n", z * q.x, z * q.y, z * q.z, col[0], col[1], col[2]);
      body << line;
      ++n;
    }
  std::ostringstream os;
  os << "ply\nformat ascii 1.0\nelement vertex " << n
     << "\nproperty float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
     << body.str();
  write_text(output, os.str());
  std::cout << "wrote " << n << " points to " << output << "\n";
  return kOk;
}

// ---- synth -------------------------------------------------------------------------

struct SynthArgs {
  std::string scene = "unit_sphere_room@0.3,-0.2,0.1", out_dir;
  int height = 32, labeled = 1, unlabeled = 1;
  std::vector<double> mask_valid;
};

/// Mask keeping the bottom rows so that round(fraction * h) rows stay valid.
Mask bottom_rows_mask(int h, double fraction) {
  Mask m(h, 2 * h, false);
  const int keep = int(std::lround(std::clamp(fraction, 0.0, 1.0) * h));
  for (int r = h - keep; r < h; ++r)
    for (int c = 0; c < 2 * h; ++c) m.set(r, c, true);
  return m;
}

int run_synth(const SynthArgs& a) {
  const AnalyticScene scene = AnalyticScene::parse(a.scene);
  const fs::path out = a.out_dir;
  for (const char* d : {"rgb", "depth", "mask"}) fs::create_directories(out / d);
  const Raster rgb = scene.render_rgb(a.height);
  const DepthMap depth = scene.render_depth(a.height);

  DatasetManifest lab, unl;
  lab.header["scene"] = unl.header["scene"] = scene.name();
  char id[32];
  for (int i = 0; i < a.labeled; ++i) {
    std::snprintf(id, sizeof id, "lab%04d", i);
    SampleRecord r;
    r.id = id;
    r.rgb = "rgb/" + r.id + ".png";
    r.depth = "depth/" + r.id + ".png";
    r.source = "synthetic-labeled";
    write_rgb8(out / r.rgb, rgb);
    write_depth_png16(out / *r.depth, depth);
    lab.records.push_back(r);
  }
  for (int i = 0; i < a.unlabeled; ++i) {
    std::snprintf(id, sizeof id, "unl%04d", i);
    SampleRecord r;
    r.id = id;
    r.rgb = "rgb/" + r.id + ".png";
    r.source = "synthetic-unlabeled";
    write_rgb8(out / r.rgb, rgb);
    if (std::size_t(i) < a.mask_valid.size()) {
      r.mask = "mask/" + r.id + ".png";
      write_mask(out / *r.mask, bottom_rows_mask(a.height, a.mask_valid[i]));
    }
    unl.records.push_back(r);
  }
  write_text(out / "labeled.jsonl", serialize_manifest(lab));
  write_text(out / "unlabeled.jsonl", serialize_manifest(unl));
  std::cout << "wrote " << a.labeled << " labeled and " << a.unlabeled << " unlabeled " << a.height << "x"
            << 2 * a.height << " panoramas of " << scene.name() << " to " << out.string() << "\n";
  return kOk;
}

// ---- config files ------------------------------------------------------------------

std::vector<std::string> config_tokens(const json& v) {
  if (v.is_string()) return {v.get<std::string>()};
  if (v.is_number() || v.is_boolean()) return {v.dump()};
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const auto& e : v) {
      auto t = config_tokens(e);
      out.insert(out.end(), t.begin(), t.end());
    }
    return out;
  }
  throw ConfigError("config values must be strings, numbers, booleans or arrays");
}

/// Expands --config FILE into the flags it lists. Keys are long flag names with '_' or '-';
/// flags given on the command line win. Values are appended after the subcommand path.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + long(i), args.begin() + long(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + long(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  json cfg;
  try {
    cfg = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    std::string flag = "--" + it.key();
    std::replace(flag.begin(), flag.end(), '_', '-');
    bool given = false;
    for (const auto& a : args) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (given) continue;
    if (it->is_boolean()) {
      if (it->get<bool>()) args.push_back(flag);
      continue;
    }
    args.push_back(flag);
    for (auto& t : config_tokens(*it)) args.push_back(t);
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panodepth: 360 degree depth distillation tools"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.footer("Any flag may also come from --config FILE.json (keys are flag names). Exit codes: 0 ok, 1 usage, "
             "2 data, 3 teacher backend.");
  int code = kOk;

  // project
  ProjectArgs pa;
  auto* project = app.add_subcommand("project", "ERP resampling: e2c, c2e, rotate, tangent");
  project->require_subcommand(1);
  auto* e2c = project->add_subcommand("e2c", "Cut an ERP image (PNG or PFM) into six cube faces");
  e2c->add_option("--input", pa.input, "ERP image")->required()->check(CLI::ExistingFile);
  e2c->add_option("--out-dir", pa.out_dir, "Output directory")->required();
  e2c->add_option("--id", pa.id, "File name prefix (default: input stem)");
  e2c->add_option("--face-px", pa.face_px, "Face size in pixels")->capture_default_str();
  e2c->add_option("--mask", pa.mask, "Validity mask PNG")->check(CLI::ExistingFile);
  e2c->add_option("--workers", pa.workers)->capture_default_str();
  e2c->callback([&] { code = run_e2c(pa); });

  auto* c2e = project->add_subcommand("c2e", "Stitch six faces <id>_F..D back into an ERP image");
  c2e->add_option("--faces-dir", pa.faces_dir)->required()->check(CLI::ExistingDirectory);
  c2e->add_option("--id", pa.id)->required();
  c2e->add_option("--height", pa.height, "ERP height")->required();
  c2e->add_option("--output", pa.output)->required();
  c2e->add_option("--workers", pa.workers)->capture_default_str();
  c2e->callback([&] { code = run_c2e(pa); });

  auto* rot = project->add_subcommand("rotate", "Rotate an ERP image by a seeded random rotation");
  rot->add_option("--input", pa.input)->required()->check(CLI::ExistingFile);
  rot->add_option("--output", pa.output)->required();
  rot->add_option("--seed", pa.seed)->required();
  rot->add_option("--mode", pa.mode, "full_so3, yaw_only or identity")->capture_default_str();
  rot->add_option("--mask", pa.mask)->check(CLI::ExistingFile);
  rot->add_option("--mask-output", pa.mask_output);
  rot->add_option("--workers", pa.workers)->capture_default_str();
  rot->callback([&] { code = run_rotate(pa); });

  auto* tan = project->add_subcommand("tangent", "Sample perspective patches on an icosahedral layout");
  tan->add_option("--input", pa.input)->required()->check(CLI::ExistingFile);
  tan->add_option("--out-dir", pa.out_dir)->required();
  tan->add_option("--id", pa.id);
  tan->add_option("--patches", pa.patches, "20 * 4^k")->capture_default_str();
  tan->add_option("--fov-deg", pa.fov_deg)->capture_default_str();
  tan->add_option("--patch-px", pa.patch_px)->capture_default_str();
  tan->add_option("--mask", pa.mask)->check(CLI::ExistingFile);
  tan->add_option("--workers", pa.workers)->capture_default_str();
  tan->callback([&] { code = run_tangent(pa); });

  // pseudolabel
  PseudoArgs ps;
  auto* pseudo = app.add_subcommand("pseudolabel", "Query a teacher on rotated cube faces of every sample");
  pseudo->add_option("--manifest", ps.manifest)->required()->check(CLI::ExistingFile);
  pseudo->add_option("--teacher", ps.teacher, "mock:<scene>, luminance or bridge:<command>")->required();
  pseudo->add_option("--out-dir", ps.out_dir)->required();
  pseudo->add_option("--seed", ps.seed)->required();
  pseudo->add_option("--face-px", ps.face_px)->capture_default_str();
  pseudo->add_option("--rotation-mode", ps.rotation_mode)->capture_default_str();
  pseudo->add_option("--scramble", ps.scramble, "Mock only: none, disparity_affine, depth_affine")
      ->capture_default_str();
  pseudo->add_flag("--per-face", ps.per_face, "Mock only: one scramble per face slot instead of per query");
  pseudo->add_option("--workers", ps.workers)->capture_default_str();
  pseudo->callback([&] { code = run_pseudolabel(ps); });

  // eval
  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Depth metrics of predictions against ground truth");
  eval->add_option("--pred-manifest", ea.pred_manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--gt-manifest", ea.gt_manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--align", ea.align, "median or none")->capture_default_str();
  eval->add_option("--output", ea.output, "Report JSON");
  eval->callback([&] { code = run_eval(ea); });

  // stats
  std::vector<std::string> stat_inputs;
  std::string stat_json;
  auto* stats = app.add_subcommand("stats", "Labeled/unlabeled counts per source");
  stats->add_option("manifests", stat_inputs)->required()->check(CLI::ExistingFile);
  stats->add_option("--json", stat_json, "Also write counts as JSON");
  stats->callback([&] { code = run_stats(stat_inputs, stat_json); });

  // mask-filter
  std::string mf_in, mf_out, mf_report;
  double mf_min = kMinValidFraction;
  auto* mf = app.add_subcommand("mask-filter", "Drop samples whose mask keeps too few pixels");
  mf->add_option("--manifest", mf_in)->required()->check(CLI::ExistingFile);
  mf->add_option("--output", mf_out)->required();
  mf->add_option("--report", mf_report, "Rejection report JSON");
  mf->add_option("--min-valid", mf_min)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  mf->callback([&] { code = run_mask_filter(mf_in, mf_out, mf_report, mf_min); });

  // ingest
  std::string in_rgb, in_mask, in_out, in_source = "unlabeled", in_split = "train";
  auto* ingest = app.add_subcommand("ingest", "Pair externally produced masks with RGB panoramas");
  ingest->add_option("--rgb-dir", in_rgb)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--mask-dir", in_mask)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--output", in_out)->required();
  ingest->add_option("--source", in_source)->capture_default_str();
  ingest->add_option("--split", in_split)->capture_default_str();
  ingest->callback([&] { code = run_ingest(in_rgb, in_mask, in_out, in_source, in_split); });

  // train
  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Joint labeled + pseudo-labeled training of the grid predictor");
  tr->add_option("--labeled", ta.labeled)->required()->check(CLI::ExistingFile);
  tr->add_option("--unlabeled", ta.unlabeled)->required()->check(CLI::ExistingFile);
  tr->add_option("--teacher", ta.teacher)->required();
  tr->add_option("--out-dir", ta.out_dir)->required();
  tr->add_option("--seed", ta.seed)->required();
  tr->add_option("--steps", ta.steps)->capture_default_str();
  tr->add_option("--learning-rate", ta.learning_rate)->capture_default_str();
  tr->add_option("--face-px", ta.face_px)->capture_default_str();
  tr->add_option("--grid-h", ta.grid_h)->capture_default_str();
  tr->add_option("--init-center", ta.init_center, "Grid parameters start at center +- spread")->capture_default_str();
  tr->add_option("--init-spread", ta.init_spread)->capture_default_str();
  tr->add_option("--batch-size", ta.batch_size)->capture_default_str();
  tr->add_option("--gt-parts", ta.gt_parts)->capture_default_str();
  tr->add_option("--pseudo-parts", ta.pseudo_parts)->capture_default_str();
  tr->add_option("--weight-gt", ta.weight_gt)->capture_default_str();
  tr->add_option("--weight-pseudo", ta.weight_pseudo)->capture_default_str();
  tr->add_option("--rotation-mode", ta.rotation_mode)->capture_default_str();
  tr->add_option("--rotation-multiplicity", ta.multiplicity)->capture_default_str();
  tr->add_option("--scramble", ta.scramble)->capture_default_str();
  tr->add_flag("--per-face", ta.per_face);
  tr->add_option("--workers", ta.workers)->capture_default_str();
  tr->callback([&] { code = run_train(ta); });

  // pointcloud
  std::string pc_depth, pc_rgb, pc_mask, pc_out;
  double pc_scale = kDepthPngScale;
  auto* pc = app.add_subcommand("pointcloud", "Export an ERP depth map as an ASCII PLY point cloud");
  pc->add_option("--depth", pc_depth)->required()->check(CLI::ExistingFile);
  pc->add_option("--rgb", pc_rgb)->check(CLI::ExistingFile);
  pc->add_option("--mask", pc_mask)->check(CLI::ExistingFile);
  pc->add_option("--output", pc_out)->required();
  pc->add_option("--depth-scale", pc_scale, "PNG depth units per meter")->capture_default_str();
  pc->callback([&] { code = run_pointcloud(pc_depth, pc_rgb, pc_mask, pc_out, pc_scale); });

  // synth
  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render a demo corpus of an analytic scene");
  synth->add_option("--out-dir", sa.out_dir)->required();
  synth->add_option("--scene", sa.scene)->capture_default_str();
  synth->add_option("--height", sa.height)->capture_default_str();
  synth->add_option("--labeled", sa.labeled)->capture_default_str();
  synth->add_option("--unlabeled", sa.unlabeled)->capture_default_str();
  synth->add_option("--mask-valid", sa.mask_valid, "Valid fraction of each unlabeled sample's mask")->delimiter(',');
  synth->callback([&] { code = run_synth(sa); });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const BackendError& e) {
    std::cerr << "teacher error: " << e.what() << "\n";
    return kBackend;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return code;
}
