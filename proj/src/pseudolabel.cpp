#include "pano/pseudolabel.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "pano/depthspace.hpp"

namespace pano {

std::size_t PseudoSample::usable_faces() const {
  std::size_t n = 0;
  for (bool u : usable) n += u;
  return n;
}

std::string face_query_key(const std::string& id, std::uint64_t seed, CubeFace f) {
  return id + '/' + std::to_string(seed) + '/' + face_letter(f);
}

namespace {

bool has_spread(const Raster& v, const Mask& m) {
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  auto x = v.values();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (m.valid(i)) {
      lo = std::min(lo, x[i]);
      hi = std::max(hi, x[i]);
      ++n;
    }
  return n >= 2 && hi > lo;
}

}  // namespace

PseudoSample generate_pseudo(const std::string& id, const Raster& rgb, const Mask* mask, TeacherBackend& teacher,
                             std::uint64_t seed, const PseudoConfig& cfg) {
  PseudoSample s;
  s.id = id;
  s.seed = seed;
  s.rotation = random_rotation(seed, cfg.rotation_mode);
  s.teacher = teacher.info();

  const ErpWarp rotated = rotate_erp(rgb, s.rotation, mask, cfg.workers);
  CubeProjection cube = erp_to_cube(rotated.image, cfg.face_px, &rotated.mask, cfg.workers);
  s.rgb = std::move(cube.faces);
  s.masks = std::move(cube.masks);
  s.pseudo = CubeFaceSet(cfg.face_px, 1);

  // Face pixel direction in the rotated frame is R_face q'; the source direction is R^T of that.
  const Rotation to_world = s.rotation.transpose();
  const auto intr = CubeIntrinsics::cube(cfg.face_px);
  std::vector<FaceQuery> queries;
  std::vector<CubeFace> asked;
  for (CubeFace f : kCubeFaces) {
    if (s.masks[int(f)].count() == 0) continue;
    queries.push_back({face_query_key(id, seed, f), s.rgb[f], to_world * face_rotation(f), intr, int(f)});
    asked.push_back(f);
  }
  const std::vector<Raster> answers = queries.empty() ? std::vector<Raster>{} : teacher.infer(queries);
  if (answers.size() != queries.size()) throw BackendError("teacher returned the wrong number of faces");

  for (std::size_t k = 0; k < asked.size(); ++k) {
    const CubeFace f = asked[k];
    const Raster& a = answers[k];
    if (a.height() != cfg.face_px || a.width() != cfg.face_px || a.channels() != 1)
      throw BackendError("teacher output shape differs from its input");
    Mask& m = s.masks[int(f)];
    auto v = a.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!std::isfinite(v[i])) m.set(i, false);
    s.pseudo[f] = a;
    s.usable[int(f)] = has_spread(a, m);
  }
  for (CubeFace f : kCubeFaces)
    if (!s.usable[int(f)]) s.masks[int(f)] = Mask(cfg.face_px, cfg.face_px, false);
  return s;
}

PseudoSample generate_pseudo(const SampleRecord& rec, const DatasetManifest& manifest, TeacherBackend& teacher,
                             std::uint64_t seed, const PseudoConfig& cfg) {
  const Raster rgb = load_rgb8(manifest.resolve(rec.rgb));
  if (rec.mask) {
    const Mask m = load_mask(manifest.resolve(*rec.mask));
    if (!m.matches(rgb)) throw DataError("mask shape differs from RGB for " + rec.id);
    return generate_pseudo(rec.id, rgb, &m, teacher, seed, cfg);
  }
  return generate_pseudo(rec.id, rgb, nullptr, teacher, seed, cfg);
}

void write_pseudo_bundle(const std::filesystem::path& dir, const PseudoSample& s, RotationMode mode) {
  std::filesystem::create_directories(dir);
  nlohmann::json usable = nlohmann::json::object();
  for (CubeFace f : kCubeFaces) {
    const std::string stem = s.id + '_' + face_letter(f);
    write_rgb8(dir / (stem + ".png"), s.rgb[f]);
    write_pfm(dir / (stem + ".pfm"), s.pseudo[f]);
    write_mask(dir / (stem + "_mask.png"), s.masks[int(f)]);
    usable[std::string(1, face_letter(f))] = s.usable[int(f)];
  }
  nlohmann::json meta{{"id", s.id},
                      {"seed", s.seed},
                      {"rotation_mode", std::string(to_string(mode))},
                      {"rotation", s.rotation.rows()},
                      {"face_px", s.rgb.width()},
                      {"usable", usable},
                      {"teacher", s.teacher.to_json()}};
  std::ofstream os(dir / (s.id + "_rotation.json"), std::ios::binary);
  os << meta.dump(1) << '\n';
  if (!os) throw DataError("cannot write rotation record for " + s.id);
}

Raster stitch_cube_depth_to_erp(const CubeFaceSet& pseudo, int h, StitchAlignment alignment) {
  pseudo.validate();
  if (pseudo.channels() != 1) throw InvalidInput("stitching expects single-channel faces");
  if (alignment == StitchAlignment::None) return cube_to_erp(pseudo, h);

  auto face_median = [](const Raster& r) {
    std::vector<double> v(r.values().begin(), r.values().end());
    return median_inplace(v);
  };
  const double ref = face_median(pseudo[CubeFace::Front]);
  if (!(ref != 0)) throw DegenerateMap("front face median is zero");
  CubeFaceSet aligned = pseudo;
  for (CubeFace f : kCubeFaces) {
    const double m = face_median(pseudo[f]);
    if (!(m != 0)) throw DegenerateMap(std::string("zero median on face ") + face_letter(f));
    for (double& x : aligned[f].values()) x *= ref / m;
  }
  return cube_to_erp(aligned, h);
}

double seam_score(const Raster& erp) {
  if (!erp.is_erp() || erp.channels() != 1) throw InvalidInput("seam_score expects a scalar ERP map");
  const int h = erp.height(), w = erp.width();
  std::vector<int> face(std::size_t(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      face[std::size_t(r) * w + c] = int(face_of_direction(spherical_to_unit_vec(erp_pixel_to_spherical(r, c, h, w))));

  double seam = 0, interior = 0;
  std::size_t n_seam = 0, n_interior = 0;
  auto visit = [&](int r0, int c0, int r1, int c1) {
    const std::size_t a = std::size_t(r0) * w + c0, b = std::size_t(r1) * w + c1;
    const double d = std::abs(erp.at(r0, c0) - erp.at(r1, c1));
    if (face[a] != face[b]) {
      seam += d;
      ++n_seam;
    } else {
      interior += d;
      ++n_interior;
    }
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      visit(r, c, r, (c + 1) % w);
      if (r + 1 < h) visit(r, c, r + 1, c);
    }
  const double ms = n_seam ? seam / double(n_seam) : 0.0;
  const double mi = n_interior ? interior / double(n_interior) : 0.0;
  if (ms == 0) return 0.0;
  if (mi == 0) return std::numeric_limits<double>::infinity();
  return ms / mi;
}

}  // namespace pano
