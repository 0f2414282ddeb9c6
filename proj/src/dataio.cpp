#include "pano/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace pano {

namespace {

void require_erp_shape(int h, int w, const fs::path& path) {
  if (w != 2 * h) throw DataError("expected a 2:1 equirectangular raster: " + path.string());
}

std::uint16_t clamp_sample(double v, double hi) {
  return std::uint16_t(std::clamp(std::round(v), 0.0, hi));
}

bool has_extension(const fs::path& p, const char* ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return e == ext;
}

}  // namespace

// ---- rasters -------------------------------------------------------------

Raster load_rgb8(const fs::path& path, bool require_erp) {
  const PngData png = read_png(path);
  if (png.bit_depth != 8) throw DataError("RGB image must be 8-bit: " + path.string());
  if (require_erp) require_erp_shape(png.height, png.width, path);
  Raster out(png.height, png.width, 3);
  auto v = out.values();
  const bool gray = png.channels <= 2;
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) v[p * 3 + c] = png.samples[p * png.channels + (gray ? 0 : c)];
  return out;
}

DepthMap load_depth(const fs::path& path, double png_scale, bool require_erp) {
  Raster values;
  if (has_extension(path, ".pfm")) {
    values = read_pfm(path);
    if (values.channels() != 1) throw DataError("depth PFM must have one channel: " + path.string());
  } else if (has_extension(path, ".png")) {
    const PngData png = read_png(path);
    if (png.bit_depth != 16 || png.channels != 1) throw DataError("depth PNG must be 16-bit gray: " + path.string());
    values = Raster(png.height, png.width, 1);
    auto v = values.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = png.samples[i] / png_scale;
  } else {
    throw DataError("unknown depth format: " + path.string());
  }
  if (require_erp) require_erp_shape(values.height(), values.width(), path);
  Mask valid = Mask::like(values);
  auto v = values.values();
  for (std::size_t i = 0; i < v.size(); ++i) valid.set(i, std::isfinite(v[i]) && v[i] > 0);
  return DepthMap(std::move(values), std::move(valid));
}

Mask load_mask(const fs::path& path, bool require_erp) {
  const PngData png = read_png(path);
  if (png.bit_depth != 8) throw DataError("mask PNG must be 8-bit: " + path.string());
  if (require_erp) require_erp_shape(png.height, png.width, path);
  Mask m(png.height, png.width, false);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, png.samples[i * png.channels] >= 128);
  return m;
}

void write_rgb8(const fs::path& path, const Raster& rgb) {
  if (rgb.channels() != 1 && rgb.channels() != 3) throw InvalidInput("RGB writer expects 1 or 3 channels");
  PngData png{rgb.height(), rgb.width(), rgb.channels(), 8, {}};
  png.samples.reserve(rgb.values().size());
  for (double v : rgb.values()) png.samples.push_back(clamp_sample(v, 255.0));
  write_png(path, png);
}

void write_depth_png16(const fs::path& path, const DepthMap& depth, double scale) {
  PngData png{depth.height(), depth.width(), 1, 16, {}};
  png.samples.resize(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i)
    png.samples[i] = depth.valid.valid(i) ? clamp_sample(depth[i] * scale, 65535.0) : 0;
  write_png(path, png);
}

void write_mask(const fs::path& path, const Mask& mask) {
  PngData png{mask.height(), mask.width(), 1, 8, {}};
  png.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) png.samples[i] = mask.valid(i) ? 255 : 0;
  write_png(path, png);
}

void write_pfm(const fs::path& path, const Raster& values) {
  const int ch = values.channels();
  if (ch != 1 && ch != 3) throw InvalidInput("PFM supports 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string());
  os << (ch == 1 ? "Pf" : "PF") << '\n' << values.width() << ' ' << values.height() << '\n' << "-1.0\n";
  std::vector<char> row(std::size_t(values.width()) * ch * 4);
  for (int r = values.height() - 1; r >= 0; --r) {
    for (int c = 0; c < values.width(); ++c)
      for (int k = 0; k < ch; ++k) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values.at(r, c, k)));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(&row[(std::size_t(c) * ch + k) * 4], &bits, 4);
      }
    os.write(row.data(), std::streamsize(row.size()));
  }
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

Raster read_pfm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  is >> magic >> w >> h >> scale;
  if (!is || (magic != "Pf" && magic != "PF") || w <= 0 || h <= 0 || scale == 0)
    throw DataError("malformed PFM header: " + path.string());
  is.get();  // single whitespace before the payload
  const int ch = magic == "PF" ? 3 : 1;
  const bool little = scale < 0;
  Raster out(h, w, ch);
  std::vector<char> row(std::size_t(w) * ch * 4);
  for (int r = h - 1; r >= 0; --r) {
    if (!is.read(row.data(), std::streamsize(row.size()))) throw DataError("truncated PFM: " + path.string());
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        std::uint32_t bits;
        std::memcpy(&bits, &row[(std::size_t(c) * ch + k) * 4], 4);
        if (little != (std::endian::native == std::endian::little)) bits = __builtin_bswap32(bits);
        out.at(r, c, k) = std::bit_cast<float>(bits);
      }
  }
  return out;
}

// ---- manifests -----------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "'");
}

DatasetManifest::DatasetManifest()
    : header({{"type", "header"}, {"schema_version", kManifestSchemaVersion}, {"depth_png_scale", kDepthPngScale}}) {}

double DatasetManifest::depth_png_scale() const { return header.value("depth_png_scale", kDepthPngScale); }

fs::path DatasetManifest::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void DatasetManifest::validate(bool check_files) const {
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (r.id.empty()) throw DataError("manifest record without id");
    if (!ids.insert(r.id).second) throw DataError("duplicate sample id '" + r.id + "'");
    if (!check_files) continue;
    for (const auto* p : {&r.rgb, r.depth ? &*r.depth : nullptr, r.mask ? &*r.mask : nullptr})
      if (p && !fs::exists(resolve(*p))) throw DataError("sample '" + r.id + "' references missing file " + *p);
  }
}

const SampleRecord* DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

nlohmann::json record_to_json(const SampleRecord& r) {
  nlohmann::json j{{"id", r.id}, {"rgb", r.rgb}, {"split", to_string(r.split)},
                   {"source", r.source}, {"labeled", r.labeled()}};
  if (r.depth) j["depth"] = *r.depth;
  if (r.mask) j["mask"] = *r.mask;
  if (r.pseudo) j["pseudo"] = *r.pseudo;
  return j;
}

SampleRecord record_from_json(const nlohmann::json& j) {
  SampleRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.rgb = j.at("rgb").get<std::string>();
    if (j.contains("depth")) r.depth = j["depth"].get<std::string>();
    if (j.contains("mask")) r.mask = j["mask"].get<std::string>();
    if (j.contains("pseudo")) r.pseudo = j["pseudo"].get<std::string>();
    r.split = split_from_string(j.value("split", "train"));
    r.source = j.value("source", "");
    if (j.contains("labeled") && j["labeled"].get<bool>() != r.labeled())
      throw DataError("record '" + r.id + "': labeled flag disagrees with depth presence");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest record: ") + e.what());
  }
  return r;
}

DatasetManifest read_manifest(const fs::path& path, bool check_files) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest " + path.string() + ": " + e.what());
    }
    if (first) {
      if (j.value("type", "") != "header") throw DataError("manifest must start with a header line");
      if (j.value("schema_version", 0) != kManifestSchemaVersion) throw DataError("unsupported manifest schema");
      m.header = std::move(j);
      first = false;
      continue;
    }
    m.records.push_back(record_from_json(j));
  }
  if (first) throw DataError("empty manifest " + path.string());
  m.validate(check_files);
  return m;
}

std::string serialize_manifest(const DatasetManifest& m) {
  std::string out = m.header.dump() + '\n';
  for (const auto& r : m.records) out += record_to_json(r).dump() + '\n';
  return out;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  m.validate(false);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os << serialize_manifest(m);
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

// ---- cleaning ------------------------------------------------------------

FilterResult apply_validity_filter(const DatasetManifest& m, double min_valid_fraction) {
  FilterResult out;
  out.kept.header = m.header;
  out.kept.base_dir = m.base_dir;
  for (const auto& r : m.records) {
    if (!r.mask) {
      out.kept.records.push_back(r);
      continue;
    }
    const Mask mask = load_mask(m.resolve(*r.mask), false);
    // valid / total compared without dividing, so exactly 20% lands on the kept side.
    const double valid = double(mask.count()), total = double(mask.size());
    if (valid >= min_valid_fraction * total)
      out.kept.records.push_back(r);
    else
      out.rejected.push_back({r.id, valid / total});
  }
  return out;
}

DatasetManifest ingest_external_masks(const fs::path& rgb_dir, const fs::path& mask_dir, const MaskProvenance& prov,
                                      const std::string& source, Split split) {
  auto png_ids = [](const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::set<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && has_extension(e.path(), ".png")) ids.insert(e.path().stem().string());
    return ids;
  };
  const auto rgb_ids = png_ids(rgb_dir);
  const auto mask_ids = png_ids(mask_dir);
  for (const auto& id : mask_ids)
    if (!rgb_ids.count(id)) throw DataError("orphan mask without RGB image: " + id);

  DatasetManifest m;
  m.header["provenance"] = {{"prompts", prov.prompts},
                            {"box_threshold", prov.box_threshold},
                            {"text_threshold", prov.text_threshold},
                            {"tool", prov.tool}};
  for (const auto& id : rgb_ids) {
    SampleRecord r;
    r.id = id;
    r.rgb = fs::absolute(rgb_dir / (id + ".png")).lexically_normal().string();
    r.split = split;
    r.source = source;
    if (mask_ids.count(id)) {
      const fs::path mp = fs::absolute(mask_dir / (id + ".png")).lexically_normal();
      if (png_dimensions(mp) != png_dimensions(r.rgb))
        throw DataError("mask shape differs from RGB shape for " + id);
      r.mask = mp.string();
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

CorpusStats corpus_stats(const std::vector<DatasetManifest>& manifests) {
  CorpusStats s;
  for (const auto& m : manifests)
    for (const auto& r : m.records) {
      auto& c = s.per_source[r.source];
      (r.labeled() ? c.labeled : c.unlabeled) += 1;
      (r.labeled() ? s.total.labeled : s.total.unlabeled) += 1;
    }
  return s;
}

nlohmann::json to_json(const CorpusStats& s) {
  nlohmann::json j;
  j["per_source"] = nlohmann::json::object();
  for (const auto& [src, c] : s.per_source) j["per_source"][src] = {{"labeled", c.labeled}, {"unlabeled", c.unlabeled}};
  j["total"] = {{"labeled", s.total.labeled}, {"unlabeled", s.total.unlabeled}};
  return j;
}

std::string format_table(const CorpusStats& s) {
  std::ostringstream os;
  auto row = [&os](const std::string& name, const SourceCounts& c) {
    os << name;
    for (std::size_t i = name.size(); i < 24; ++i) os << ' ';
    os << c.labeled << '\t' << c.unlabeled << '\n';
  };
  os << "source                  labeled\tunlabeled\n";
  for (const auto& [src, c] : s.per_source) row(src.empty() ? "(none)" : src, c);
  row("total", s.total);
  return os.str();
}

}  // namespace pano
