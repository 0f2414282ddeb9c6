#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pano/raster.hpp"

namespace pano {

namespace fs = std::filesystem;

/// Depth PNGs store meters * 4000 as uint16 (0 = missing).
inline constexpr double kDepthPngScale = 4000.0;
inline constexpr int kManifestSchemaVersion = 1;
/// Records whose mask keeps fewer than this share of pixels are dropped.
inline constexpr double kMinValidFraction = 0.20;

// ---- rasters -------------------------------------------------------------

enum class RasterKind { Rgb8, Depth, Mask };

/// Raw decoded PNG: interleaved samples widened to 16 bits.
struct PngData {
  int height = 0, width = 0, channels = 0, bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

PngData read_png(const fs::path& path);
void write_png(const fs::path& path, const PngData& png);
/// Reads only the header: {height, width}.
std::pair<int, int> png_dimensions(const fs::path& path);

/// 8-bit RGB (gray expanded, alpha dropped); values kept in 0..255.
Raster load_rgb8(const fs::path& path, bool require_erp = true);
/// 16-bit PNG (value / scale meters) or PFM (float meters). Zero or non-finite pixels are invalid.
DepthMap load_depth(const fs::path& path, double png_scale = kDepthPngScale, bool require_erp = true);
/// 8-bit PNG, >= 128 means valid.
Mask load_mask(const fs::path& path, bool require_erp = true);

void write_rgb8(const fs::path& path, const Raster& rgb);
/// Invalid pixels are written as 0; values are rounded and clamped to uint16.
void write_depth_png16(const fs::path& path, const DepthMap& depth, double scale = kDepthPngScale);
void write_mask(const fs::path& path, const Mask& mask);

/// Portable float map. Little-endian (scale -1.0), rows stored bottom to top.
/// One channel writes "Pf", three channels "PF". Values are narrowed to float.
void write_pfm(const fs::path& path, const Raster& values);
Raster read_pfm(const fs::path& path);

// ---- manifests -----------------------------------------------------------

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct SampleRecord {
  std::string id;
  std::string rgb;
  std::optional<std::string> depth;
  std::optional<std::string> mask;
  Split split = Split::Train;
  std::string source;
  /// Bundle directory written by the pseudo-labeler, if any.
  std::optional<std::string> pseudo;

  bool labeled() const { return depth.has_value(); }
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// JSON Lines: a header object on the first line, then one record per line.
/// Relative paths resolve against `base_dir`.
struct DatasetManifest {
  nlohmann::json header;
  std::vector<SampleRecord> records;
  fs::path base_dir;

  DatasetManifest();
  double depth_png_scale() const;
  fs::path resolve(const std::string& p) const;
  /// Unique ids; labeled iff depth present; optionally that every referenced file exists.
  void validate(bool check_files) const;
  const SampleRecord* find(const std::string& id) const;
};

DatasetManifest read_manifest(const fs::path& path, bool check_files = true);
/// Canonical form: sorted keys, compact separators, one object per line.
std::string serialize_manifest(const DatasetManifest& m);
void write_manifest(const fs::path& path, const DatasetManifest& m);

nlohmann::json record_to_json(const SampleRecord& r);
SampleRecord record_from_json(const nlohmann::json& j);

// ---- cleaning ------------------------------------------------------------

struct Rejection {
  std::string id;
  double valid_fraction = 0;
};

struct FilterResult {
  DatasetManifest kept;
  std::vector<Rejection> rejected;
};

/// Keeps records whose mask valid fraction is >= min_valid_fraction (no mask counts as fully valid).
FilterResult apply_validity_filter(const DatasetManifest& m, double min_valid_fraction = kMinValidFraction);

/// Settings of the offline detector/segmenter that produced the masks.
struct MaskProvenance {
  std::vector<std::string> prompts{"sky", "watermark"};
  double box_threshold = 0.3;
  double text_threshold = 0.25;
  std::string tool = "Grounded-Segment-Anything";
};

/// Pairs <id>.png RGB files with <id>.png masks. Shapes must agree; a mask without an RGB
/// counterpart is an error. Output paths are absolute.
DatasetManifest ingest_external_masks(const fs::path& rgb_dir, const fs::path& mask_dir,
                                      const MaskProvenance& prov = {}, const std::string& source = "unlabeled",
                                      Split split = Split::Train);

struct SourceCounts {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  friend bool operator==(const SourceCounts&, const SourceCounts&) = default;
};

struct CorpusStats {
  std::map<std::string, SourceCounts> per_source;
  SourceCounts total;
};

CorpusStats corpus_stats(const std::vector<DatasetManifest>& manifests);
nlohmann::json to_json(const CorpusStats& s);
std::string format_table(const CorpusStats& s);

}  // namespace pano
