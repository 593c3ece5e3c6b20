#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vmsgan/image.hpp"

namespace vmsgan {

enum class Category { Isolated, Populated, PublicEntertainment, WorkHome, Kitchen, LivingRoom, Small, Big };

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::Isolated, Category::Populated,  Category::PublicEntertainment, Category::WorkHome,
    Category::Kitchen,  Category::LivingRoom, Category::Small,               Category::Big};

[[nodiscard]] std::string_view to_string(Category category);
/// Accepts the enumerator spelling (e.g. "PublicEntertainment"). Throws DataError.
[[nodiscard]] Category parse_category(std::string_view text);

enum class SchemaChannel { True, False };

/// Two-channel visual memory schema map, every cell in [0, 1].
struct VmsMap {
  Grid true_schema;
  Grid false_schema;

  VmsMap() = default;
  VmsMap(int height, int width) : true_schema(height, width), false_schema(height, width) {}

  [[nodiscard]] int height() const { return true_schema.height; }
  [[nodiscard]] int width() const { return true_schema.width; }
  [[nodiscard]] Grid& channel(SchemaChannel c) { return c == SchemaChannel::True ? true_schema : false_schema; }
  [[nodiscard]] const Grid& channel(SchemaChannel c) const {
    return c == SchemaChannel::True ? true_schema : false_schema;
  }

  /// Throws DataError on mismatched channels or cells outside [0, 1].
  void validate() const;
};

struct ResponseCounts {
  std::int64_t hits = 0;
  std::int64_t misses = 0;
  std::int64_t false_alarms = 0;
  std::int64_t correct_rejections = 0;

  ResponseCounts& operator+=(const ResponseCounts& o) {
    hits += o.hits;
    misses += o.misses;
    false_alarms += o.false_alarms;
    correct_rejections += o.correct_rejections;
    return *this;
  }
  friend bool operator==(const ResponseCounts&, const ResponseCounts&) = default;
};

struct ImageRecord {
  std::string id;
  Image image;
  std::optional<VmsMap> vms;
  Category category = Category::Small;
  std::optional<ResponseCounts> responses;
};

/// Per-observer binary region masks for one image, all of one extent.
struct AnnotationSet {
  int height = 0;
  int width = 0;
  SchemaChannel channel = SchemaChannel::True;
  std::vector<std::vector<std::uint8_t>> masks;

  [[nodiscard]] std::size_t observers() const { return masks.size(); }
};

struct ManifestRecord {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> vms_true;
  std::optional<std::filesystem::path> vms_false;
  Category category = Category::Small;
  std::optional<ResponseCounts> responses;
  std::optional<std::filesystem::path> annotations_true;
  std::optional<std::filesystem::path> annotations_false;
};

/// Parsed manifest. Record paths are absolute after loading.
struct DatasetManifest {
  static constexpr int kFormat = 1;

  std::string name;
  std::string version = "1";
  int image_resolution = 0;
  int vms_resolution = 0;
  std::vector<ManifestRecord> records;
};

/// Reads and validates a manifest: every referenced file must exist and decode
/// at the declared resolution. Errors name the offending record index and id.
[[nodiscard]] DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);

/// Writes the manifest with paths relative to the manifest's directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads image, VMS map and responses of one manifest record.
[[nodiscard]] ImageRecord load_record(const DatasetManifest& manifest, std::size_t index);
[[nodiscard]] std::vector<ImageRecord> load_records(const DatasetManifest& manifest);

/// Cell value = fraction of observers marking that cell, written to the set's channel.
[[nodiscard]] VmsMap build_vms(const AnnotationSet& annotations);

/// Splits observers into two disjoint groups (first gets the extra one when
/// odd) and renders each half. The partition depends only on the rng state.
[[nodiscard]] std::pair<VmsMap, VmsMap> split_annotations(const AnnotationSet& annotations, std::mt19937_64& rng);

/// Observer index groups used by split_annotations for the same rng state.
[[nodiscard]] std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_observers(std::size_t observers,
                                                                                            std::mt19937_64& rng);

/// Decodes an 8-bit image, resizes it (box filter) and maps 0..255 to [-1, 1].
[[nodiscard]] Image preprocess(const std::filesystem::path& path, int resolution);

/// VMS channel files: `<stem>.true.png` and `<stem>.false.png`, gray 0..255 <-> [0, 1].
void write_vms(const VmsMap& vms, const std::filesystem::path& true_path, const std::filesystem::path& false_path);
[[nodiscard]] VmsMap read_vms(const std::filesystem::path& true_path,
                              const std::optional<std::filesystem::path>& false_path);

/// Observer masks: every `*.png` in `dir`, sorted by filename, nonzero = marked.
[[nodiscard]] AnnotationSet load_annotations(const std::filesystem::path& dir, SchemaChannel channel);
void save_annotations(const AnnotationSet& annotations, const std::filesystem::path& dir);

/// CSV columns image_id, hits, misses, false_alarms, correct_rejections.
[[nodiscard]] std::map<std::string, ResponseCounts> load_responses(const std::filesystem::path& path);
void save_responses(const std::map<std::string, ResponseCounts>& responses, const std::filesystem::path& path);

// ---------------------------------------------------------------- synthetic data

/// Fraction of the image (per side) covered by the oracle window: the central
/// half in each dimension, i.e. 25% of the area.
inline constexpr double kOracleWindowFraction = 0.5;

struct PatchGeometry {
  int top = 0;
  int left = 0;
  int size = 0;
  double intensity = 0.0;
};

/// Oracle memorability: mean intensity ((v + 1) / 2, averaged over RGB) over
/// the central window. Always in [0, 1].
[[nodiscard]] double synthetic_oracle(const Image& image);

/// Central-window cell range [begin, end) on an axis of `extent` cells.
[[nodiscard]] std::pair<int, int> oracle_window(int extent);

struct SyntheticDataset {
  std::vector<ImageRecord> records;
  std::vector<PatchGeometry> patches;
  std::vector<double> oracle_scores;
};

/// Black images holding one bright square patch (side = resolution / 2) of
/// random intensity and position. The true schema is the patch indicator
/// scaled by the record's oracle score.
[[nodiscard]] SyntheticDataset make_synthetic_dataset(int n, int resolution, std::mt19937_64& rng);

/// Observers marking the patch, each cell flipped with probability `noise`.
[[nodiscard]] AnnotationSet synthetic_annotations(const PatchGeometry& patch, int resolution, int observers,
                                                  double noise, std::mt19937_64& rng);

/// Recognition counts whose sensitivity grows with the oracle score.
[[nodiscard]] ResponseCounts synthetic_responses(double oracle_score, int trials, std::mt19937_64& rng);

}  // namespace vmsgan
