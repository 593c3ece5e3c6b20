#include "vmsgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vmsgan/csv.hpp"
#include "vmsgan/error.hpp"

namespace vmsgan {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 8> kCategoryNames = {
    "Isolated", "Populated", "PublicEntertainment", "WorkHome", "Kitchen", "LivingRoom", "Small", "Big"};

std::string record_label(std::size_t index, const std::string& id) {
  return "record " + std::to_string(index) + (id.empty() ? std::string{} : " (" + id + ")");
}

ResponseCounts parse_counts(const json& j) {
  ResponseCounts c{j.at("hits").get<std::int64_t>(), j.at("misses").get<std::int64_t>(),
                   j.at("false_alarms").get<std::int64_t>(), j.at("correct_rejections").get<std::int64_t>()};
  if (c.hits < 0 || c.misses < 0 || c.false_alarms < 0 || c.correct_rejections < 0) {
    throw DataError("response counts must be non-negative");
  }
  return c;
}

json counts_json(const ResponseCounts& c) {
  return {{"hits", c.hits}, {"misses", c.misses}, {"false_alarms", c.false_alarms},
          {"correct_rejections", c.correct_rejections}};
}

fs::path relative_to(const fs::path& p, const fs::path& base) {
  const fs::path rel = fs::relative(p, base);
  return rel.empty() ? p : rel;
}

void require_file(const fs::path& p, const std::string& label, const char* what) {
  if (!fs::exists(p)) throw DataError(label + ": missing " + what + " file " + p.string());
}

Grid read_gray_grid(const fs::path& p) {
  const Raster8 r = read_png(p, 1);
  Grid g(r.height, r.width);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = r.data[i] / 255.0;
  return g;
}

void write_gray_grid(const Grid& g, const fs::path& p) {
  Raster8 r{g.height, g.width, 1, std::vector<std::uint8_t>(g.values.size())};
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    r.data[i] = static_cast<std::uint8_t>(std::clamp(std::round(g.values[i] * 255.0), 0.0, 255.0));
  }
  write_png(p, r);
}

VmsMap render(const AnnotationSet& a, std::span<const std::size_t> observers) {
  VmsMap vms(a.height, a.width);
  Grid& g = vms.channel(a.channel);
  for (const std::size_t o : observers) {
    const auto& mask = a.masks[o];
    for (std::size_t i = 0; i < mask.size(); ++i) g.values[i] += mask[i] != 0 ? 1.0 : 0.0;
  }
  const double inv = 1.0 / static_cast<double>(observers.size());
  for (auto& v : g.values) v *= inv;
  return vms;
}

void check_annotations(const AnnotationSet& a) {
  if (a.height <= 0 || a.width <= 0) throw DataError("annotation set has no extent");
  const std::size_t cells = static_cast<std::size_t>(a.height) * a.width;
  for (std::size_t i = 0; i < a.masks.size(); ++i) {
    if (a.masks[i].size() != cells) {
      throw DataError("observer mask " + std::to_string(i) + " does not match the annotation extent");
    }
  }
}

}  // namespace

std::string_view to_string(Category category) { return kCategoryNames[static_cast<std::size_t>(category)]; }

Category parse_category(std::string_view text) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == text) return static_cast<Category>(i);
  }
  throw DataError("unknown category '" + std::string(text) + "'");
}

void VmsMap::validate() const {
  if (true_schema.height != false_schema.height || true_schema.width != false_schema.width) {
    throw DataError("VMS channels have different extents");
  }
  for (const Grid* g : {&true_schema, &false_schema}) {
    if (g->values.size() != static_cast<std::size_t>(g->height) * g->width) throw DataError("VMS grid size mismatch");
    for (const double v : g->values) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("VMS cell outside [0, 1]");
    }
  }
}

// ---------------------------------------------------------------- manifest

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
  json doc;
  {
    std::ifstream in(path);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  const fs::path base = fs::absolute(path).parent_path();
  DatasetManifest m;
  try {
    const int format = doc.at("format").get<int>();
    if (format != DatasetManifest::kFormat) throw DataError("unsupported manifest format " + std::to_string(format));
    m.name = doc.at("name").get<std::string>();
    m.version = doc.value("version", std::string("1"));
    m.image_resolution = doc.at("image_resolution").get<int>();
    m.vms_resolution = doc.at("vms_resolution").get<int>();
  } catch (const json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  if (m.image_resolution <= 0 || m.vms_resolution <= 0) throw DataError("manifest resolutions must be positive");
  if (!doc.contains("records") || !doc["records"].is_array()) throw DataError("manifest has no records[] array");

  const auto& records = doc["records"];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ManifestRecord rec;
    const std::string label = record_label(i, r.value("id", std::string{}));
    try {
      rec.id = r.at("id").get<std::string>();
      rec.image = base / r.at("image").get<std::string>();
      rec.category = parse_category(r.at("category").get<std::string>());
      if (r.contains("vms")) {
        rec.vms_true = base / r["vms"].at("true").get<std::string>();
        if (r["vms"].contains("false")) rec.vms_false = base / r["vms"]["false"].get<std::string>();
      }
      if (r.contains("responses")) rec.responses = parse_counts(r["responses"]);
      if (r.contains("annotations")) {
        if (r["annotations"].contains("true")) rec.annotations_true = base / r["annotations"]["true"].get<std::string>();
        if (r["annotations"].contains("false")) {
          rec.annotations_false = base / r["annotations"]["false"].get<std::string>();
        }
      }
    } catch (const json::exception& e) {
      throw DataError(label + ": malformed entry: " + e.what());
    } catch (const DataError& e) {
      throw DataError(label + ": " + e.what());
    }

    if (check_files) {
      require_file(rec.image, label, "image");
      Raster8 img;
      try {
        img = read_png(rec.image, 3);
      } catch (const DataError& e) {
        throw DataError(label + ": " + e.what());
      }
      if (img.height != m.image_resolution || img.width != m.image_resolution) {
        throw DataError(label + ": image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        ", manifest declares " + std::to_string(m.image_resolution));
      }
      for (const auto* vp : {&rec.vms_true, &rec.vms_false}) {
        if (!vp->has_value()) continue;
        require_file(**vp, label, "VMS");
        Raster8 v;
        try {
          v = read_png(**vp, 1);
        } catch (const DataError& e) {
          throw DataError(label + ": " + e.what());
        }
        if (v.height != m.vms_resolution || v.width != m.vms_resolution) {
          throw DataError(label + ": VMS map " + (*vp)->string() + " does not match vms_resolution " +
                          std::to_string(m.vms_resolution));
        }
      }
      for (const auto* ap : {&rec.annotations_true, &rec.annotations_false}) {
        if (ap->has_value() && !fs::is_directory(**ap)) {
          throw DataError(label + ": missing annotation directory " + (*ap)->string());
        }
      }
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path();
  json records = json::array();
  for (const auto& r : m.records) {
    json j{{"id", r.id}, {"image", relative_to(r.image, base).generic_string()}, {"category", to_string(r.category)}};
    if (r.vms_true) {
      j["vms"]["true"] = relative_to(*r.vms_true, base).generic_string();
      if (r.vms_false) j["vms"]["false"] = relative_to(*r.vms_false, base).generic_string();
    }
    if (r.responses) j["responses"] = counts_json(*r.responses);
    if (r.annotations_true) j["annotations"]["true"] = relative_to(*r.annotations_true, base).generic_string();
    if (r.annotations_false) j["annotations"]["false"] = relative_to(*r.annotations_false, base).generic_string();
    records.push_back(std::move(j));
  }
  const json doc{{"format", DatasetManifest::kFormat}, {"name", m.name},
                 {"version", m.version},               {"image_resolution", m.image_resolution},
                 {"vms_resolution", m.vms_resolution}, {"records", std::move(records)}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

ImageRecord load_record(const DatasetManifest& m, std::size_t index) {
  const ManifestRecord& r = m.records.at(index);
  ImageRecord rec;
  rec.id = r.id;
  rec.category = r.category;
  rec.responses = r.responses;
  rec.image = preprocess(r.image, m.image_resolution);
  if (r.vms_true) {
    rec.vms = read_vms(*r.vms_true, r.vms_false);
    if (rec.vms->height() != m.vms_resolution || rec.vms->width() != m.vms_resolution) {
      throw DataError(record_label(index, r.id) + ": VMS resolution mismatch");
    }
  }
  return rec;
}

std::vector<ImageRecord> load_records(const DatasetManifest& m) {
  std::vector<ImageRecord> out;
  out.reserve(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) out.push_back(load_record(m, i));
  return out;
}

// ---------------------------------------------------------------- annotations

VmsMap build_vms(const AnnotationSet& annotations) {
  if (annotations.masks.empty()) throw DataError("annotation set has no observers");
  check_annotations(annotations);
  std::vector<std::size_t> all(annotations.masks.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return render(annotations, all);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_observers(std::size_t observers,
                                                                              std::mt19937_64& rng) {
  if (observers < 2) throw DataError("split-half needs at least 2 observers");
  std::vector<std::size_t> order(observers);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t first = (observers + 1) / 2;
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(first), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {std::move(a), std::move(b)};
}

std::pair<VmsMap, VmsMap> split_annotations(const AnnotationSet& annotations, std::mt19937_64& rng) {
  check_annotations(annotations);
  const auto [a, b] = split_observers(annotations.masks.size(), rng);
  return {render(annotations, a), render(annotations, b)};
}

AnnotationSet load_annotations(const fs::path& dir, SchemaChannel channel) {
  if (!fs::is_directory(dir)) throw DataError("annotation directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no observer masks in " + dir.string());
  AnnotationSet set;
  set.channel = channel;
  for (const auto& f : files) {
    const Raster8 r = read_png(f, 1);
    if (set.masks.empty()) {
      set.height = r.height;
      set.width = r.width;
    } else if (r.height != set.height || r.width != set.width) {
      throw DataError("observer mask " + f.string() + " has a different extent");
    }
    std::vector<std::uint8_t> mask(r.data.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = r.data[i] >= 128 ? 1 : 0;
    set.masks.push_back(std::move(mask));
  }
  return set;
}

void save_annotations(const AnnotationSet& annotations, const fs::path& dir) {
  check_annotations(annotations);
  fs::create_directories(dir);
  for (std::size_t o = 0; o < annotations.masks.size(); ++o) {
    Raster8 r{annotations.height, annotations.width, 1, annotations.masks[o]};
    for (auto& v : r.data) v = v != 0 ? 255 : 0;
    char name[32];
    std::snprintf(name, sizeof(name), "observer_%03zu.png", o);
    write_png(dir / name, r);
  }
}

std::map<std::string, ResponseCounts> load_responses(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("image_id");
  const std::size_t h = t.column("hits");
  const std::size_t mi = t.column("misses");
  const std::size_t fa = t.column("false_alarms");
  const std::size_t cr = t.column("correct_rejections");
  std::map<std::string, ResponseCounts> out;
  for (const auto& row : t.rows) {
    ResponseCounts c{parse_integer(row[h], "hits"), parse_integer(row[mi], "misses"),
                     parse_integer(row[fa], "false_alarms"), parse_integer(row[cr], "correct_rejections")};
    if (c.hits < 0 || c.misses < 0 || c.false_alarms < 0 || c.correct_rejections < 0) {
      throw DataError("negative response count for image " + row[id]);
    }
    out[row[id]] = c;
  }
  return out;
}

void save_responses(const std::map<std::string, ResponseCounts>& responses, const fs::path& path) {
  CsvWriter w(path, {"image_id", "hits", "misses", "false_alarms", "correct_rejections"});
  for (const auto& [id, c] : responses) {
    w.row({id, std::to_string(c.hits), std::to_string(c.misses), std::to_string(c.false_alarms),
           std::to_string(c.correct_rejections)});
  }
}

// ---------------------------------------------------------------- images

Image preprocess(const fs::path& path, int resolution) {
  if (resolution <= 0) throw UsageError("preprocess resolution must be positive");
  return resize_area(image_from_raster(read_png(path, 3)), resolution, resolution);
}

void write_vms(const VmsMap& vms, const fs::path& true_path, const fs::path& false_path) {
  vms.validate();
  write_gray_grid(vms.true_schema, true_path);
  write_gray_grid(vms.false_schema, false_path);
}

VmsMap read_vms(const fs::path& true_path, const std::optional<fs::path>& false_path) {
  VmsMap vms;
  vms.true_schema = read_gray_grid(true_path);
  vms.false_schema = false_path ? read_gray_grid(*false_path) : Grid(vms.true_schema.height, vms.true_schema.width);
  vms.validate();
  return vms;
}

// ---------------------------------------------------------------- synthetic data

std::pair<int, int> oracle_window(int extent) {
  const int size = std::max(1, static_cast<int>(std::lround(extent * kOracleWindowFraction)));
  const int begin = (extent - size) / 2;
  return {begin, begin + size};
}

double synthetic_oracle(const Image& image) {
  const auto [y0, y1] = oracle_window(image.height);
  const auto [x0, x1] = oracle_window(image.width);
  double sum = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      for (int c = 0; c < 3; ++c) sum += (image.at(y, x, c) + 1.0) * 0.5;
    }
  }
  const double cells = static_cast<double>(y1 - y0) * (x1 - x0) * 3.0;
  return std::clamp(sum / cells, 0.0, 1.0);
}

SyntheticDataset make_synthetic_dataset(int n, int resolution, std::mt19937_64& rng) {
  if (n <= 0) throw UsageError("synthetic dataset size must be positive");
  if (resolution < 4) throw UsageError("synthetic resolution must be at least 4");
  const int side = resolution / 2;
  std::uniform_int_distribution<int> pos(0, resolution - side);
  std::uniform_real_distribution<double> level(0.25, 1.0);
  SyntheticDataset ds;
  ds.records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    PatchGeometry patch{pos(rng), pos(rng), side, level(rng)};
    ImageRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    rec.id = id;
    rec.category = kAllCategories[static_cast<std::size_t>(i) % kAllCategories.size()];
    rec.image = Image(resolution, resolution, -1.0);
    const double value = patch.intensity * 2.0 - 1.0;
    for (int y = patch.top; y < patch.top + side; ++y) {
      for (int x = patch.left; x < patch.left + side; ++x) {
        for (int c = 0; c < 3; ++c) rec.image.at(y, x, c) = value;
      }
    }
    const double score = synthetic_oracle(rec.image);
    VmsMap vms(resolution, resolution);
    for (int y = patch.top; y < patch.top + side; ++y) {
      for (int x = patch.left; x < patch.left + side; ++x) vms.true_schema.at(y, x) = score;
    }
    rec.vms = std::move(vms);
    ds.records.push_back(std::move(rec));
    ds.patches.push_back(patch);
    ds.oracle_scores.push_back(score);
  }
  return ds;
}

AnnotationSet synthetic_annotations(const PatchGeometry& patch, int resolution, int observers, double noise,
                                    std::mt19937_64& rng) {
  if (observers <= 0) throw UsageError("need at least one observer");
  std::bernoulli_distribution flip(std::clamp(noise, 0.0, 1.0));
  AnnotationSet set{resolution, resolution, SchemaChannel::True, {}};
  for (int o = 0; o < observers; ++o) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(resolution) * resolution, 0);
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        const bool inside = y >= patch.top && y < patch.top + patch.size && x >= patch.left &&
                            x < patch.left + patch.size;
        mask[static_cast<std::size_t>(y) * resolution + x] = (inside != flip(rng)) ? 1 : 0;
      }
    }
    set.masks.push_back(std::move(mask));
  }
  return set;
}

ResponseCounts synthetic_responses(double oracle_score, int trials, std::mt19937_64& rng) {
  if (trials <= 0) throw UsageError("need at least one trial");
  const double sensitivity = 3.0 * std::clamp(oracle_score, 0.0, 1.0);
  const auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  std::binomial_distribution<std::int64_t> hits(trials, phi(sensitivity / 2.0));
  std::binomial_distribution<std::int64_t> fas(trials, phi(-sensitivity / 2.0));
  ResponseCounts c;
  c.hits = hits(rng);
  c.misses = trials - c.hits;
  c.false_alarms = fas(rng);
  c.correct_rejections = trials - c.false_alarms;
  return c;
}

}  // namespace vmsgan
