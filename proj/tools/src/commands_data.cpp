#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>

#include "commands.hpp"
#include "output_dir.hpp"
#include "vmsgan/csv.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"
#include "vmsgan/evaluation.hpp"
#include "vmsgan/psychometrics.hpp"

namespace vmsgan::cli {

namespace fs = std::filesystem;

std::string require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required ") + flag);
  return value;
}

namespace {

std::string synthetic_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05d", i);
  return buf;
}

VmsMap resample_vms(const VmsMap& vms, int size) {
  if (vms.height() == size && vms.width() == size) return vms;
  VmsMap out;
  out.true_schema = area_resample(vms.true_schema, size, size);
  out.false_schema = area_resample(vms.false_schema, size, size);
  return out;
}

std::size_t write_synthetic(const RunConfig& config, const OutputDir& dir, Console io) {
  const SynthSettings& s = config.synth;
  if (s.n < 1) throw UsageError("--n must be positive");
  if (s.observers < 0) throw UsageError("observer count must be non-negative");
  std::mt19937_64 rng(config.seed);
  const SyntheticDataset data = make_synthetic_dataset(s.n, s.resolution, rng);
  for (const char* sub : {"images", "vms", "annotations"}) fs::create_directories(dir / sub);

  DatasetManifest manifest;
  manifest.name = "synthetic";
  manifest.image_resolution = s.resolution;
  manifest.vms_resolution = s.resolution;
  std::map<std::string, ResponseCounts> responses;
  std::map<std::string, double> oracle;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const ImageRecord& src = data.records[i];
    const std::string id = synthetic_id(static_cast<int>(i));
    ManifestRecord r;
    r.id = id;
    r.category = src.category;
    r.image = dir / "images" / (id + ".png");
    const Raster8 raster = raster_from_image(src.image);
    write_png(r.image, raster);
    // Scored from the stored 8-bit pixels, which is what a reader sees.
    const double score = synthetic_oracle(image_from_raster(raster));
    oracle[id + ".png"] = score;
    r.vms_true = dir / "vms" / (id + ".true.png");
    r.vms_false = dir / "vms" / (id + ".false.png");
    write_vms(*src.vms, *r.vms_true, *r.vms_false);
    if (s.observers > 0) {
      r.annotations_true = dir / "annotations" / id;
      save_annotations(synthetic_annotations(data.patches[i], s.resolution, s.observers, s.annotation_noise, rng),
                       *r.annotations_true);
    }
    if (s.trials > 0) {
      r.responses = synthetic_responses(score, s.trials, rng);
      responses[id] = *r.responses;
    }
    manifest.records.push_back(std::move(r));
  }
  if (!responses.empty()) save_responses(responses, dir / "responses.csv");
  ExternalScores::save(oracle, dir / "oracle_scores.csv");
  save_manifest(manifest, dir / "manifest.json");
  io.out << "wrote " << manifest.records.size() << " synthetic records to " << (dir / "manifest.json").string()
         << '\n';
  return manifest.records.size();
}

std::map<std::string, std::string> load_categories(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("image_id");
  const std::size_t cat = t.column("category");
  std::map<std::string, std::string> out;
  for (const auto& row : t.rows) out[row.at(id)] = row.at(cat);
  return out;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("image directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ingest_directory(const RunConfig& config, const OutputDir& dir, Console io) {
  const IngestSettings& s = config.ingest;
  const auto images = list_pngs(require_path(s.images, "--images"));
  if (images.empty()) throw DataError("no PNG images in " + s.images);
  const auto categories = s.categories.empty() ? std::map<std::string, std::string>{} : load_categories(s.categories);
  const auto responses = s.responses.empty() ? std::map<std::string, ResponseCounts>{} : load_responses(s.responses);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "vms");

  DatasetManifest manifest;
  manifest.name = s.name;
  manifest.image_resolution = s.image_resolution;
  manifest.vms_resolution = s.vms_resolution;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string id = images[i].stem().string();
    try {
      ManifestRecord r;
      r.id = id;
      r.image = dir / "images" / (id + ".png");
      write_png(r.image, raster_from_image(preprocess(images[i], s.image_resolution)));

      std::optional<VmsMap> vms;
      const fs::path true_file = fs::path(s.vms) / (id + ".true.png");
      const fs::path false_file = fs::path(s.vms) / (id + ".false.png");
      if (!s.vms.empty() && fs::exists(true_file)) {
        vms = read_vms(true_file, fs::exists(false_file) ? std::optional(false_file) : std::nullopt);
      }
      if (!s.annotations.empty() && fs::is_directory(fs::path(s.annotations) / id)) {
        r.annotations_true = fs::absolute(fs::path(s.annotations) / id);
        const AnnotationSet set = load_annotations(*r.annotations_true, SchemaChannel::True);
        if (!vms) vms = build_vms(set);
        if (!s.false_annotations.empty() && fs::is_directory(fs::path(s.false_annotations) / id)) {
          r.annotations_false = fs::absolute(fs::path(s.false_annotations) / id);
          const VmsMap f = build_vms(load_annotations(*r.annotations_false, SchemaChannel::False));
          if (f.height() != set.height || f.width() != set.width) {
            throw DataError("false-schema annotations differ in extent from the true-schema ones");
          }
          vms->false_schema = f.false_schema;
        }
      }
      if (vms) {
        vms->validate();
        r.vms_true = dir / "vms" / (id + ".true.png");
        r.vms_false = dir / "vms" / (id + ".false.png");
        write_vms(resample_vms(*vms, s.vms_resolution), *r.vms_true, *r.vms_false);
      }

      if (auto it = categories.find(id); it != categories.end()) {
        r.category = parse_category(it->second);
      } else if (!s.default_category.empty()) {
        r.category = parse_category(s.default_category);
      } else {
        throw DataError("no category (give --categories or --default-category)");
      }
      if (auto it = responses.find(id); it != responses.end()) r.responses = it->second;
      manifest.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      errors.push_back("record " + std::to_string(i) + " (" + id + "): " + e.what());
    }
  }
  if (!errors.empty()) {
    for (const auto& e : errors) io.err << e << '\n';
    throw DataError(std::to_string(errors.size()) + " of " + std::to_string(images.size()) +
                    " records failed validation");
  }
  const fs::path path = dir / "manifest.json";
  save_manifest(manifest, path);
  (void)load_manifest(path);
  io.out << "wrote manifest with " << manifest.records.size() << " records to " << path.string() << '\n';
}

std::vector<PsychometricInput> psychometric_inputs(const DatasetManifest& manifest) {
  std::vector<PsychometricInput> inputs;
  for (const auto& r : manifest.records) {
    PsychometricInput in;
    in.id = r.id;
    in.category = r.category;
    if (r.annotations_true) in.annotations = load_annotations(*r.annotations_true, SchemaChannel::True);
    if (r.vms_true) in.vms = read_vms(*r.vms_true, r.vms_false);
    in.responses = r.responses;
    inputs.push_back(std::move(in));
  }
  return inputs;
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

void run_synth(const RunConfig& config, const fs::path& out_dir, Console io) {
  OutputDir dir(out_dir, "synth", config);
  (void)write_synthetic(config, dir, io);
}

void run_ingest(const RunConfig& config, const fs::path& out_dir, bool synthetic, Console io) {
  OutputDir dir(out_dir, "ingest", config);
  if (synthetic) {
    (void)write_synthetic(config, dir, io);
  } else {
    ingest_directory(config, dir, io);
  }
}

void run_analyze(const RunConfig& config, const fs::path& out_dir, const std::string& mode, Console io) {
  if (mode != "consistency" && mode != "dprime" && mode != "correlations") {
    throw UsageError("unknown analysis '" + mode + "'");
  }
  if (config.analysis.splits < 1) throw UsageError("--splits must be positive");
  const DatasetManifest manifest = load_manifest(require_path(config.data.manifest, "--manifest"));
  OutputDir dir(out_dir, "analyze " + mode, config);
  std::vector<PsychometricInput> inputs = psychometric_inputs(manifest);

  if (mode == "consistency") {
    std::erase_if(inputs, [](const PsychometricInput& in) { return !in.annotations; });
    if (inputs.empty()) throw DataError("manifest has no observer annotations; consistency needs them");
    for (auto& in : inputs) in.responses.reset();
  } else if (mode == "dprime") {
    std::erase_if(inputs, [](const PsychometricInput& in) { return !in.responses; });
    if (inputs.empty()) throw DataError("manifest has no recognition responses; D' needs them");
    for (auto& in : inputs) in.annotations.reset();
  } else {
    const bool any_annotations =
        std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return in.annotations.has_value(); });
    const bool any_responses =
        std::any_of(inputs.begin(), inputs.end(), [](const auto& in) { return in.responses.has_value(); });
    if (!any_annotations || !any_responses) {
      throw DataError("correlations need both observer annotations and recognition responses");
    }
  }

  std::mt19937_64 rng(config.seed);
  const PsychometricReport report = category_report(inputs, config.analysis.splits, rng);

  if (mode == "consistency") {
    CsvWriter csv(dir / "consistency.csv", {"category", "images", "consistency"});
    for (const auto& c : report.categories) {
      if (!c.consistency) continue;
      csv.row({std::string(to_string(c.category)), std::to_string(c.images), format_number(*c.consistency)});
      io.out << to_string(c.category) << ": consistency " << format_number(*c.consistency) << '\n';
    }
  } else if (mode == "dprime") {
    CsvWriter csv(dir / "dprime.csv", {"category", "images", "d_prime"});
    for (const auto& c : report.categories) {
      if (!c.d_prime) continue;
      csv.row({std::string(to_string(c.category)), std::to_string(c.images), format_number(*c.d_prime)});
      io.out << to_string(c.category) << ": D' " << format_number(*c.d_prime) << '\n';
    }
    CsvWriter images(dir / "image_dprime.csv", {"image_id", "hit_rate", "false_alarm_rate", "d_prime"});
    for (const auto& in : inputs) {
      const RatePair r = rates_from_counts(*in.responses);
      images.row({in.id, format_number(r.hit_rate), format_number(r.false_alarm_rate),
                  format_number(d_prime(r))});
    }
  } else {
    write_category_csv(report, dir / "report.csv");
    write_points_csv(report, dir / "points.csv");
    write_image_points_csv(report, dir / "image_points.csv");
    CsvWriter csv(dir / "correlations.csv", {"measure", "pearson"});
    csv.row({"consistency_vs_dprime", optional_cell(report.consistency_vs_dprime)});
    csv.row({"vms_vs_dprime", optional_cell(report.vms_vs_dprime)});
    io.out << "consistency vs D': " << (report.consistency_vs_dprime ? format_number(*report.consistency_vs_dprime) : "n/a")
           << '\n'
           << "mean VMS vs D': " << (report.vms_vs_dprime ? format_number(*report.vms_vs_dprime) : "n/a") << '\n';
  }
}

}  // namespace vmsgan::cli
