#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "output_dir.hpp"
#include "vmsgan/csv.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"
#include "vmsgan/evaluation.hpp"
#include "vmsgan/psychometrics.hpp"

namespace vmsgan::cli {

namespace fs = std::filesystem;

GanState load_gan_state(const std::string& path) {
  fs::path file = require_path(path, "--checkpoint");
  if (fs::is_directory(file)) {
    const auto latest = latest_checkpoint(file, "gan");
    if (!latest) throw DataError("no gan_epoch_*.ckpt in " + file.string());
    file = *latest;
  }
  if (!fs::exists(file)) throw DataError("checkpoint " + file.string() + " does not exist");
  return gan_state_from_checkpoint(Checkpoint::load(file));
}

Grid load_target_map(const std::string& path, int size) {
  if (path.empty()) {
    const auto [b, e] = oracle_window(size);
    return SpatialWindow{size, b, b, e - b}.target(1.0);
  }
  Grid source;
  if (fs::path(path).extension() == ".png") {
    const Raster8 r = read_png(path, 1);
    source = Grid(r.height, r.width);
    for (std::size_t i = 0; i < source.size(); ++i) source.values[i] = r.data[i] / 255.0;
  } else {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read target map " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(parse_number(cell, "target map cell"));
      if (!rows.empty() && row.size() != rows.front().size()) throw DataError("target map " + path + " is ragged");
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("target map " + path + " is empty");
    source = Grid(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int y = 0; y < source.height; ++y) {
      for (int x = 0; x < source.width; ++x) source.at(y, x) = rows[y][x];
    }
  }
  for (double v : source.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("target map " + path + " has values outside [0, 1]");
  }
  return area_resample(source, size, size);
}

namespace {

std::vector<double> latent_from_seed(std::uint64_t seed, int dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(dim));
  for (auto& v : z) v = normal(rng);
  return z;
}

Grid scaled(Grid g, double m) {
  for (auto& v : g.values) v *= m;
  return g;
}

SpatialWindow pair_window(const PairSettings& p, int map_size) {
  const auto [b, e] = oracle_window(map_size);
  SpatialWindow w{map_size, p.window_top < 0 ? b : p.window_top, p.window_left < 0 ? b : p.window_left,
                  p.window_size < 0 ? e - b : p.window_size};
  if (w.size < 1 || w.top + w.size > map_size || w.left + w.size > map_size) {
    throw UsageError("pair window does not fit the " + std::to_string(map_size) + "x" + std::to_string(map_size) +
                     " map");
  }
  return w;
}

std::vector<Image> real_images(const RunConfig& config, int resolution) {
  const DatasetManifest manifest = load_manifest(require_path(config.data.manifest, "--manifest"));
  if (manifest.image_resolution != resolution) {
    throw DataError("manifest images are " + std::to_string(manifest.image_resolution) +
                    "px but the generator produces " + std::to_string(resolution) + "px");
  }
  std::vector<Image> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    out.push_back(preprocess(manifest.records[i].image, resolution));
  }
  return out;
}

void run_fid(const RunConfig& config, const OutputDir& dir, const Generator& generator, Console io) {
  const std::vector<Image> real = real_images(config, generator.resolution());
  const RawPixelExtractor extractor(config.fid.pool);
  std::mt19937_64 rng(config.seed);
  const auto rows = fid_batch_protocol(generator, real, extractor, config.fid.protocol, rng);
  write_fid_csv(rows, dir / "fid.csv");
  double low = 0.0, high = 0.0;
  for (const auto& r : rows) {
    low += r.fid_low;
    high += r.fid_high;
  }
  const double n = static_cast<double>(rows.size());
  io.out << "FID (" << extractor.name() << ") mean over " << rows.size() << " sets: m=" << config.fid.protocol.m_low
         << " " << format_number(low / n) << ", m=" << config.fid.protocol.m_high << " " << format_number(high / n)
         << '\n';
}

ScoreFunction pair_scorer(const RunConfig& config, const Generator& generator, VmsPredictor& predictor_holder) {
  const PairSettings& p = config.pairs;
  if (p.scorer == "none") return {};
  if (p.scorer == "oracle") return oracle_scorer();
  if (p.scorer == "external") {
    const fs::path path = require_path(p.scores, "--scores");
    if (!fs::exists(path)) throw DataError("score file " + path.string() + " does not exist");
    return ExternalScores::load(path).scorer();
  }
  if (p.scorer == "internal") {
    predictor_holder = VmsPredictor::load(require_path(config.data.predictor_checkpoint, "--predictor"));
    if (generator.conditioner_size() > 1) {
      const int k = static_cast<int>(std::lround(std::sqrt(generator.conditioner_size())));
      const SpatialWindow w = pair_window(p, k);
      return predictor_window_scorer(predictor_holder, k, w.top, w.left, w.size);
    }
    return predictor_scorer(predictor_holder);
  }
  throw UsageError("unknown scorer '" + p.scorer + "' (internal, oracle, external, none)");
}

void run_pairs(const RunConfig& config, const OutputDir& dir, const Generator& generator, Console io) {
  const PairSettings& p = config.pairs;
  VmsPredictor predictor;
  const ScoreFunction scorer = pair_scorer(config, generator, predictor);
  std::optional<SpatialWindow> window;
  if (generator.conditioner_size() > 1) {
    window = pair_window(p, static_cast<int>(std::lround(std::sqrt(generator.conditioner_size()))));
  }
  std::vector<PairRecord> pairs = generate_pairs(generator, p.n, p.m_low, p.m_high, config.seed, {}, window);
  if (p.save_images) {
    fs::create_directories(dir / "images");
    for (const auto& r : pairs) {
      write_png(dir / "images" / r.file_low, raster_from_image(r.image_low));
      write_png(dir / "images" / r.file_high, raster_from_image(r.image_high));
    }
  }
  if (scorer) score_pairs(pairs, scorer);
  write_pairs_csv(pairs, dir / "pairs.csv");
  if (!scorer) {
    io.out << "wrote " << pairs.size() << " unscored pairs\n";
    return;
  }
  const ThresholdStats stats = threshold_stats(pairs, p.threshold, p.bin_width);
  write_threshold_csv(stats, dir / "threshold.csv");
  write_histogram_csv(stats, dir / "histogram.csv");
  const double rate = stats.total > 0 ? static_cast<double>(stats.positive) / stats.total : 0.0;
  const double p_value = sign_test_p_value(stats.positive, stats.total);
  CsvWriter summary(dir / "summary.csv", {"scorer", "positive", "total", "rate", "sign_test_p"});
  summary.row({p.scorer, std::to_string(stats.positive), std::to_string(stats.total), format_number(rate),
               format_number(p_value)});
  io.out << stats.positive << " of " << stats.total << " pairs score higher at m=" << p.m_high
         << " (rate " << format_number(rate) << ", sign-test p " << format_number(p_value) << ")\n";
}

}  // namespace

void run_generate(const RunConfig& config, const fs::path& out_dir, Console io) {
  const GenerateSettings& g = config.generate;
  if (g.n < 1) throw UsageError("--n must be positive");
  if (!(g.m >= 0.0 && g.m <= 1.0)) throw UsageError("--m must lie in [0, 1]");
  if (g.columns < 1) throw UsageError("--columns must be positive");
  const GanState state = load_gan_state(config.data.gan_checkpoint);
  const Generator& gen = state.generator;
  const bool spatial = state.config.spatial;
  const Grid target = spatial ? load_target_map(g.target_map, state.config.map_size) : Grid();
  OutputDir dir(out_dir, "generate", config);
  CsvWriter index(dir / "generate.csv", {"index", "seed", "m", "file"});
  std::vector<Image> images;
  for (int i = 0; i < g.n; ++i) {
    const std::uint64_t seed = pair_seed(config.seed, i);
    const auto z = latent_from_seed(seed, gen.latent_dim());
    Image img = spatial ? gen.generate_spatial(z, scaled(target, g.m)) : gen.generate(z, std::span(&g.m, 1));
    const std::string file = pair_filename(seed, g.m);
    write_png(dir / file, raster_from_image(img));
    index.row({std::to_string(i), std::to_string(seed), format_number(g.m), file});
    images.push_back(std::move(img));
  }
  write_png(dir / "grid.png", raster_from_image(tile_images(images, std::min(g.columns, g.n))));
  io.out << "wrote " << g.n << " images to " << dir.path().string() << '\n';
}

void run_sweep(const RunConfig& config, const fs::path& out_dir, bool spatial, Console io) {
  const GenerateSettings& g = config.generate;
  if (g.steps < 1) throw UsageError("--steps must be positive");
  if (!(g.m_min >= 0.0 && g.m_max <= 1.0 && g.m_min <= g.m_max)) {
    throw UsageError("sweep range must satisfy 0 <= m_min <= m_max <= 1");
  }
  const GanState state = load_gan_state(config.data.gan_checkpoint);
  if (spatial != state.config.spatial) {
    throw UsageError(spatial ? "--spatial needs a spatially conditioned checkpoint"
                             : "checkpoint is spatially conditioned; pass --spatial");
  }
  const Generator& gen = state.generator;
  std::vector<double> levels(static_cast<std::size_t>(g.steps));
  for (int i = 0; i < g.steps; ++i) {
    levels[i] = g.steps == 1 ? g.m_min : g.m_min + (g.m_max - g.m_min) * i / (g.steps - 1);
  }
  const std::uint64_t seed = pair_seed(config.seed, 0);
  const auto z = latent_from_seed(seed, gen.latent_dim());
  const std::vector<Image> images =
      spatial ? sweep_spatial(gen, z, load_target_map(g.target_map, state.config.map_size), levels)
              : sweep(gen, z, levels);
  OutputDir dir(out_dir, spatial ? "sweep --spatial" : "sweep", config);
  CsvWriter index(dir / "sweep.csv", {"step", "m", "file"});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string file = pair_filename(seed, levels[i]);
    write_png(dir / file, raster_from_image(images[i]));
    index.row({std::to_string(i), format_number(levels[i]), file});
  }
  write_png(dir / "sweep_grid.png", raster_from_image(tile_images(images, g.steps)));
  io.out << "wrote " << images.size() << " sweep images to " << dir.path().string() << '\n';
}

void run_evaluate(const RunConfig& config, const fs::path& out_dir, const std::string& mode, Console io) {
  if (mode != "fid" && mode != "pairs") throw UsageError("unknown evaluation '" + mode + "'");
  const GanState state = load_gan_state(config.data.gan_checkpoint);
  OutputDir dir(out_dir, "evaluate " + mode, config);
  if (mode == "fid") {
    run_fid(config, dir, state.generator, io);
  } else {
    run_pairs(config, dir, state.generator, io);
  }
}

}  // namespace vmsgan::cli
