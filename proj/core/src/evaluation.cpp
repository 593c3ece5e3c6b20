#include "vmsgan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "vmsgan/csv.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"

namespace vmsgan {

namespace {

bool finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Symmetric PSD square root with eigenvalues below zero clamped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::vector<double>> features_of(const FeatureExtractor& extractor, std::span<const Image> images,
                                             std::span<const std::string> keys) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back(extractor.extract(images[i], keys[i]));
  return out;
}

std::vector<std::string> numbered_keys(const std::string& prefix, std::size_t count) {
  std::vector<std::string> keys;
  char buf[64];
  for (std::size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof buf, "%s_%05zu", prefix.c_str(), i);
    keys.emplace_back(buf);
  }
  return keys;
}

LatentSample constant_latent(std::vector<double> z, const Generator& g, double m) {
  return {std::move(z), std::vector<double>(static_cast<std::size_t>(g.conditioner_size()), m)};
}

}  // namespace

// ---------------------------------------------------------------- FID

GaussianStats gaussian_stats(std::span<const std::vector<double>> features) {
  if (features.size() < 2) throw UsageError("Gaussian statistics need at least 2 feature vectors");
  const std::size_t d = features.front().size();
  if (d == 0) throw UsageError("feature vectors are empty");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) throw UsageError("feature vectors differ in length");
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(features[i].data(), x.cols());
  }
  GaussianStats s;
  s.count = features.size();
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / static_cast<double>(features.size() - 1);
  return s;
}

double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim() || a.covariance.rows() != a.dim() || b.covariance.rows() != b.dim()) {
    throw UsageError("FID: dimension mismatch (" + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
  if (!finite(a.mean) || !finite(b.mean) || !finite(a.covariance) || !finite(b.covariance)) {
    throw NumericError("FID: non-finite statistics");
  }
  const Eigen::MatrixXd root_a = psd_sqrt(a.covariance);
  const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("FID: eigendecomposition failed");
  const double trace_root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double trace_sum = a.covariance.trace() + b.covariance.trace();
  const double value = (a.mean - b.mean).squaredNorm() + trace_sum - 2.0 * trace_root;
  if (!std::isfinite(value)) throw NumericError("FID is not finite");
  if (value < 0.0) {
    if (value >= -1e-6 * std::max(1.0, trace_sum)) return 0.0;
    throw NumericError("FID is negative beyond rounding: " + format_number(value));
  }
  return value;
}

std::string RawPixelExtractor::name() const {
  return pool_ > 0 ? "raw-pixels-pool" + std::to_string(pool_) : "raw-pixels";
}

std::vector<double> RawPixelExtractor::extract(const Image& image, std::string_view) const {
  if (pool_ <= 0) return image.pixels;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(3) * pool_ * pool_);
  for (int ch = 0; ch < 3; ++ch) {
    Grid g(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) g.at(y, x) = image.at(y, x, ch);
    }
    const Grid pooled = area_resample(g, pool_, pool_);
    out.insert(out.end(), pooled.values.begin(), pooled.values.end());
  }
  return out;
}

EmbeddingTableExtractor::EmbeddingTableExtractor(const std::filesystem::path& path) : source_(path.string()) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 2) throw DataError(source_ + ": embedding table needs a filename and feature columns");
  for (const auto& row : table.rows) {
    std::vector<double> v;
    for (std::size_t i = 1; i < row.size(); ++i) v.push_back(parse_number(row[i], "embedding value"));
    rows_[row.at(0)] = std::move(v);
  }
}

std::vector<double> EmbeddingTableExtractor::extract(const Image&, std::string_view key) const {
  const auto it = rows_.find(key);
  if (it == rows_.end()) throw DataError(source_ + ": no embedding for '" + std::string(key) + "'");
  return it->second;
}

std::vector<FidRow> fid_batch_protocol(const Generator& generator, std::span<const Image> real,
                                       const FeatureExtractor& extractor, const FidProtocol& p,
                                       std::mt19937_64& rng) {
  if (p.sets <= 0 || p.per_set < 2) throw UsageError("FID protocol needs sets >= 1 and per_set >= 2");
  const int real_n = p.real_per_set > 0 ? p.real_per_set : p.per_set;
  if (real_n < 2) throw UsageError("FID protocol needs at least 2 real images per set");
  if (real.size() < static_cast<std::size_t>(real_n)) {
    throw DataError("real dataset has " + std::to_string(real.size()) + " images, FID protocol needs " +
                    std::to_string(real_n));
  }
  const auto real_keys = numbered_keys("real", real.size());
  std::vector<std::size_t> order(real.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FidRow> rows;
  for (int s = 0; s < p.sets; ++s) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<double>> real_features;
    for (int i = 0; i < real_n; ++i) {
      real_features.push_back(extractor.extract(real[order[static_cast<std::size_t>(i)]],
                                                real_keys[order[static_cast<std::size_t>(i)]]));
    }
    const GaussianStats real_stats = gaussian_stats(real_features);

    FidRow row{s, 0.0, 0.0};
    for (const bool high : {false, true}) {
      std::vector<LatentSample> latents;
      for (int i = 0; i < p.per_set; ++i) {
        std::vector<double> z(static_cast<std::size_t>(generator.latent_dim()));
        for (auto& v : z) v = normal(rng);
        latents.push_back(constant_latent(std::move(z), generator, high ? p.m_high : p.m_low));
      }
      const auto images = to_images(generator.generate(latents));
      const auto keys = numbered_keys(std::string(high ? "high_" : "low_") + std::to_string(s), images.size());
      const double value = fid(gaussian_stats(features_of(extractor, images, keys)), real_stats);
      (high ? row.fid_high : row.fid_low) = value;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_fid_csv(std::span<const FidRow> rows, const std::filesystem::path& path) {
  CsvWriter w(path, {"set_index", "fid_low", "fid_high"});
  for (const auto& r : rows) w.row({std::to_string(r.set_index), format_number(r.fid_low), format_number(r.fid_high)});
}

// ---------------------------------------------------------------- scorers

ScoreFunction predictor_scorer(const VmsPredictor& predictor) {
  return [&predictor](std::span<const Image> images, std::span<const std::string>) {
    return predictor.predict_scores(to_tensor(images));
  };
}

ScoreFunction predictor_window_scorer(const VmsPredictor& predictor, int map_size, int top, int left, int size) {
  if (size <= 0 || top < 0 || left < 0 || top + size > map_size || left + size > map_size) {
    throw UsageError("scoring window lies outside the map");
  }
  return [&predictor, map_size, top, left, size](std::span<const Image> images, std::span<const std::string>) {
    std::vector<double> scores;
    for (const Grid& g : predictor.predict_spatial(to_tensor(images), map_size, map_size)) {
      double sum = 0.0;
      for (int y = top; y < top + size; ++y) {
        for (int x = left; x < left + size; ++x) sum += g.at(y, x);
      }
      scores.push_back(sum / (static_cast<double>(size) * size));
    }
    return scores;
  };
}

ScoreFunction oracle_scorer() {
  return [](std::span<const Image> images, std::span<const std::string>) {
    std::vector<double> scores;
    for (const Image& im : images) scores.push_back(synthetic_oracle(im));
    return scores;
  };
}

// ---------------------------------------------------------------- pairs

Grid SpatialWindow::target(double m) const {
  if (size <= 0 || top < 0 || left < 0 || top + size > map_size || left + size > map_size) {
    throw UsageError("spatial window lies outside the map");
  }
  Grid g(map_size, map_size);
  for (int y = top; y < top + size; ++y) {
    for (int x = left; x < left + size; ++x) g.at(y, x) = m;
  }
  return g;
}

std::uint64_t pair_seed(std::uint64_t base_seed, int index) {
  return splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

std::string pair_filename(std::uint64_t seed, double m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "z%016llx_m%.3f.png", static_cast<unsigned long long>(seed), m);
  return buf;
}

std::vector<PairRecord> generate_pairs(const Generator& generator, int n, double m_low, double m_high,
                                       std::uint64_t seed, const ScoreFunction& scorer,
                                       const std::optional<SpatialWindow>& window) {
  if (n < 0) throw UsageError("pair count must be non-negative");
  if (!(m_low < m_high)) throw UsageError("m_low must be below m_high");
  const bool spatial = generator.conditioner_size() > 1;
  if (spatial && !window) throw UsageError("a spatial generator needs a target window");
  if (spatial && window->map_size * window->map_size != generator.conditioner_size()) {
    throw UsageError("target window map size does not match the generator");
  }
  std::vector<PairRecord> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    PairRecord r;
    r.seed = pair_seed(seed, i);
    r.m_low = m_low;
    r.m_high = m_high;
    std::mt19937_64 rng(r.seed);
    std::vector<double> z(static_cast<std::size_t>(generator.latent_dim()));
    for (auto& v : z) v = normal(rng);
    if (spatial) {
      r.image_low = generator.generate_spatial(z, window->target(m_low));
      r.image_high = generator.generate_spatial(z, window->target(m_high));
    } else {
      r.image_low = generator.generate(z, std::span(&m_low, 1));
      r.image_high = generator.generate(z, std::span(&m_high, 1));
    }
    r.file_low = pair_filename(r.seed, m_low);
    r.file_high = pair_filename(r.seed, m_high);
    pairs.push_back(std::move(r));
  }
  if (scorer) score_pairs(pairs, scorer);
  return pairs;
}

void score_pairs(std::span<PairRecord> pairs, const ScoreFunction& scorer) {
  if (pairs.empty()) return;
  std::vector<Image> images;
  std::vector<std::string> keys;
  for (const auto& p : pairs) {
    images.push_back(p.image_low);
    keys.push_back(p.file_low);
    images.push_back(p.image_high);
    keys.push_back(p.file_high);
  }
  const auto scores = scorer(images, keys);
  if (scores.size() != images.size()) throw UsageError("scorer returned the wrong number of scores");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].score_low = scores[2 * i];
    pairs[i].score_high = scores[2 * i + 1];
  }
}

void write_pairs_csv(std::span<const PairRecord> pairs, const std::filesystem::path& path) {
  CsvWriter w(path, {"seed", "m_low", "m_high", "file_low", "file_high", "score_low", "score_high"});
  for (const auto& p : pairs) {
    w.row({std::to_string(p.seed), format_number(p.m_low), format_number(p.m_high), p.file_low, p.file_high,
           format_number(p.score_low), format_number(p.score_high)});
  }
}

// ---------------------------------------------------------------- statistics

ThresholdStats threshold_stats(std::span<const PairRecord> pairs, double threshold, double bin_width) {
  if (pairs.empty()) throw UsageError("threshold statistics need at least one pair");
  if (!(bin_width > 0.0)) throw UsageError("histogram bin width must be positive");
  ThresholdStats s;
  s.threshold = threshold;
  int pos_above = 0;
  int pos_below = 0;
  const int bins = static_cast<int>(std::ceil(2.0 / bin_width - 1e-9));
  for (int b = 0; b < bins; ++b) s.histogram.push_back({-1.0 + b * bin_width, std::min(1.0, -1.0 + (b + 1) * bin_width), 0});
  for (const auto& p : pairs) {
    const bool positive = p.score_high > p.score_low;
    if (p.score_high > threshold) {
      ++s.n_above;
      pos_above += positive ? 1 : 0;
    } else {
      ++s.n_below;
      pos_below += positive ? 1 : 0;
    }
    s.positive += positive ? 1 : 0;
    ++s.total;
    const double diff = std::clamp(p.score_high - p.score_low, -1.0, 1.0);
    const int b = std::min(bins - 1, static_cast<int>(std::floor((diff + 1.0) / bin_width)));
    ++s.histogram[static_cast<std::size_t>(b)].count;
  }
  if (s.n_above > 0) s.pct_positive_above = 100.0 * pos_above / s.n_above;
  if (s.n_below > 0) s.pct_positive_below = 100.0 * pos_below / s.n_below;
  return s;
}

void write_histogram_csv(const ThresholdStats& stats, const std::filesystem::path& path) {
  CsvWriter w(path, {"bin_left", "bin_right", "count"});
  for (const auto& b : stats.histogram) w.row({format_number(b.left), format_number(b.right), std::to_string(b.count)});
}

void write_threshold_csv(const ThresholdStats& stats, const std::filesystem::path& path) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; };
  CsvWriter w(path, {"group", "pairs", "pct_positive"});
  w.row({"above", std::to_string(stats.n_above), opt(stats.pct_positive_above)});
  w.row({"below", std::to_string(stats.n_below), opt(stats.pct_positive_below)});
  w.row({"all", std::to_string(stats.total), format_number(100.0 * stats.positive / stats.total)});
}

double sign_test_p_value(int positive, int n) {
  if (n <= 0 || positive < 0 || positive > n) throw UsageError("sign test needs 0 <= positive <= n, n > 0");
  // Sum of C(n, i) / 2^n for i >= positive, in log space.
  const double log_half_n = n * std::log(0.5);
  double max_term = -INFINITY;
  std::vector<double> terms;
  for (int i = positive; i <= n; ++i) {
    const double t = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + log_half_n;
    terms.push_back(t);
    max_term = std::max(max_term, t);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  return std::min(1.0, std::exp(max_term) * sum);
}

// ---------------------------------------------------------------- external scores

ExternalScores ExternalScores::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("external score file not found: " + path.string());
  const CsvTable table = read_csv(path);
  const std::size_t fcol = table.column("filename");
  const std::size_t scol = table.column("score");
  ExternalScores out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const double v = parse_number(row.at(scol), "score");
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError(path.string() + " row " + std::to_string(i + 1) + ": score " + row.at(scol) +
                      " outside [0, 1]");
    }
    out.scores_[row.at(fcol)] = v;
  }
  return out;
}

void ExternalScores::save(const std::map<std::string, double>& scores, const std::filesystem::path& path) {
  CsvWriter w(path, {"filename", "score"});
  for (const auto& [name, value] : scores) w.row({name, format_number(value)});
}

double ExternalScores::score(std::string_view filename) const {
  const auto it = scores_.find(filename);
  if (it == scores_.end()) throw DataError("missing external score for '" + std::string(filename) + "'");
  return it->second;
}

ScoreFunction ExternalScores::scorer() const {
  return [table = *this](std::span<const Image>, std::span<const std::string> keys) {
    std::vector<double> out;
    for (const auto& k : keys) out.push_back(table.score(k));
    return out;
  };
}

}  // namespace vmsgan
