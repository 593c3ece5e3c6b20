#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vmsgan/image.hpp"
#include "vmsgan/memgan.hpp"
#include "vmsgan/vms_predictor.hpp"

namespace vmsgan {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  ///< unbiased (divisor n - 1)
  std::size_t count = 0;

  [[nodiscard]] int dim() const { return static_cast<int>(mean.size()); }
};

/// Sample mean and unbiased covariance of equal-length feature vectors.
[[nodiscard]] GaussianStats gaussian_stats(std::span<const std::vector<double>> features);

/// Frechet distance |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The
/// trace of the root is taken from the eigenvalues of S_a^(1/2) S_b S_a^(1/2).
[[nodiscard]] double fid(const GaussianStats& a, const GaussianStats& b);

/// Image -> feature vector. `key` names the image (a filename for
/// file-backed extractors); in-memory extractors ignore it.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual std::vector<double> extract(const Image& image, std::string_view key) const = 0;
};

/// Flattened pixels, optionally box-downsampled to pool x pool per channel.
class RawPixelExtractor final : public FeatureExtractor {
 public:
  explicit RawPixelExtractor(int pool = 0) : pool_(pool) {}
  [[nodiscard]] std::string name() const override;
  [[nodiscard]] std::vector<double> extract(const Image& image, std::string_view key) const override;

 private:
  int pool_;
};

/// Precomputed embeddings: CSV whose first column is a filename and whose
/// remaining columns are the feature vector.
class EmbeddingTableExtractor final : public FeatureExtractor {
 public:
  explicit EmbeddingTableExtractor(const std::filesystem::path& path);
  [[nodiscard]] std::string name() const override { return "embedding-table:" + source_; }
  [[nodiscard]] std::vector<double> extract(const Image& image, std::string_view key) const override;

 private:
  std::string source_;
  std::map<std::string, std::vector<double>, std::less<>> rows_;
};

struct FidProtocol {
  int sets = 10;
  int per_set = 100;
  int real_per_set = 0;  ///< 0 = same as per_set
  double m_low = 0.1;
  double m_high = 0.9;
};

struct FidRow {
  int set_index = 0;
  double fid_low = 0.0;
  double fid_high = 0.0;
};

/// Per set: per_set fresh images at m_low and at m_high, each compared with a
/// random real sample. Spatial generators receive constant maps.
[[nodiscard]] std::vector<FidRow> fid_batch_protocol(const Generator& generator, std::span<const Image> real,
                                                     const FeatureExtractor& extractor, const FidProtocol& protocol,
                                                     std::mt19937_64& rng);

void write_fid_csv(std::span<const FidRow> rows, const std::filesystem::path& path);

/// Scores a batch of images; `keys` holds the file name of each image.
using ScoreFunction = std::function<std::vector<double>(std::span<const Image>, std::span<const std::string>)>;

[[nodiscard]] ScoreFunction predictor_scorer(const VmsPredictor& predictor);
/// Mean of the predicted spatial map over cells [top, top+size) x [left, left+size).
[[nodiscard]] ScoreFunction predictor_window_scorer(const VmsPredictor& predictor, int map_size, int top, int left,
                                                    int size);
[[nodiscard]] ScoreFunction oracle_scorer();

struct PairRecord {
  std::uint64_t seed = 0;
  double m_low = 0.0;
  double m_high = 0.0;
  Image image_low;
  Image image_high;
  std::string file_low;
  std::string file_high;
  double score_low = 0.0;
  double score_high = 0.0;
};

/// Square block of a map_size x map_size target set to m; zero elsewhere.
struct SpatialWindow {
  int map_size = 10;
  int top = 0;
  int left = 0;
  int size = 0;

  [[nodiscard]] Grid target(double m) const;
};

/// Seed of pair i, derived from the base seed only.
[[nodiscard]] std::uint64_t pair_seed(std::uint64_t base_seed, int index);

/// Name encoding the pair seed and conditioner level.
[[nodiscard]] std::string pair_filename(std::uint64_t seed, double m);

/// n pairs sharing z within each pair. Scalar generators get m_low / m_high;
/// spatial ones need `window` and get window.target(m). Scores come from
/// `scorer` when given.
[[nodiscard]] std::vector<PairRecord> generate_pairs(const Generator& generator, int n, double m_low, double m_high,
                                                     std::uint64_t seed, const ScoreFunction& scorer = {},
                                                     const std::optional<SpatialWindow>& window = std::nullopt);

/// Re-scores existing pairs in place.
void score_pairs(std::span<PairRecord> pairs, const ScoreFunction& scorer);

/// seed,m_low,m_high,file_low,file_high,score_low,score_high
void write_pairs_csv(std::span<const PairRecord> pairs, const std::filesystem::path& path);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  int count = 0;
};

struct ThresholdStats {
  double threshold = 0.65;
  int n_above = 0;
  int n_below = 0;
  std::optional<double> pct_positive_above;  ///< absent when the group is empty
  std::optional<double> pct_positive_below;
  int positive = 0;  ///< pairs with score_high > score_low overall
  int total = 0;
  std::vector<HistogramBin> histogram;  ///< of score_high - score_low over [-1, 1]
};

/// Groups pairs by score_high > threshold (above) or not (below) and counts
/// strictly positive differences within each group.
[[nodiscard]] ThresholdStats threshold_stats(std::span<const PairRecord> pairs, double threshold = 0.65,
                                             double bin_width = 0.05);

void write_histogram_csv(const ThresholdStats& stats, const std::filesystem::path& path);
void write_threshold_csv(const ThresholdStats& stats, const std::filesystem::path& path);

/// P(X >= k) for X ~ Binomial(n, 1/2): the one-sided sign-test p-value.
[[nodiscard]] double sign_test_p_value(int positive, int n);

/// External per-file scores (columns filename, score).
class ExternalScores {
 public:
  [[nodiscard]] static ExternalScores load(const std::filesystem::path& path);
  static void save(const std::map<std::string, double>& scores, const std::filesystem::path& path);

  [[nodiscard]] double score(std::string_view filename) const;
  [[nodiscard]] std::size_t size() const { return scores_.size(); }
  /// The returned function holds its own copy of the table.
  [[nodiscard]] ScoreFunction scorer() const;

 private:
  std::map<std::string, double, std::less<>> scores_;
};

}  // namespace vmsgan
