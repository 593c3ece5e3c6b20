#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vmsgan/dataset.hpp"

namespace vmsgan {

/// Hit and false-alarm rates. Rates of exactly 0 or 1 are moved to 1/(2n)
/// and 1 - 1/(2n), n being the number of trials behind the rate.
struct RatePair {
  double hit_rate = 0.0;
  double false_alarm_rate = 0.0;
};

[[nodiscard]] RatePair rates_from_counts(const ResponseCounts& counts);

/// Standard normal CDF.
[[nodiscard]] double normal_cdf(double x);
/// Inverse standard normal CDF for p in (0, 1); throws UsageError otherwise.
[[nodiscard]] double normal_quantile(double p);

/// D' = Phi^-1(hit rate) - Phi^-1(false-alarm rate). Rates must lie strictly in (0, 1).
[[nodiscard]] double d_prime(const RatePair& rates);
/// d_prime of the corrected rates.
[[nodiscard]] double d_prime(const ResponseCounts& counts);

/// Sample Pearson correlation. Throws UsageError for fewer than 3 points,
/// mismatched lengths or zero variance in either variable.
[[nodiscard]] double pearson(std::span<const double> x, std::span<const double> y);

struct ConsistencyResult {
  double mean = 0.0;
  int used = 0;     ///< split pairs that entered the mean
  int skipped = 0;  ///< splits where one half had zero variance
};

/// For each split and image, the Pearson correlation between the flattened
/// maps of two disjoint observer halves; the result is the arithmetic mean
/// over images and splits. Pairs where a half-map is constant have no
/// correlation and are skipped; if every pair is skipped, NumericError.
[[nodiscard]] ConsistencyResult split_half_consistency(std::span<const AnnotationSet> annotations, int n_splits,
                                                       std::mt19937_64& rng);

struct CategoryStats {
  Category category = Category::Small;
  int images = 0;
  std::optional<double> consistency;
  std::optional<double> d_prime;  ///< from counts pooled over the category's images
};

struct ImagePoint {
  std::string id;
  double mean_vms = 0.0;
  double d_prime = 0.0;
};

struct PsychometricReport {
  int n_splits = 0;
  std::vector<CategoryStats> categories;
  /// Consistency vs D' across categories (needs 3 categories with both).
  std::optional<double> consistency_vs_dprime;
  /// Per-image mean true-schema value vs per-image D'.
  std::optional<double> vms_vs_dprime;
  std::vector<ImagePoint> image_points;
};

struct PsychometricInput {
  std::string id;
  Category category = Category::Small;
  std::optional<AnnotationSet> annotations;
  std::optional<VmsMap> vms;
  std::optional<ResponseCounts> responses;
};

/// Per-category consistency (categories visited in enumeration order, all
/// drawing from `rng`) and pooled-count D', plus the two correlations when
/// enough non-degenerate points exist. A category whose images carry neither
/// annotations nor responses is a DataError.
[[nodiscard]] PsychometricReport category_report(std::span<const PsychometricInput> inputs, int n_splits,
                                                 std::mt19937_64& rng);

/// category,images,consistency,d_prime (empty cell = not available).
void write_category_csv(const PsychometricReport& report, const std::filesystem::path& path);
/// category,consistency,d_prime for categories that have both.
void write_points_csv(const PsychometricReport& report, const std::filesystem::path& path);
/// image_id,mean_vms,d_prime.
void write_image_points_csv(const PsychometricReport& report, const std::filesystem::path& path);

}  // namespace vmsgan
