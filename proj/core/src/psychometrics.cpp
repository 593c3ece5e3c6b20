#include "vmsgan/psychometrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vmsgan/csv.hpp"
#include "vmsgan/error.hpp"

namespace vmsgan {

namespace {

double corrected_rate(std::int64_t hits, std::int64_t total) {
  const double n = static_cast<double>(total);
  if (hits == 0) return 1.0 / (2.0 * n);
  if (hits == total) return 1.0 - 1.0 / (2.0 * n);
  return static_cast<double>(hits) / n;
}

// Acklam's rational approximation of the normal quantile (|error| < 1.2e-9).
double quantile_guess(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<double> flatten_true(const VmsMap& m) { return m.true_schema.values; }

bool has_variance(std::span<const double> v) {
  for (double x : v) {
    if (x != v[0]) return true;
  }
  return false;
}

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; }

}  // namespace

RatePair rates_from_counts(const ResponseCounts& c) {
  if (c.hits < 0 || c.misses < 0 || c.false_alarms < 0 || c.correct_rejections < 0) {
    throw DataError("response counts must be non-negative");
  }
  if (c.hits + c.misses <= 0) throw DataError("no target trials (hits + misses = 0)");
  if (c.false_alarms + c.correct_rejections <= 0) {
    throw DataError("no foil trials (false_alarms + correct_rejections = 0)");
  }
  return {corrected_rate(c.hits, c.hits + c.misses),
          corrected_rate(c.false_alarms, c.false_alarms + c.correct_rejections)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

double lower_quantile(double p) {
  double x = quantile_guess(p);
  // One Halley step against the erfc-based CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("normal quantile needs p in (0, 1), got " + format_number(p));
  // 1 - p is exact for p >= 0.5; solving the upper half as a lower tail avoids
  // the cancellation in Phi(x) - p near 1.
  return p > 0.5 ? -lower_quantile(1.0 - p) : lower_quantile(p);
}

double d_prime(const RatePair& r) {
  if (!(r.hit_rate > 0.0 && r.hit_rate < 1.0) || !(r.false_alarm_rate > 0.0 && r.false_alarm_rate < 1.0)) {
    throw UsageError("rates must lie strictly inside (0, 1); correct boundary rates first");
  }
  return normal_quantile(r.hit_rate) - normal_quantile(r.false_alarm_rate);
}

double d_prime(const ResponseCounts& counts) { return d_prime(rates_from_counts(counts)); }

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
  if (x.size() < 3) throw UsageError("pearson: need at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw UsageError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ConsistencyResult split_half_consistency(std::span<const AnnotationSet> annotations, int n_splits,
                                         std::mt19937_64& rng) {
  if (n_splits <= 0) throw UsageError("n_splits must be positive");
  if (annotations.empty()) throw DataError("no annotation sets");
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (annotations[i].observers() < 2) {
      throw DataError("annotation set " + std::to_string(i) + " has fewer than 2 observers");
    }
  }
  ConsistencyResult out;
  double sum = 0.0;
  for (int s = 0; s < n_splits; ++s) {
    for (const AnnotationSet& set : annotations) {
      const auto [a, b] = split_annotations(set, rng);
      const auto fa = flatten_true(a);
      const auto fb = flatten_true(b);
      if (fa.size() < 3 || !has_variance(fa) || !has_variance(fb)) {
        ++out.skipped;
        continue;
      }
      sum += pearson(fa, fb);
      ++out.used;
    }
  }
  if (out.used == 0) throw NumericError("every split had a constant half-map; consistency is undefined");
  out.mean = sum / out.used;
  return out;
}

PsychometricReport category_report(std::span<const PsychometricInput> inputs, int n_splits, std::mt19937_64& rng) {
  if (inputs.empty()) throw DataError("no images to analyse");
  PsychometricReport report;
  report.n_splits = n_splits;

  for (Category cat : kAllCategories) {
    std::vector<AnnotationSet> sets;
    ResponseCounts pooled;
    int images = 0;
    bool any_responses = false;
    for (const auto& in : inputs) {
      if (in.category != cat) continue;
      ++images;
      if (in.annotations) {
        AnnotationSet s = *in.annotations;
        s.channel = SchemaChannel::True;
        sets.push_back(std::move(s));
      }
      if (in.responses) {
        pooled += *in.responses;
        any_responses = true;
      }
    }
    if (images == 0) continue;
    if (sets.empty() && !any_responses) {
      throw DataError("category " + std::string(to_string(cat)) + " has no annotations or responses");
    }
    CategoryStats stats{cat, images, std::nullopt, std::nullopt};
    if (!sets.empty()) stats.consistency = split_half_consistency(sets, n_splits, rng).mean;
    if (any_responses) stats.d_prime = d_prime(pooled);
    report.categories.push_back(stats);
  }

  std::vector<double> cons;
  std::vector<double> dps;
  for (const auto& c : report.categories) {
    if (c.consistency && c.d_prime) {
      cons.push_back(*c.consistency);
      dps.push_back(*c.d_prime);
    }
  }
  if (cons.size() >= 3 && has_variance(cons) && has_variance(dps)) report.consistency_vs_dprime = pearson(cons, dps);

  std::vector<double> vms;
  std::vector<double> image_dps;
  for (const auto& in : inputs) {
    if (!in.vms || !in.responses) continue;
    const ImagePoint p{in.id, in.vms->true_schema.mean(), d_prime(*in.responses)};
    report.image_points.push_back(p);
    vms.push_back(p.mean_vms);
    image_dps.push_back(p.d_prime);
  }
  if (vms.size() >= 3 && has_variance(vms) && has_variance(image_dps)) report.vms_vs_dprime = pearson(vms, image_dps);
  return report;
}

void write_category_csv(const PsychometricReport& report, const std::filesystem::path& path) {
  CsvWriter w(path, {"category", "images", "consistency", "d_prime"});
  for (const auto& c : report.categories) {
    w.row({std::string(to_string(c.category)), std::to_string(c.images), optional_number(c.consistency),
           optional_number(c.d_prime)});
  }
}

void write_points_csv(const PsychometricReport& report, const std::filesystem::path& path) {
  CsvWriter w(path, {"category", "consistency", "d_prime"});
  for (const auto& c : report.categories) {
    if (c.consistency && c.d_prime) {
      w.row({std::string(to_string(c.category)), format_number(*c.consistency), format_number(*c.d_prime)});
    }
  }
}

void write_image_points_csv(const PsychometricReport& report, const std::filesystem::path& path) {
  CsvWriter w(path, {"image_id", "mean_vms", "d_prime"});
  for (const auto& p : report.image_points) w.row({p.id, format_number(p.mean_vms), format_number(p.d_prime)});
}

}  // namespace vmsgan
