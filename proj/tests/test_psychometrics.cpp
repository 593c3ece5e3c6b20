#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "support.hpp"
#include "vmsgan/csv.hpp"
#include "vmsgan/error.hpp"
#include "vmsgan/psychometrics.hpp"

namespace vmsgan {
namespace {

// Standard normal CDF without erf: Maclaurin series near 0, continued
// fraction for the tails.
double phi_oracle(double x) {
  const long double pdf = std::exp(-0.5L * x * x) / std::sqrt(2.0L * std::numbers::pi_v<long double>);
  if (std::fabs(x) < 3.0) {
    long double term = x;
    long double sum = x;
    for (int n = 1; n < 200; ++n) {
      term *= static_cast<long double>(x) * x / (2 * n + 1);
      sum += term;
    }
    return static_cast<double>(0.5L + pdf * sum);
  }
  const long double ax = std::fabs(x);
  long double frac = ax;
  for (int k = 300; k >= 1; --k) frac = ax + k / frac;
  const long double upper = pdf / frac;
  return static_cast<double>(x > 0 ? 1.0L - upper : upper);
}

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

TEST(Rates, PlainAndCorrected) {
  const RatePair r = rates_from_counts({30, 10, 5, 15});
  EXPECT_DOUBLE_EQ(r.hit_rate, 0.75);
  EXPECT_DOUBLE_EQ(r.false_alarm_rate, 0.25);
  const RatePair c = rates_from_counts({10, 0, 0, 10});
  EXPECT_DOUBLE_EQ(c.hit_rate, 1.0 - 1.0 / 20.0);
  EXPECT_DOUBLE_EQ(c.false_alarm_rate, 1.0 / 20.0);
  EXPECT_THROW((void)rates_from_counts({0, 0, 1, 1}), DataError);
  EXPECT_THROW((void)rates_from_counts({-1, 2, 1, 1}), DataError);
}

TEST(NormalCdf, MatchesSeriesOracle) {
  for (double x = -8.0; x <= 8.0; x += 0.125) {
    const double want = phi_oracle(x);
    EXPECT_NEAR(normal_cdf(x), want, 1e-15 + 1e-13 * want) << x;
  }
}

TEST(NormalQuantile, InvertsOracleCdf) {
  for (double x = -6.0; x <= 6.0; x += 0.05) {
    // Near p = 1 the double spacing of p alone limits x to eps / pdf(x).
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double conditioning = x > 0 ? 2.0 * std::numeric_limits<double>::epsilon() / pdf : 0.0;
    EXPECT_NEAR(normal_quantile(phi_oracle(x)), x, 1e-9 + conditioning) << x;
  }
}

TEST(NormalQuantile, AntisymmetricAndMonotone) {
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < 1000; ++i) {
    const double p = i / 1000.0;
    const double q = normal_quantile(p);
    EXPECT_GT(q, prev);
    EXPECT_NEAR(q, -normal_quantile(1.0 - p), 1e-12);
    prev = q;
  }
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_THROW((void)normal_quantile(0.0), UsageError);
  EXPECT_THROW((void)normal_quantile(1.0), UsageError);
}

TEST(DPrime, Examples) {
  EXPECT_NEAR(d_prime(ResponseCounts{50, 50, 50, 50}), 0.0, 1e-15);
  EXPECT_NEAR(d_prime(RatePair{phi_oracle(1.0), phi_oracle(-1.0)}), 2.0, 1e-9);
  // Phi^-1(0.84) = 0.99445788...
  EXPECT_NEAR(d_prime(ResponseCounts{84, 16, 16, 84}), 2.0 * 0.9944578832097531, 1e-9);
  EXPECT_THROW((void)d_prime(RatePair{1.0, 0.2}), UsageError);
}

TEST(Pearson, MatchesDefinitionAndIsAffineInvariant) {
  std::mt19937_64 rng(1);
  const auto x = testing::random_vector(50, rng);
  auto y = testing::random_vector(50, rng);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.5 * x[i];
  const double r = pearson(x, y);
  EXPECT_NEAR(r, pearson_oracle(x, y), 1e-12);
  std::vector<double> ay(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) ay[i] = 3.0 * y[i] - 7.0;
  EXPECT_NEAR(pearson(x, ay), r, 1e-12);
  for (auto& v : ay) v = -v;
  EXPECT_NEAR(pearson(x, ay), -r, 1e-12);
}

TEST(Pearson, DegenerateInputs) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_NEAR(pearson(a, std::vector<double>{2, 4, 6}), 1.0, 1e-15);
  EXPECT_THROW((void)pearson(a, std::vector<double>{1, 1, 1}), UsageError);
  EXPECT_THROW((void)pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), UsageError);
  EXPECT_THROW((void)pearson(a, std::vector<double>{1, 2}), UsageError);
}

AnnotationSet masks_from(std::vector<std::vector<std::uint8_t>> masks, int h, int w) {
  return AnnotationSet{h, w, SchemaChannel::True, std::move(masks)};
}

TEST(Consistency, IdenticalObserversGiveOne) {
  const std::vector<std::uint8_t> m{1, 0, 0, 1, 1, 0, 0, 0, 1};
  const std::vector<AnnotationSet> sets{masks_from({m, m, m, m}, 3, 3)};
  std::mt19937_64 rng(2);
  const auto r = split_half_consistency(sets, 5, rng);
  EXPECT_NEAR(r.mean, 1.0, 1e-12);
  EXPECT_EQ(r.used, 5);
}

TEST(Consistency, ComplementaryObserversGiveMinusOne) {
  const std::vector<std::uint8_t> m{1, 0, 0, 1, 1, 0, 0, 0, 1};
  std::vector<std::uint8_t> inv(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) inv[i] = m[i] != 0 ? 0 : 1;
  const std::vector<AnnotationSet> sets{masks_from({m, inv}, 3, 3)};
  std::mt19937_64 rng(3);
  EXPECT_NEAR(split_half_consistency(sets, 4, rng).mean, -1.0, 1e-12);
}

TEST(Consistency, MatchesBruteForceRecomputation) {
  std::mt19937_64 gen(4);
  std::bernoulli_distribution coin(0.3);
  std::vector<AnnotationSet> sets;
  for (int s = 0; s < 3; ++s) {
    std::vector<std::vector<std::uint8_t>> masks(5, std::vector<std::uint8_t>(36));
    for (auto& mask : masks)
      for (auto& v : mask) v = coin(gen) ? 1 : 0;
    sets.push_back(masks_from(masks, 6, 6));
  }
  std::mt19937_64 a(5);
  std::mt19937_64 b(5);
  const auto r = split_half_consistency(sets, 4, a);

  double sum = 0.0;
  int used = 0;
  for (int split = 0; split < 4; ++split) {
    for (const auto& set : sets) {
      const auto [ga, gb] = split_observers(set.observers(), b);
      auto half = [&](const std::vector<std::size_t>& group) {
        std::vector<double> out(36, 0.0);
        for (std::size_t o : group)
          for (std::size_t i = 0; i < 36; ++i) out[i] += set.masks[o][i];
        for (auto& v : out) v /= static_cast<double>(group.size());
        return out;
      };
      const auto ha = half(ga);
      const auto hb = half(gb);
      sum += pearson_oracle(ha, hb);
      ++used;
    }
  }
  EXPECT_EQ(r.used, used);
  EXPECT_NEAR(r.mean, sum / used, 1e-12);
}

TEST(Consistency, GrowsWithSharedSignal) {
  // Observers copy a shared mask and flip each cell with probability `noise`.
  auto consistency_at = [](double noise) {
    std::mt19937_64 gen(6);
    std::bernoulli_distribution base(0.3);
    std::bernoulli_distribution flip(noise);
    std::vector<AnnotationSet> sets;
    for (int s = 0; s < 10; ++s) {
      std::vector<std::uint8_t> shared(100);
      for (auto& v : shared) v = base(gen) ? 1 : 0;
      std::vector<std::vector<std::uint8_t>> masks;
      for (int o = 0; o < 8; ++o) {
        auto m = shared;
        for (auto& v : m) v = flip(gen) ? 1 - v : v;
        masks.push_back(m);
      }
      sets.push_back(masks_from(masks, 10, 10));
    }
    std::mt19937_64 rng(7);
    return split_half_consistency(sets, 10, rng).mean;
  };
  const double clean = consistency_at(0.05);
  const double mid = consistency_at(0.2);
  const double noisy = consistency_at(0.45);
  EXPECT_GT(clean, mid);
  EXPECT_GT(mid, noisy);
}

TEST(Consistency, ConstantHalvesAreSkippedAndErrorsRaised) {
  const std::vector<std::uint8_t> zeros(9, 0);
  std::mt19937_64 rng(8);
  const std::vector<AnnotationSet> all_blank{masks_from({zeros, zeros}, 3, 3)};
  EXPECT_THROW((void)split_half_consistency(all_blank, 3, rng), NumericError);
  const std::vector<AnnotationSet> lonely{masks_from({zeros}, 3, 3)};
  EXPECT_THROW((void)split_half_consistency(lonely, 3, rng), DataError);

  const std::vector<std::uint8_t> m{1, 0, 0, 1, 1, 0, 0, 0, 1};
  const std::vector<AnnotationSet> mixed{masks_from({m, m}, 3, 3), masks_from({zeros, zeros}, 3, 3)};
  const auto r = split_half_consistency(mixed, 3, rng);
  EXPECT_EQ(r.used, 3);
  EXPECT_EQ(r.skipped, 3);
  EXPECT_NEAR(r.mean, 1.0, 1e-12);
}

TEST(CategoryReport, PoolsCountsAndCorrelates) {
  std::vector<PsychometricInput> in;
  const std::vector<std::uint8_t> m{1, 0, 0, 1, 1, 0, 0, 0, 1};
  const auto ann = masks_from({m, m}, 3, 3);
  // Kitchen: two images whose counts pool to 84/16/16/84.
  in.push_back({"k1", Category::Kitchen, ann, std::nullopt, ResponseCounts{40, 10, 6, 44}});
  in.push_back({"k2", Category::Kitchen, std::nullopt, std::nullopt, ResponseCounts{44, 6, 10, 40}});
  in.push_back({"b1", Category::Big, std::nullopt, std::nullopt, ResponseCounts{50, 50, 50, 50}});
  std::mt19937_64 rng(9);
  const auto r = category_report(in, 3, rng);
  ASSERT_EQ(r.categories.size(), 2u);
  EXPECT_EQ(r.categories[0].category, Category::Kitchen);
  EXPECT_EQ(r.categories[0].images, 2);
  EXPECT_NEAR(*r.categories[0].consistency, 1.0, 1e-12);
  EXPECT_NEAR(*r.categories[0].d_prime, 2.0 * 0.9944578832097531, 1e-9);
  EXPECT_EQ(r.categories[1].category, Category::Big);
  EXPECT_FALSE(r.categories[1].consistency.has_value());
  EXPECT_NEAR(*r.categories[1].d_prime, 0.0, 1e-15);
  EXPECT_FALSE(r.consistency_vs_dprime.has_value());
  EXPECT_TRUE(r.image_points.empty());
}

TEST(CategoryReport, ImageLevelCorrelation) {
  std::vector<PsychometricInput> in;
  const std::vector<std::int64_t> hits{55, 65, 75, 85};
  std::vector<double> means;
  std::vector<double> dps;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    VmsMap v(2, 2);
    for (auto& c : v.true_schema.values) c = 0.1 + 0.2 * static_cast<double>(i) + 0.01 * static_cast<double>(i * i);
    const ResponseCounts rc{hits[i], 100 - hits[i], 30, 70};
    in.push_back({"i" + std::to_string(i), Category::Small, std::nullopt, v, rc});
    means.push_back(v.true_schema.mean());
    dps.push_back(d_prime(rc));
  }
  std::mt19937_64 rng(10);
  const auto r = category_report(in, 2, rng);
  ASSERT_TRUE(r.vms_vs_dprime.has_value());
  EXPECT_NEAR(*r.vms_vs_dprime, pearson_oracle(means, dps), 1e-12);
  EXPECT_EQ(r.image_points.size(), 4u);
}

TEST(CategoryReport, CategoryWithoutDataIsError) {
  std::vector<PsychometricInput> in{{"x", Category::Populated, std::nullopt, std::nullopt, std::nullopt}};
  std::mt19937_64 rng(11);
  EXPECT_THROW((void)category_report(in, 2, rng), DataError);
}

TEST(CategoryReport, CsvOutputs) {
  testing::TempDir dir("psy");
  std::vector<PsychometricInput> in{{"b1", Category::Big, std::nullopt, std::nullopt, ResponseCounts{5, 5, 5, 5}}};
  std::mt19937_64 rng(12);
  const auto r = category_report(in, 2, rng);
  write_category_csv(r, dir / "c.csv");
  const auto t = read_csv(dir / "c.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "Big");
  EXPECT_EQ(t.rows[0][2], "");
}

}  // namespace
}  // namespace vmsgan
