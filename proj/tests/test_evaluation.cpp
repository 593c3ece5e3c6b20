#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "support.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"
#include "vmsgan/evaluation.hpp"

namespace vmsgan {
namespace {

GaussianStats stats_of(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  return GaussianStats{std::move(mean), std::move(cov), 100};
}

Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

// 2x2 oracle: the eigenvalues of Sa*Sb are real and positive, so the trace of
// its square root is the sum of their square roots (quadratic formula).
double fid_2x2_oracle(const Eigen::Vector2d& ma, const Eigen::Matrix2d& sa, const Eigen::Vector2d& mb,
                      const Eigen::Matrix2d& sb) {
  const Eigen::Matrix2d p = sa * sb;
  const double tr = p.trace();
  const double det = p.determinant();
  const double disc = std::sqrt(tr * tr - 4.0 * det);
  const double root_trace = std::sqrt((tr + disc) / 2.0) + std::sqrt((tr - disc) / 2.0);
  return (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * root_trace;
}

TEST(GaussianStats, SquareCorners) {
  const std::vector<std::vector<double>> f{{0, 0}, {2, 0}, {0, 2}, {2, 2}};
  const auto s = gaussian_stats(f);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(s.mean(1), 1.0);
  EXPECT_DOUBLE_EQ(s.covariance(0, 0), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.covariance(1, 1), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.covariance(0, 1), 0.0);
  EXPECT_THROW((void)gaussian_stats(std::vector<std::vector<double>>{{1.0}}), UsageError);
}

TEST(Fid, ClosedFormExamples) {
  const int d = 5;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const auto a = stats_of(Eigen::VectorXd::Zero(d), eye);
  EXPECT_NEAR(fid(a, a), 0.0, 1e-12);
  EXPECT_NEAR(fid(a, stats_of(Eigen::VectorXd::Ones(d), eye)), static_cast<double>(d), 1e-12);
  Eigen::MatrixXd one(1, 1);
  one(0, 0) = 1.0;
  Eigen::MatrixXd four(1, 1);
  four(0, 0) = 4.0;
  EXPECT_NEAR(fid(stats_of(Eigen::VectorXd::Zero(1), one), stats_of(Eigen::VectorXd::Zero(1), four)), 1.0, 1e-12);
}

TEST(Fid, MatchesTwoByTwoOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Matrix2d sa = random_spd(2, rng);
    const Eigen::Matrix2d sb = random_spd(2, rng);
    const Eigen::Vector2d ma = Eigen::Vector2d::Random();
    const Eigen::Vector2d mb = Eigen::Vector2d::Random();
    EXPECT_NEAR(fid(stats_of(ma, sa), stats_of(mb, sb)), fid_2x2_oracle(ma, sa, mb, sb), 1e-10);
  }
}

TEST(Fid, SymmetricAndRotationInvariant) {
  std::mt19937_64 rng(2);
  const int d = 6;
  const auto a = stats_of(Eigen::VectorXd::Random(d), random_spd(d, rng));
  const auto b = stats_of(Eigen::VectorXd::Random(d), random_spd(d, rng));
  const double f = fid(a, b);
  EXPECT_NEAR(fid(b, a), f, 1e-9 * f);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_spd(d, rng));
  const Eigen::MatrixXd q = qr.householderQ();
  const auto ra = stats_of(q * a.mean, q * a.covariance * q.transpose());
  const auto rb = stats_of(q * b.mean, q * b.covariance * q.transpose());
  EXPECT_NEAR(fid(ra, rb), f, 1e-9 * f);
  EXPECT_GE(f, 0.0);
}

TEST(Fid, DimensionMismatchAndNonFinite) {
  const auto a = stats_of(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  const auto b = stats_of(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3));
  EXPECT_THROW((void)fid(a, b), UsageError);
  auto c = a;
  c.mean(0) = std::nan("");
  EXPECT_THROW((void)fid(a, c), NumericError);
}

TEST(Extractors, RawPixelsPoolPerChannel) {
  Image im(4, 4, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      im.at(y, x, 0) = y < 2 ? 1.0 : -1.0;
      im.at(y, x, 2) = 0.5;
    }
  const auto f = RawPixelExtractor(2).extract(im, "");
  EXPECT_EQ(f, (std::vector<double>{1, 1, -1, -1, 0, 0, 0, 0, 0.5, 0.5, 0.5, 0.5}));
  EXPECT_EQ(RawPixelExtractor().extract(im, "").size(), 48u);
}

TEST(Extractors, EmbeddingTableLookup) {
  testing::TempDir dir("emb");
  std::ofstream(dir / "e.csv") << "filename,f0,f1\na.png,1.5,2\nb.png,-1,0\n";
  const EmbeddingTableExtractor e(dir / "e.csv");
  EXPECT_EQ(e.extract(Image(), "b.png"), (std::vector<double>{-1.0, 0.0}));
  EXPECT_THROW((void)e.extract(Image(), "c.png"), DataError);
}

PairRecord pair_with(double low, double high) {
  PairRecord p;
  p.score_low = low;
  p.score_high = high;
  return p;
}

TEST(Threshold, FourPairExample) {
  const std::vector<PairRecord> pairs{pair_with(0.5, 0.7), pair_with(0.8, 0.9), pair_with(0.4, 0.6),
                                      pair_with(0.7, 0.5)};
  const auto s = threshold_stats(pairs, 0.65, 0.05);
  EXPECT_EQ(s.n_above, 2);
  EXPECT_EQ(s.n_below, 2);
  EXPECT_DOUBLE_EQ(*s.pct_positive_above, 100.0);
  EXPECT_DOUBLE_EQ(*s.pct_positive_below, 50.0);
  EXPECT_EQ(s.positive, 3);
  ASSERT_EQ(s.histogram.size(), 40u);
  int total = 0;
  for (const auto& b : s.histogram) total += b.count;
  EXPECT_EQ(total, 4);
  // Differences 0.2, 0.1, 0.2, -0.2 sit on bin edges, so allow either
  // neighbour: bins 15-16 span [-0.25, -0.15), 21-22 [0.05, 0.15), 23-24 [0.15, 0.25).
  EXPECT_EQ(s.histogram[15].count + s.histogram[16].count, 1);
  EXPECT_EQ(s.histogram[21].count + s.histogram[22].count, 1);
  EXPECT_EQ(s.histogram[23].count + s.histogram[24].count, 2);
  EXPECT_DOUBLE_EQ(s.histogram[0].left, -1.0);
  EXPECT_DOUBLE_EQ(s.histogram[39].right, 1.0);
}

TEST(Threshold, EmptyGroupHasNoPercentage) {
  const std::vector<PairRecord> pairs{pair_with(0.1, 0.2)};
  const auto s = threshold_stats(pairs);
  EXPECT_FALSE(s.pct_positive_above.has_value());
  EXPECT_DOUBLE_EQ(*s.pct_positive_below, 100.0);
  EXPECT_THROW((void)threshold_stats(std::vector<PairRecord>{}), UsageError);
}

TEST(Threshold, InvariantUnderMonotoneRescoring) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PairRecord> pairs;
  for (int i = 0; i < 200; ++i) pairs.push_back(pair_with(u(rng), u(rng)));
  auto warped = pairs;
  auto f = [](double v) { return v * v * v; };
  for (auto& p : warped) {
    p.score_low = f(p.score_low);
    p.score_high = f(p.score_high);
  }
  const auto a = threshold_stats(pairs, 0.65);
  const auto b = threshold_stats(warped, f(0.65));
  EXPECT_EQ(a.n_above, b.n_above);
  EXPECT_EQ(a.positive, b.positive);
  EXPECT_EQ(a.pct_positive_above, b.pct_positive_above);
  EXPECT_EQ(a.pct_positive_below, b.pct_positive_below);
}

TEST(SignTest, MatchesBinomialTailByPascal) {
  const int n = 200;
  std::vector<long double> row{1.0L};
  for (int k = 1; k <= n; ++k) {
    std::vector<long double> next(static_cast<std::size_t>(k) + 1, 0.0L);
    for (int j = 0; j <= k; ++j) {
      next[static_cast<std::size_t>(j)] = (j > 0 ? row[static_cast<std::size_t>(j - 1)] : 0.0L) +
                                         (j < k ? row[static_cast<std::size_t>(j)] : 0.0L);
    }
    for (auto& v : next) v *= 0.5L;
    row = std::move(next);
  }
  for (int k : {0, 1, 100, 120, 150, 199, 200}) {
    long double tail = 0.0L;
    for (int j = k; j <= n; ++j) tail += row[static_cast<std::size_t>(j)];
    const double want = static_cast<double>(tail);
    EXPECT_NEAR(sign_test_p_value(k, n), want, 1e-12 * want + 1e-300) << k;
  }
  EXPECT_DOUBLE_EQ(sign_test_p_value(2, 2), 0.25);
}

TEST(Pairs, FilenameAndSeedDerivation) {
  EXPECT_EQ(pair_filename(0xabcULL, 0.1), "z0000000000000abc_m0.100.png");
  EXPECT_NE(pair_seed(1, 0), pair_seed(1, 1));
  EXPECT_NE(pair_seed(1, 0), pair_seed(2, 0));
  EXPECT_EQ(pair_seed(5, 3), pair_seed(5, 3));
}

GanConfig toy_gan(bool spatial) {
  GanConfig c;
  c.resolution = 8;
  c.latent_dim = 4;
  c.base_channels = 2;
  c.batch_size = 4;
  c.spatial = spatial;
  c.map_size = 4;
  return c;
}

TEST(Pairs, DeterministicPrefixAndOracleScores) {
  std::mt19937_64 rng(4);
  const Generator g(toy_gan(false), rng);
  const auto a = generate_pairs(g, 3, 0.1, 0.9, 77, oracle_scorer());
  const auto b = generate_pairs(g, 5, 0.1, 0.9, 77, oracle_scorer());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].score_high, b[i].score_high);
    EXPECT_EQ(a[i].score_low, synthetic_oracle(a[i].image_low));
    EXPECT_EQ(a[i].file_low, pair_filename(a[i].seed, 0.1));
  }
  EXPECT_THROW((void)generate_pairs(g, 2, 0.9, 0.1, 1), UsageError);
}

TEST(Pairs, PairSharesNoiseAcrossLevels) {
  std::mt19937_64 rng(5);
  const Generator g(toy_gan(false), rng);
  // With adjacent levels the two images of a pair coincide.
  const auto same = generate_pairs(g, 2, 0.5, std::nextafter(0.5, 1.0), 9);
  EXPECT_LT(testing::relative_error(same[0].image_low.pixels, same[0].image_high.pixels), 1e-12);
}

TEST(Pairs, SpatialNeedsWindow) {
  std::mt19937_64 rng(6);
  const Generator g(toy_gan(true), rng);
  EXPECT_THROW((void)generate_pairs(g, 1, 0.1, 0.9, 1), UsageError);
  const SpatialWindow w{4, 1, 1, 2};
  const Grid t = w.target(0.7);
  EXPECT_EQ(t.at(1, 1), 0.7);
  EXPECT_EQ(t.at(2, 2), 0.7);
  EXPECT_EQ(t.at(0, 0), 0.0);
  EXPECT_EQ(t.at(3, 1), 0.0);
  EXPECT_EQ(generate_pairs(g, 2, 0.1, 0.9, 1, {}, w).size(), 2u);
}

TEST(ExternalScoresFile, RoundTripAndErrors) {
  testing::TempDir dir("ext");
  ExternalScores::save({{"a.png", 0.25}, {"b.png", 0.75}}, dir / "s.csv");
  const auto s = ExternalScores::load(dir / "s.csv");
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.score("b.png"), 0.75);
  EXPECT_THROW((void)s.score("c.png"), DataError);
  std::ofstream(dir / "bad.csv") << "filename,score\nx.png,1.5\n";
  EXPECT_THROW((void)ExternalScores::load(dir / "bad.csv"), DataError);
  EXPECT_THROW((void)ExternalScores::load(dir / "none.csv"), DataError);
}

TEST(ExternalScoresFile, ScorerOutlivesTable) {
  testing::TempDir dir("ext_scorer");
  ExternalScores::save({{"a.png", 0.25}, {"b.png", 0.75}}, dir / "s.csv");
  const ScoreFunction f = ExternalScores::load(dir / "s.csv").scorer();
  const std::vector<Image> images(2, Image(2, 2));
  const std::vector<std::string> keys = {"b.png", "a.png"};
  EXPECT_EQ(f(images, keys), (std::vector<double>{0.75, 0.25}));
}

TEST(FidProtocolRun, ProducesOneRowPerSet) {
  std::mt19937_64 rng(7);
  const Generator g(toy_gan(false), rng);
  auto ds = make_synthetic_dataset(20, 8, rng);
  std::vector<Image> real;
  for (const auto& r : ds.records) real.push_back(r.image);
  FidProtocol p;
  p.sets = 3;
  p.per_set = 10;
  const auto rows = fid_batch_protocol(g, real, RawPixelExtractor(2), p, rng);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_GE(r.fid_low, 0.0);
    EXPECT_GE(r.fid_high, 0.0);
  }
  p.per_set = 30;
  EXPECT_THROW((void)fid_batch_protocol(g, real, RawPixelExtractor(2), p, rng), DataError);
}

}  // namespace
}  // namespace vmsgan
