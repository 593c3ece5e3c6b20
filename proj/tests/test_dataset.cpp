#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "support.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"

namespace vmsgan {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

AnnotationSet random_annotations(int observers, int h, int w, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  AnnotationSet a{h, w, SchemaChannel::True, {}};
  for (int o = 0; o < observers; ++o) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(h) * w);
    for (auto& v : m) v = coin(rng) ? 1 : 0;
    a.masks.push_back(std::move(m));
  }
  return a;
}

void write_gray(const fs::path& p, int size, std::uint8_t value) {
  write_png(p, Raster8{size, size, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, value)});
}

void write_rgb(const fs::path& p, int size, std::uint8_t value) {
  write_png(p, Raster8{size, size, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * 3, value)});
}

// Two records: one with VMS and responses, one with annotations.
DatasetManifest write_fixture(const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "vms");
  fs::create_directories(dir / "ann" / "b");
  write_rgb(dir / "images" / "a.png", 8, 200);
  write_rgb(dir / "images" / "b.png", 8, 10);
  write_gray(dir / "vms" / "a.true.png", 4, 255);
  write_gray(dir / "vms" / "a.false.png", 4, 0);
  write_gray(dir / "ann" / "b" / "o1.png", 4, 255);
  write_gray(dir / "ann" / "b" / "o2.png", 4, 0);
  DatasetManifest m;
  m.name = "fixture";
  m.image_resolution = 8;
  m.vms_resolution = 4;
  ManifestRecord a;
  a.id = "a";
  a.image = dir / "images" / "a.png";
  a.vms_true = dir / "vms" / "a.true.png";
  a.vms_false = dir / "vms" / "a.false.png";
  a.category = Category::Kitchen;
  a.responses = ResponseCounts{8, 2, 3, 7};
  ManifestRecord b;
  b.id = "b";
  b.image = dir / "images" / "b.png";
  b.category = Category::Big;
  b.annotations_true = dir / "ann" / "b";
  m.records = {a, b};
  save_manifest(m, dir / "manifest.json");
  return m;
}

TEST(Manifest, TwoRecordRoundTrip) {
  TempDir dir("manifest");
  const auto written = write_fixture(dir.path());
  const auto m = load_manifest(dir / "manifest.json");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.name, "fixture");
  EXPECT_EQ(m.records[0].id, "a");
  EXPECT_EQ(m.records[0].category, Category::Kitchen);
  EXPECT_EQ(*m.records[0].responses, (ResponseCounts{8, 2, 3, 7}));
  EXPECT_EQ(fs::canonical(m.records[0].image), fs::canonical(written.records[0].image));
  EXPECT_EQ(fs::canonical(*m.records[1].annotations_true), fs::canonical(dir / "ann" / "b"));

  const auto recs = load_records(m);
  ASSERT_TRUE(recs[0].vms.has_value());
  EXPECT_EQ(recs[0].vms->true_schema.at(0, 0), 1.0);
  EXPECT_EQ(recs[0].vms->false_schema.at(3, 3), 0.0);
  EXPECT_NEAR(recs[0].image.at(0, 0, 0), 200.0 / 127.5 - 1.0, 1e-15);
  EXPECT_FALSE(recs[1].vms.has_value());
}

TEST(Manifest, MissingVmsFileNamesTheRecord) {
  TempDir dir("manifest_missing");
  write_fixture(dir.path());
  fs::remove(dir / "vms" / "a.false.png");
  try {
    (void)load_manifest(dir / "manifest.json");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 0 (a)"), std::string::npos) << e.what();
  }
}

TEST(Manifest, ResolutionMismatchAndMalformedEntries) {
  TempDir dir("manifest_bad");
  write_fixture(dir.path());
  write_rgb(dir / "images" / "b.png", 16, 0);
  try {
    (void)load_manifest(dir / "manifest.json");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1 (b)"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "broken.json")
      << R"({"format":1,"name":"x","image_resolution":8,"vms_resolution":4,"records":[{"id":"q","image":"i.png"}]})";
  EXPECT_THROW((void)load_manifest(dir / "broken.json", false), DataError);
  std::ofstream(dir / "notjson.json") << "{";
  EXPECT_THROW((void)load_manifest(dir / "notjson.json"), DataError);
  EXPECT_THROW((void)load_manifest(dir / "absent.json"), DataError);
}

TEST(Categories, ParseRoundTrip) {
  for (Category c : kAllCategories) EXPECT_EQ(parse_category(to_string(c)), c);
  EXPECT_THROW((void)parse_category("Garage"), DataError);
}

TEST(BuildVms, SingleAllOnesObserver) {
  AnnotationSet a{3, 3, SchemaChannel::True, {std::vector<std::uint8_t>(9, 1)}};
  const auto m = build_vms(a);
  for (double v : m.true_schema.values) EXPECT_EQ(v, 1.0);
  for (double v : m.false_schema.values) EXPECT_EQ(v, 0.0);
}

TEST(BuildVms, DisjointHalvesGiveUniformHalf) {
  std::vector<std::uint8_t> top(16, 0);
  std::vector<std::uint8_t> bottom(16, 0);
  for (int i = 0; i < 8; ++i) top[static_cast<std::size_t>(i)] = 1;
  for (int i = 8; i < 16; ++i) bottom[static_cast<std::size_t>(i)] = 1;
  const auto m = build_vms({4, 4, SchemaChannel::False, {top, bottom}});
  for (double v : m.false_schema.values) EXPECT_EQ(v, 0.5);
  for (double v : m.true_schema.values) EXPECT_EQ(v, 0.0);
}

TEST(BuildVms, MatchesPerCellCountAndIgnoresOrder) {
  std::mt19937_64 rng(1);
  auto a = random_annotations(5, 6, 7, rng);
  const auto m = build_vms(a);
  for (std::size_t cell = 0; cell < 42; ++cell) {
    int count = 0;
    for (const auto& mask : a.masks) count += mask[cell] != 0 ? 1 : 0;
    EXPECT_DOUBLE_EQ(m.true_schema.values[cell], count / 5.0);
  }
  std::reverse(a.masks.begin(), a.masks.end());
  EXPECT_EQ(build_vms(a).true_schema.values, m.true_schema.values);
}

TEST(BuildVms, RejectsEmptyAndMismatchedMasks) {
  EXPECT_THROW((void)build_vms({2, 2, SchemaChannel::True, {}}), DataError);
  EXPECT_THROW((void)build_vms({2, 2, SchemaChannel::True, {std::vector<std::uint8_t>(3)}}), DataError);
}

TEST(SplitObservers, SixObserversPartitionIntoThreeAndThree) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto [a, b] = split_observers(6, rng);
    EXPECT_EQ(a.size(), 3u);
    EXPECT_EQ(b.size(), 3u);
    std::set<std::size_t> all(a.begin(), a.end());
    all.insert(b.begin(), b.end());
    EXPECT_EQ(all.size(), 6u);
    EXPECT_EQ(*all.rbegin(), 5u);
  }
}

TEST(SplitObservers, OddCountGivesLargerFirstHalf) {
  std::mt19937_64 rng(3);
  const auto [a, b] = split_observers(7, rng);
  EXPECT_EQ(a.size(), 4u);
  EXPECT_EQ(b.size(), 3u);
  EXPECT_THROW((void)split_observers(1, rng), DataError);
}

TEST(SplitAnnotations, DeterministicForSeed) {
  std::mt19937_64 src(4);
  const auto a = random_annotations(4, 5, 5, src);
  std::mt19937_64 r1(9);
  std::mt19937_64 r2(9);
  const auto x = split_annotations(a, r1);
  const auto y = split_annotations(a, r2);
  EXPECT_EQ(x.first.true_schema.values, y.first.true_schema.values);
  EXPECT_EQ(x.second.true_schema.values, y.second.true_schema.values);
}

TEST(SplitAnnotations, IdenticalObserversGiveIdenticalHalves) {
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  std::mt19937_64 rng(5);
  const auto [a, b] = split_annotations({2, 2, SchemaChannel::True, {mask, mask}}, rng);
  EXPECT_EQ(a.true_schema.values, b.true_schema.values);
}

TEST(SplitAnnotations, EvenHalvesAverageToFullMap) {
  std::mt19937_64 rng(6);
  const auto a = random_annotations(8, 5, 4, rng);
  const auto full = build_vms(a);
  const auto [x, y] = split_annotations(a, rng);
  for (std::size_t i = 0; i < full.true_schema.size(); ++i) {
    EXPECT_DOUBLE_EQ(0.5 * (x.true_schema.values[i] + y.true_schema.values[i]), full.true_schema.values[i]);
  }
}

TEST(Preprocess, LinearMapOfConstantImages) {
  TempDir dir("pre");
  for (const auto& [value, expected] :
       std::vector<std::pair<int, double>>{{128, 128.0 / 127.5 - 1.0}, {0, -1.0}, {255, 1.0}}) {
    write_rgb(dir / "x.png", 12, static_cast<std::uint8_t>(value));
    const Image im = preprocess(dir / "x.png", 6);
    EXPECT_EQ(im.height, 6);
    for (double v : im.pixels) EXPECT_NEAR(v, expected, 1e-12);
  }
  std::ofstream(dir / "junk.png") << "junk";
  EXPECT_THROW((void)preprocess(dir / "junk.png", 6), DataError);
}

TEST(VmsFiles, RoundTripAtByteGranularity) {
  TempDir dir("vmsfile");
  VmsMap m(3, 3);
  for (int i = 0; i < 9; ++i) {
    m.true_schema.values[static_cast<std::size_t>(i)] = i * 17 / 255.0;
    m.false_schema.values[static_cast<std::size_t>(i)] = (255 - i) / 255.0;
  }
  write_vms(m, dir / "m.true.png", dir / "m.false.png");
  const auto back = read_vms(dir / "m.true.png", dir / "m.false.png");
  for (int i = 0; i < 9; ++i) {
    EXPECT_NEAR(back.true_schema.values[static_cast<std::size_t>(i)], m.true_schema.values[static_cast<std::size_t>(i)], 1e-15);
    EXPECT_NEAR(back.false_schema.values[static_cast<std::size_t>(i)], m.false_schema.values[static_cast<std::size_t>(i)], 1e-15);
  }
  const auto no_false = read_vms(dir / "m.true.png", std::nullopt);
  for (double v : no_false.false_schema.values) EXPECT_EQ(v, 0.0);
}

TEST(Annotations, DirectoryRoundTrip) {
  TempDir dir("ann");
  std::mt19937_64 rng(7);
  const auto a = random_annotations(3, 4, 5, rng);
  save_annotations(a, dir / "set");
  const auto back = load_annotations(dir / "set", SchemaChannel::True);
  EXPECT_EQ(back.height, 4);
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.masks, a.masks);
  EXPECT_THROW((void)load_annotations(dir / "none", SchemaChannel::True), DataError);
}

TEST(Responses, CsvRoundTrip) {
  TempDir dir("resp");
  const std::map<std::string, ResponseCounts> r{{"a", {1, 2, 3, 4}}, {"b", {10, 0, 0, 10}}};
  save_responses(r, dir / "r.csv");
  EXPECT_EQ(load_responses(dir / "r.csv"), r);
}

TEST(Synthetic, OracleExamples) {
  Image black(8, 8, -1.0);
  EXPECT_EQ(synthetic_oracle(black), 0.0);
  Image bright = black;
  const auto [b0, b1] = oracle_window(8);
  EXPECT_EQ(b0, 2);
  EXPECT_EQ(b1, 6);
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x)
      for (int c = 0; c < 3; ++c) bright.at(y, x, c) = 1.0;
  EXPECT_EQ(synthetic_oracle(bright), 1.0);
}

TEST(Synthetic, RecordsMatchIndependentResummation) {
  std::mt19937_64 rng(8);
  const auto ds = make_synthetic_dataset(40, 16, rng);
  ASSERT_EQ(ds.records.size(), 40u);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    // Central 8x8 window of a 16x16 image: rows and columns 4..11.
    double sum = 0.0;
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x)
        for (int c = 0; c < 3; ++c) sum += (r.image.at(y, x, c) + 1.0) / 2.0;
    const double oracle = sum / (8 * 8 * 3);
    EXPECT_NEAR(ds.oracle_scores[i], oracle, 1e-12);
    EXPECT_GE(oracle, 0.0);
    EXPECT_LE(oracle, 1.0);
    const auto& p = ds.patches[i];
    EXPECT_EQ(p.size, 8);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const bool inside = y >= p.top && y < p.top + p.size && x >= p.left && x < p.left + p.size;
        EXPECT_EQ(r.vms->true_schema.at(y, x), inside ? oracle : 0.0);
      }
    EXPECT_EQ(r.category, kAllCategories[i % 8]);
  }
  EXPECT_THROW((void)make_synthetic_dataset(0, 16, rng), UsageError);
}

TEST(Synthetic, DeterministicForSeed) {
  std::mt19937_64 a(9);
  std::mt19937_64 b(9);
  const auto x = make_synthetic_dataset(5, 8, a);
  const auto y = make_synthetic_dataset(5, 8, b);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(x.records[static_cast<std::size_t>(i)].image.pixels, y.records[static_cast<std::size_t>(i)].image.pixels);
}

TEST(Synthetic, NoiselessAnnotationsMarkThePatch) {
  std::mt19937_64 rng(10);
  const PatchGeometry p{2, 3, 4, 0.5};
  const auto a = synthetic_annotations(p, 10, 5, 0.0, rng);
  const auto m = build_vms(a);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const bool inside = y >= 2 && y < 6 && x >= 3 && x < 7;
      EXPECT_EQ(m.true_schema.at(y, x), inside ? 1.0 : 0.0);
    }
}

TEST(Synthetic, ResponsesHaveRequestedTrialsAndGrowWithScore) {
  std::mt19937_64 rng(11);
  const auto lo = synthetic_responses(0.0, 5000, rng);
  const auto hi = synthetic_responses(1.0, 5000, rng);
  EXPECT_EQ(lo.hits + lo.misses, 5000);
  EXPECT_EQ(lo.false_alarms + lo.correct_rejections, 5000);
  EXPECT_GT(hi.hits, lo.hits);
}

}  // namespace
}  // namespace vmsgan
