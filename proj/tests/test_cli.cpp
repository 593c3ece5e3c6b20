#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vmsgan/csv.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"
#include "vmsgan/evaluation.hpp"
#include "vmsgan/memgan.hpp"
#include "vmsgan/vms_predictor.hpp"
#include "vmsgan_cli/cli.hpp"

namespace vmsgan {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> list(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

void write_gray(const fs::path& path, int size, std::uint8_t value) {
  Raster8 r{size, size, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size * 3), value)};
  write_png(path, r);
}

AnnotationSet masks(int size, const std::vector<std::vector<int>>& marked) {
  AnnotationSet a;
  a.height = a.width = size;
  for (const auto& cells : marked) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(size * size), 0);
    for (int c : cells) m[static_cast<std::size_t>(c)] = 1;
    a.masks.push_back(std::move(m));
  }
  return a;
}

/// Two-image source tree: a (Kitchen) and b (Big), 4x4 annotations from 3 observers.
struct IngestFixture {
  TempDir root{"cli_ingest"};
  IngestFixture() {
    fs::create_directories(root / "images");
    write_gray(root / "images" / "a.png", 12, 40);
    write_gray(root / "images" / "b.png", 12, 200);
    save_annotations(masks(4, {{0, 1}, {0}, {0, 5}}), root / "ann" / "a");
    save_annotations(masks(4, {{15}, {14, 15}, {}}), root / "ann" / "b");
    std::ofstream(root / "categories.csv") << "image_id,category\na,Kitchen\nb,Big\n";
    std::ofstream(root / "responses.csv")
        << "image_id,hits,misses,false_alarms,correct_rejections\na,8,2,1,9\nb,5,5,5,5\n";
  }
  std::vector<std::string> args(const fs::path& out) const {
    return {"ingest",        "--images",     (root / "images").string(),       "--annotations",
            (root / "ann").string(), "--categories", (root / "categories.csv").string(), "--responses",
            (root / "responses.csv").string(), "--image-resolution", "8", "--vms-resolution", "4",
            "--out",         out.string()};
  }
};

TEST(CliIngest, TwoRecordFixture) {
  IngestFixture fx;
  TempDir out("cli_ingest_out");
  const Result r = cli(fx.args(out.path()));
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const DatasetManifest m = load_manifest(out / "manifest.json");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].id, "a");
  EXPECT_EQ(m.records[0].category, Category::Kitchen);
  EXPECT_EQ(m.records[1].category, Category::Big);
  EXPECT_EQ(m.records[0].responses, (ResponseCounts{8, 2, 1, 9}));
  const ImageRecord a = load_record(m, 0);
  EXPECT_EQ(a.image.height, 8);
  EXPECT_DOUBLE_EQ(a.image.pixels[0], 40 / 127.5 - 1.0);
  // Cell 0 marked by 3 of 3 observers, cells 1 and 5 by 1 of 3; stored as 8-bit gray.
  ASSERT_TRUE(a.vms);
  EXPECT_DOUBLE_EQ(a.vms->true_schema.values[0], 1.0);
  EXPECT_NEAR(a.vms->true_schema.values[1], 1.0 / 3.0, 0.5 / 255.0);
  EXPECT_NEAR(a.vms->true_schema.values[5], 1.0 / 3.0, 0.5 / 255.0);
  EXPECT_DOUBLE_EQ(a.vms->true_schema.values[2], 0.0);
  EXPECT_TRUE(fs::exists(out / "run_config.json"));
  EXPECT_FALSE(fs::exists(out / ".lock"));
}

TEST(CliIngest, BrokenRecordIsNamed) {
  IngestFixture fx;
  save_annotations(masks(3, {{0}}), fx.root / "ann" / "b");
  // Masks of two extents in one set.
  Raster8 odd{5, 5, 1, std::vector<std::uint8_t>(25, 255)};
  write_png(fx.root / "ann" / "b" / "zz.png", odd);
  TempDir out("cli_ingest_bad");
  const Result r = cli(fx.args(out.path()));
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("record 1 (b)"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find("record 0"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(out / "manifest.json"));
}

TEST(CliIngest, MissingCategoryIsDataError) {
  IngestFixture fx;
  std::ofstream(fx.root / "categories.csv") << "image_id,category\na,Kitchen\n";
  TempDir out("cli_ingest_cat");
  const Result r = cli(fx.args(out.path()));
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("record 1 (b): no category"), std::string::npos) << r.err;
}

TEST(CliIngest, SyntheticRecordCount) {
  TempDir out("cli_synth");
  const Result r = cli({"ingest", "--synthetic", "12", "--resolution", "8", "--observers", "2", "--out",
                        out.path().string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const DatasetManifest m = load_manifest(out / "manifest.json");
  EXPECT_EQ(m.records.size(), 12u);
  EXPECT_EQ(load_responses(out / "responses.csv").size(), 12u);
  EXPECT_EQ(read_csv(out / "oracle_scores.csv").rows.size(), 12u);
  EXPECT_EQ(load_annotations(*m.records[3].annotations_true, SchemaChannel::True).observers(), 2u);
}

TEST(CliAnalyze, IdenticalObserversGiveUnitConsistency) {
  TempDir data("cli_perfect");
  ASSERT_EQ(cli({"synth", "--n", "16", "--resolution", "8", "--observers", "4", "--annotation-noise", "0", "--out",
                 data.path().string()})
                .code,
            0);
  TempDir out("cli_perfect_out");
  const Result r = cli({"analyze", "consistency", "--manifest", (data / "manifest.json").string(), "--splits", "3",
                        "--out", out.path().string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const CsvTable t = read_csv(out / "consistency.csv");
  ASSERT_FALSE(t.rows.empty());
  for (const auto& row : t.rows) EXPECT_EQ(parse_number(row[2], "consistency"), 1.0) << row[0];
}

TEST(CliAnalyze, DegenerateMasksAreNumericError) {
  IngestFixture fx;
  save_annotations(masks(4, {{}, {}, {}}), fx.root / "ann" / "a");
  save_annotations(masks(4, {{}, {}}), fx.root / "ann" / "b");
  TempDir data("cli_blank");
  ASSERT_EQ(cli(fx.args(data.path())).code, 0);
  TempDir out("cli_blank_out");
  const Result r = cli({"analyze", "consistency", "--manifest", (data / "manifest.json").string(), "--out",
                        out.path().string()});
  EXPECT_EQ(r.code, cli::kExitNumeric) << r.err;
}

TEST(CliAnalyze, CorrelationsNeedResponses) {
  TempDir data("cli_noresp");
  ASSERT_EQ(cli({"synth", "--n", "8", "--resolution", "8", "--observers", "2", "--trials", "0", "--out",
                 data.path().string()})
                .code,
            0);
  TempDir out("cli_noresp_out");
  const Result r = cli({"analyze", "dprime", "--manifest", (data / "manifest.json").string(), "--out",
                        out.path().string()});
  EXPECT_EQ(r.code, cli::kExitData);
}

/// Synthetic data, an untrained predictor and GAN settings small enough for unit tests.
class CliTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new TempDir("cli_training");
    ASSERT_EQ(cli({"synth", "--n", "16", "--resolution", "8", "--observers", "2", "--out", data().string()}).code, 0);
    const Result r = cli({"train-predictor", "--manifest", manifest(), "--image-resolution", "8", "--vms-resolution",
                          "8", "--latent-dim", "2", "--base-channels", "2", "--epochs", "0", "--out",
                          (root_->path() / "pred").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete root_;
    root_ = nullptr;
  }

  static fs::path data() { return root_->path() / "data"; }
  static std::string manifest() { return (data() / "manifest.json").string(); }
  static std::string predictor() { return (root_->path() / "pred" / "predictor.ckpt").string(); }

  static std::vector<std::string> gan_args(const fs::path& out, int epochs, bool spatial = false) {
    std::vector<std::string> a = {"train-gan",   "--manifest",      manifest(), "--predictor",  predictor(),
                                  "--resolution", "8",              "--latent-dim", "4",        "--base-channels",
                                  "2",           "--batch-size",    "4",        "--n-critic",   "2",
                                  "--epochs",    std::to_string(epochs), "--out", out.string()};
    if (spatial) a.insert(a.end(), {"--spatial", "--map-size", "4"});
    return a;
  }

  static TempDir* root_;
};

TempDir* CliTraining::root_ = nullptr;

TEST_F(CliTraining, PredictorZeroEpochsWritesInitialCheckpointOnly) {
  const fs::path dir = root_->path() / "pred";
  // One held-out record is too few for a Pearson report.
  EXPECT_EQ(list(dir), (std::vector<std::string>{"predictor.ckpt", "predictor_loss.csv", "run_config.json"}));
  PredictorConfig c;
  c.image_resolution = 8;
  c.vms_resolution = 8;
  c.latent_dim = 2;
  c.base_channels = 2;
  std::mt19937_64 rng(1);
  const VmsPredictor fresh(c, rng);
  const VmsPredictor saved = VmsPredictor::load(dir / "predictor.ckpt");
  ASSERT_EQ(saved.parameters().size(), fresh.parameters().size());
  EXPECT_TRUE(std::equal(fresh.parameters().begin(), fresh.parameters().end(), saved.parameters().begin()));
  EXPECT_TRUE(read_csv(dir / "predictor_loss.csv").rows.empty());
}

TEST_F(CliTraining, PredictorRejectsResolutionMismatch) {
  TempDir out("cli_pred_res");
  const Result r = cli({"train-predictor", "--manifest", manifest(), "--image-resolution", "16", "--epochs", "0",
                        "--out", out.path().string()});
  EXPECT_EQ(r.code, cli::kExitData);
}

TEST_F(CliTraining, GanZeroEpochsWritesInitialCheckpoint) {
  TempDir out("cli_gan0");
  const Result r = cli(gan_args(out.path(), 0));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(list(out.path()), (std::vector<std::string>{"gan_epoch_0000.ckpt", "loss.csv", "run_config.json"}));
  EXPECT_TRUE(read_csv(out / "loss.csv").rows.empty());
}

TEST_F(CliTraining, LossLogsAreByteIdentical) {
  TempDir a("cli_det_a"), b("cli_det_b");
  ASSERT_EQ(cli(gan_args(a.path(), 2)).code, 0);
  ASSERT_EQ(cli(gan_args(b.path(), 2)).code, 0);
  const std::string log = slurp(a / "loss.csv");
  // 16 images / batch 4 = 4 critic steps per epoch, n_critic 2: 2 generator steps.
  EXPECT_EQ(read_csv(a / "loss.csv").rows.size(), 4u);
  EXPECT_EQ(log, slurp(b / "loss.csv"));
  EXPECT_EQ(slurp(a / "gan_epoch_0002.ckpt"), slurp(b / "gan_epoch_0002.ckpt"));
  EXPECT_EQ(list(a.path()), (std::vector<std::string>{"gan_epoch_0001.ckpt", "gan_epoch_0002.ckpt", "loss.csv",
                                                      "run_config.json"}));
}

TEST_F(CliTraining, ResumeContinuesBitExactly) {
  TempDir straight("cli_resume_a"), split("cli_resume_b");
  ASSERT_EQ(cli(gan_args(straight.path(), 3)).code, 0);
  ASSERT_EQ(cli(gan_args(split.path(), 1)).code, 0);
  // Rows written after the last checkpoint are dropped on resume.
  std::ofstream(split / "loss.csv", std::ios::app) << "99,0,0,0,0\n";
  auto resume = gan_args(split.path(), 3);
  resume.push_back("--resume");
  const Result r = cli(resume);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(straight / "loss.csv"), slurp(split / "loss.csv"));
  EXPECT_EQ(slurp(straight / "gan_epoch_0003.ckpt"), slurp(split / "gan_epoch_0003.ckpt"));
}

TEST_F(CliTraining, ResumeRejectsChangedConfig) {
  TempDir out("cli_resume_bad");
  ASSERT_EQ(cli(gan_args(out.path(), 1)).code, 0);
  auto args = gan_args(out.path(), 2);
  args.insert(args.end(), {"--alpha", "3", "--resume"});
  const Result r = cli(args);
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("differs from the checkpoint"), std::string::npos) << r.err;
}

TEST_F(CliTraining, ResumeWithoutCheckpointIsUsageError) {
  TempDir out("cli_resume_none");
  auto args = gan_args(out.path(), 1);
  args.push_back("--resume");
  EXPECT_EQ(cli(args).code, cli::kExitUsage);
}

TEST_F(CliTraining, SweepStepsAndDeterminism) {
  TempDir gan("cli_sweep_gan");
  ASSERT_EQ(cli(gan_args(gan.path(), 1)).code, 0);
  TempDir one("cli_sweep1");
  ASSERT_EQ(cli({"sweep", "--checkpoint", gan.path().string(), "--steps", "1", "--m-min", "0.25", "--out",
                 one.path().string()})
                .code,
            0);
  const CsvTable t1 = read_csv(one / "sweep.csv");
  ASSERT_EQ(t1.rows.size(), 1u);
  EXPECT_EQ(t1.rows[0][1], "0.25");

  TempDir a("cli_sweep8a"), b("cli_sweep8b");
  for (const auto* d : {&a, &b}) {
    ASSERT_EQ(cli({"sweep", "--checkpoint", gan.path().string(), "--steps", "8", "--out", d->path().string()}).code,
              0);
  }
  const CsvTable t8 = read_csv(a / "sweep.csv");
  ASSERT_EQ(t8.rows.size(), 8u);
  EXPECT_EQ(t8.rows.front()[1], "0");
  EXPECT_EQ(t8.rows.back()[1], "1");
  for (const auto& row : t8.rows) EXPECT_EQ(slurp(a / row[2]), slurp(b / row[2])) << row[2];
  EXPECT_EQ(slurp(a / "sweep_grid.png"), slurp(b / "sweep_grid.png"));

  TempDir bad("cli_sweep_spatial");
  EXPECT_EQ(cli({"sweep", "--checkpoint", gan.path().string(), "--spatial", "--out", bad.path().string()}).code,
            cli::kExitUsage);
}

TEST_F(CliTraining, GenerateWritesNamedImages) {
  TempDir gan("cli_gen_gan");
  ASSERT_EQ(cli(gan_args(gan.path(), 0)).code, 0);
  TempDir out("cli_gen");
  ASSERT_EQ(cli({"generate", "--checkpoint", (gan / "gan_epoch_0000.ckpt").string(), "--n", "3", "--m", "0.7",
                 "--seed", "5", "--out", out.path().string()})
                .code,
            0);
  const CsvTable t = read_csv(out / "generate.csv");
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[1][3], pair_filename(pair_seed(5, 1), 0.7));
  EXPECT_TRUE(fs::exists(out / t.rows[1][3]));
  EXPECT_TRUE(fs::exists(out / "grid.png"));
}

TEST_F(CliTraining, SpatialGenerateAndPairs) {
  TempDir gan("cli_spatial_gan");
  ASSERT_EQ(cli(gan_args(gan.path(), 0, true)).code, 0);
  std::ofstream(gan / "target.csv") << "0,0\n0,1\n";
  TempDir out("cli_spatial_gen");
  const Result r = cli({"generate", "--checkpoint", gan.path().string(), "--n", "2", "--target-map",
                        (gan / "target.csv").string(), "--out", out.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  TempDir pairs("cli_spatial_pairs");
  const Result p = cli({"evaluate", "pairs", "--checkpoint", gan.path().string(), "--predictor", predictor(), "--n",
                        "4", "--out", pairs.path().string()});
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(read_csv(pairs / "pairs.csv").rows.size(), 4u);
}

TEST_F(CliTraining, PairsRowCountAndExternalScores) {
  TempDir gan("cli_pairs_gan");
  ASSERT_EQ(cli(gan_args(gan.path(), 0)).code, 0);
  TempDir out("cli_pairs");
  ASSERT_EQ(cli({"evaluate", "pairs", "--checkpoint", gan.path().string(), "--scorer", "oracle", "--n", "10",
                 "--out", out.path().string()})
                .code,
            0);
  const CsvTable pairs = read_csv(out / "pairs.csv");
  ASSERT_EQ(pairs.rows.size(), 10u);
  EXPECT_EQ(list(out / "images").size(), 20u);
  const CsvTable summary = read_csv(out / "summary.csv");
  EXPECT_EQ(summary.rows.at(0)[summary.column("total")], "10");

  // Score every high image 1 and every low image 0: all 10 pairs positive.
  std::map<std::string, double> scores;
  for (const auto& row : pairs.rows) {
    scores[row[pairs.column("file_low")]] = 0.0;
    scores[row[pairs.column("file_high")]] = 1.0;
  }
  ExternalScores::save(scores, out / "ext.csv");
  TempDir ext("cli_pairs_ext");
  const Result r = cli({"evaluate", "pairs", "--checkpoint", gan.path().string(), "--scorer", "external", "--scores",
                        (out / "ext.csv").string(), "--n", "10", "--no-images", "--out", ext.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable s = read_csv(ext / "summary.csv");
  EXPECT_EQ(s.rows.at(0)[s.column("positive")], "10");
  EXPECT_FALSE(fs::exists(ext / "images"));

  TempDir missing("cli_pairs_missing");
  EXPECT_EQ(cli({"evaluate", "pairs", "--checkpoint", gan.path().string(), "--scorer", "external", "--scores",
                 (out / "absent.csv").string(), "--out", missing.path().string()})
                .code,
            cli::kExitData);
  EXPECT_EQ(cli({"evaluate", "pairs", "--checkpoint", gan.path().string(), "--scorer", "magic", "--out",
                 missing.path().string()})
                .code,
            cli::kExitUsage);
}

TEST_F(CliTraining, FidWritesOneRowPerSet) {
  TempDir gan("cli_fid_gan");
  ASSERT_EQ(cli(gan_args(gan.path(), 0)).code, 0);
  TempDir out("cli_fid");
  const Result r = cli({"evaluate", "fid", "--checkpoint", gan.path().string(), "--manifest", manifest(), "--sets",
                        "3", "--per-set", "6", "--pool", "2", "--out", out.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_csv(out / "fid.csv").rows.size(), 3u);
}

TEST(CliLock, BusyOutputDirectoryIsRefused) {
  TempDir out("cli_lock");
  const int fd = ::open((out / ".lock").c_str(), O_RDWR | O_CREAT, 0644);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
  const Result r = cli({"synth", "--n", "2", "--resolution", "8", "--out", out.path().string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("in use"), std::string::npos) << r.err;
  ::close(fd);
  EXPECT_EQ(cli({"synth", "--n", "2", "--resolution", "8", "--out", out.path().string()}).code, 0);
}

TEST(CliExitCodes, Mapping) {
  EXPECT_EQ(cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(cli({}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"train-gan", "--epochs", "lots"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"analyze"}).code, cli::kExitUsage);
  TempDir out("cli_codes");
  EXPECT_EQ(cli({"analyze", "dprime", "--out", out.path().string()}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"analyze", "dprime", "--manifest", (out / "none.json").string(), "--out", out.path().string()}).code,
            cli::kExitData);
  EXPECT_EQ(cli({"synth", "--config", (out / "none.json").string(), "--out", out.path().string()}).code,
            cli::kExitUsage);
}

TEST(CliConfig, FileValuesAndFlagOverrides) {
  TempDir out("cli_config");
  std::ofstream(out / "cfg.json") << R"({"seed": 9, "synth": {"n": 3, "resolution": 8, "observers": 1}})";
  const Result r =
      cli({"synth", "--config", (out / "cfg.json").string(), "--n", "5", "--out", (out / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_manifest(out / "run" / "manifest.json").records.size(), 5u);
  // The snapshot records the resolved settings and loads back as a config.
  TempDir again("cli_config_again");
  ASSERT_EQ(cli({"synth", "--config", (out / "run" / "run_config.json").string(), "--out", again.path().string()})
                .code,
            0);
  EXPECT_EQ(slurp(out / "run" / "images" / "s00004.png"), slurp(again / "images" / "s00004.png"));
}

}  // namespace
}  // namespace vmsgan
