#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "commands.hpp"
#include "output_dir.hpp"
#include "vmsgan/csv.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/error.hpp"
#include "vmsgan/psychometrics.hpp"

namespace vmsgan::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kHoldoutStream = 0x9e3779b97f4a7c15ULL;

const std::vector<std::string> kGanLogHeader = {"step", "critic_loss", "gen_adversarial", "gen_memorability",
                                                "penalty"};

std::vector<ImageRecord> load_training_records(const DatasetManifest& manifest, int image_resolution) {
  if (manifest.image_resolution != image_resolution) {
    throw DataError("manifest images are " + std::to_string(manifest.image_resolution) + "px but the model expects " +
                    std::to_string(image_resolution) + "px");
  }
  return load_records(manifest);
}

/// Keeps loss rows up to and including `last_step`.
void truncate_log(const fs::path& path, std::int64_t last_step) {
  if (!fs::exists(path)) return;
  const CsvTable t = read_csv(path);
  const std::size_t step = t.column("step");
  CsvWriter out(path, t.header);
  for (const auto& row : t.rows) {
    if (parse_integer(row.at(step), "step") <= last_step) out.row(row);
  }
}

}  // namespace

void run_train_predictor(const RunConfig& config, const fs::path& out_dir, Console io) {
  const PredictorConfig& pc = config.predictor;
  pc.validate();
  const double holdout = config.predictor_training.holdout;
  if (!(holdout >= 0.0 && holdout < 1.0)) throw UsageError("--holdout must lie in [0, 1)");
  const DatasetManifest manifest = load_manifest(require_path(config.data.manifest, "--manifest"));
  std::vector<ImageRecord> records = load_training_records(manifest, pc.image_resolution);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    if (!r.vms) throw DataError("record " + std::to_string(i) + " (" + r.id + ") has no VMS map");
    if (r.vms->height() != pc.vms_resolution) {
      r.vms->true_schema = area_resample(r.vms->true_schema, pc.vms_resolution, pc.vms_resolution);
      r.vms->false_schema = area_resample(r.vms->false_schema, pc.vms_resolution, pc.vms_resolution);
    }
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(config.seed ^ kHoldoutStream);
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_hold = static_cast<std::size_t>(holdout * static_cast<double>(records.size()));
  std::vector<ImageRecord> train, held;
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_hold ? held : train).push_back(records[order[k]]);
  if (train.empty()) throw DataError("no training records left after the holdout split");

  OutputDir dir(out_dir, "train-predictor", config);
  CsvWriter log(dir / "predictor_loss.csv", {"epoch", "total", "reconstruction", "kl"});
  std::mt19937_64 rng(config.seed);
  const VmsPredictor predictor =
      train_predictor(train, pc, rng, nullptr, [&](int index, const VaeLoss& loss, const VmsPredictor& p) {
        const int epoch = index + 1;
        log.row({std::to_string(epoch), format_number(loss.total), format_number(loss.reconstruction),
                 format_number(loss.kl)});
        log.flush();
        p.save(epoch_checkpoint(dir.path(), "predictor", epoch));
        prune_checkpoints(dir.path(), "predictor");
        io.out << "epoch " << epoch << ": loss " << format_number(loss.total) << '\n';
      });
  predictor.save(dir / "predictor.ckpt");
  io.out << "wrote " << (dir / "predictor.ckpt").string() << '\n';

  if (held.size() >= 3) {
    std::vector<Image> images;
    std::vector<double> truth;
    for (const auto& r : held) {
      images.push_back(r.image);
      truth.push_back(r.vms->true_schema.mean());
    }
    const std::vector<double> predicted = predictor.predict_scores(to_tensor(images));
    CsvWriter eval(dir / "predictor_eval.csv", {"holdout_images", "pearson"});
    try {
      const double r = pearson(predicted, truth);
      eval.row({std::to_string(held.size()), format_number(r)});
      io.out << "held-out Pearson (predicted vs mean true schema): " << format_number(r) << '\n';
    } catch (const UsageError&) {
      eval.row({std::to_string(held.size()), ""});
      io.out << "held-out Pearson undefined (constant scores)\n";
    }
  }
}

void run_train_gan(const RunConfig& config, const fs::path& out_dir, bool resume, Console io) {
  config.gan.validate();
  const VmsPredictor predictor =
      VmsPredictor::load(require_path(config.data.predictor_checkpoint, "--predictor"));
  if (predictor.config().image_resolution != config.gan.resolution) {
    throw UsageError("predictor expects " + std::to_string(predictor.config().image_resolution) +
                     "px images but the GAN resolution is " + std::to_string(config.gan.resolution));
  }
  const DatasetManifest manifest = load_manifest(require_path(config.data.manifest, "--manifest"));
  std::vector<Image> images;
  for (auto& r : load_training_records(manifest, config.gan.resolution)) images.push_back(std::move(r.image));
  if (static_cast<int>(images.size()) < config.gan.batch_size) {
    throw DataError("dataset has " + std::to_string(images.size()) + " images, fewer than one batch");
  }
  const Tensor<double> real = to_tensor(images);

  OutputDir dir(out_dir, resume ? "train-gan --resume" : "train-gan", config);
  const fs::path log_path = dir / "loss.csv";
  GanState state;
  if (resume) {
    const auto latest = latest_checkpoint(dir.path(), "gan");
    if (!latest) throw UsageError("--resume: no gan_epoch_*.ckpt in " + dir.path().string());
    state = gan_state_from_checkpoint(Checkpoint::load(*latest));
    const std::string saved = config_hash(state.config);
    const std::string current = config_hash(config.gan);
    if (saved != current) {
      throw UsageError("--resume: configuration differs from the checkpoint (hash " + saved + " vs " + current + ")");
    }
    state.config.epochs = config.gan.epochs;
    truncate_log(log_path, state.step);
    io.out << "resuming from " << latest->string() << " at epoch " << state.epoch << '\n';
  } else {
    state = init_gan_state(config.gan, config.seed);
    CsvWriter fresh(log_path, kGanLogHeader);
    gan_checkpoint(state).save(epoch_checkpoint(dir.path(), "gan", 0));
  }

  CsvWriter log(log_path, kGanLogHeader, true);
  const int remaining = std::max(0, config.gan.epochs - state.epoch);
  train_epochs(
      state, real, predictor, remaining,
      [&](const TrainingLogRow& row) {
        log.row({std::to_string(row.step), format_number(row.critic_loss), format_number(row.gen_adversarial),
                 format_number(row.gen_memorability), format_number(row.penalty)});
      },
      [&](const GanState& s) {
        log.flush();
        gan_checkpoint(s).save(epoch_checkpoint(dir.path(), "gan", s.epoch));
        prune_checkpoints(dir.path(), "gan");
        io.out << "epoch " << s.epoch << ": step " << s.step << '\n';
      });
  io.out << "trained to epoch " << state.epoch << " (" << state.step << " generator steps)\n";
}

}  // namespace vmsgan::cli
