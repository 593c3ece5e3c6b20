#include "vmsgan_cli/cli.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "vmsgan/error.hpp"

namespace vmsgan::cli {

namespace {

/// Flags land in optionals and are applied on top of the config file after
/// parsing, so an unset flag never clobbers a file value.
class Overrides {
 public:
  template <class T>
  void option(CLI::App* app, const std::string& name, std::function<T&(RunConfig&)> field, const std::string& help) {
    auto slot = std::make_shared<std::optional<T>>();
    app->add_option(name, *slot, help);
    apply_.push_back([slot, field](RunConfig& c) {
      if (*slot) field(c) = **slot;
    });
  }

  void flag(CLI::App* app, const std::string& name, std::function<void(RunConfig&)> set, const std::string& help) {
    auto seen = std::make_shared<bool>(false);
    app->add_flag(name, *seen, help);
    apply_.push_back([seen, set](RunConfig& c) {
      if (*seen) set(c);
    });
  }

  void apply(RunConfig& c) const {
    for (const auto& f : apply_) f(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> apply_;
};

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Memorability-conditioned image generation: data, training, generation and evaluation", "vmsgan"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string out_dir;
  app.add_option("--config", config_path, "JSON run configuration (or a run_config.json snapshot)");
  app.add_option("--out", out_dir, "Output directory");

  Overrides o;
  o.option<std::uint64_t>(&app, "--seed", [](RunConfig& c) -> auto& { return c.seed; }, "Random seed");

  auto* synth = app.add_subcommand("synth", "Write the synthetic patch dataset");
  auto* ingest = app.add_subcommand("ingest", "Build a dataset manifest from image and annotation directories");
  for (auto* sub : {synth, ingest}) {
    o.option<int>(sub, "--resolution", [](RunConfig& c) -> auto& { return c.synth.resolution; },
                  "Synthetic image resolution");
    o.option<int>(sub, "--observers", [](RunConfig& c) -> auto& { return c.synth.observers; },
                  "Synthetic observers per image (0 = no annotations)");
    o.option<double>(sub, "--annotation-noise", [](RunConfig& c) -> auto& { return c.synth.annotation_noise; },
                     "Per-cell flip probability of synthetic annotations");
    o.option<int>(sub, "--trials", [](RunConfig& c) -> auto& { return c.synth.trials; },
                  "Synthetic recognition trials per image (0 = none)");
  }
  o.option<int>(synth, "--n", [](RunConfig& c) -> auto& { return c.synth.n; }, "Number of images");
  std::optional<int> synthetic;
  ingest->add_option("--synthetic", synthetic, "Write N synthetic records instead of reading directories");
  o.option<std::string>(ingest, "--images", [](RunConfig& c) -> auto& { return c.ingest.images; },
                        "Directory of <id>.png images");
  o.option<std::string>(ingest, "--vms", [](RunConfig& c) -> auto& { return c.ingest.vms; },
                        "Directory of <id>.true.png / <id>.false.png maps");
  o.option<std::string>(ingest, "--annotations", [](RunConfig& c) -> auto& { return c.ingest.annotations; },
                        "Directory of <id>/ true-schema observer masks");
  o.option<std::string>(ingest, "--false-annotations",
                        [](RunConfig& c) -> auto& { return c.ingest.false_annotations; },
                        "Directory of <id>/ false-schema observer masks");
  o.option<std::string>(ingest, "--responses", [](RunConfig& c) -> auto& { return c.ingest.responses; },
                        "Recognition counts CSV");
  o.option<std::string>(ingest, "--categories", [](RunConfig& c) -> auto& { return c.ingest.categories; },
                        "CSV image_id,category");
  o.option<std::string>(ingest, "--default-category",
                        [](RunConfig& c) -> auto& { return c.ingest.default_category; },
                        "Category for images missing from --categories");
  o.option<std::string>(ingest, "--name", [](RunConfig& c) -> auto& { return c.ingest.name; }, "Dataset name");
  o.option<int>(ingest, "--image-resolution", [](RunConfig& c) -> auto& { return c.ingest.image_resolution; },
                "Stored image resolution");
  o.option<int>(ingest, "--vms-resolution", [](RunConfig& c) -> auto& { return c.ingest.vms_resolution; },
                "Stored VMS resolution");

  auto* train_pred = app.add_subcommand("train-predictor", "Train the image-to-VMS predictor");
  o.option<std::string>(train_pred, "--manifest", [](RunConfig& c) -> auto& { return c.data.manifest; },
                        "Dataset manifest");
  o.option<int>(train_pred, "--epochs", [](RunConfig& c) -> auto& { return c.predictor.epochs; }, "Epochs");
  o.option<int>(train_pred, "--batch-size", [](RunConfig& c) -> auto& { return c.predictor.batch_size; },
                "Batch size");
  o.option<double>(train_pred, "--lr", [](RunConfig& c) -> auto& { return c.predictor.adam.learning_rate; },
                   "Adam learning rate");
  o.option<int>(train_pred, "--latent-dim", [](RunConfig& c) -> auto& { return c.predictor.latent_dim; },
                "Latent size");
  o.option<int>(train_pred, "--base-channels", [](RunConfig& c) -> auto& { return c.predictor.base_channels; },
                "Channel width");
  o.option<int>(train_pred, "--image-resolution",
                [](RunConfig& c) -> auto& { return c.predictor.image_resolution; }, "Input resolution");
  o.option<int>(train_pred, "--vms-resolution", [](RunConfig& c) -> auto& { return c.predictor.vms_resolution; },
                "Output map resolution");
  o.option<double>(train_pred, "--holdout", [](RunConfig& c) -> auto& { return c.predictor_training.holdout; },
                   "Fraction of records held out for the Pearson report");

  auto* train_gan = app.add_subcommand("train-gan", "Train the memorability-conditioned GAN");
  bool resume = false;
  train_gan->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");
  o.option<std::string>(train_gan, "--manifest", [](RunConfig& c) -> auto& { return c.data.manifest; },
                        "Dataset manifest");
  o.option<std::string>(train_gan, "--predictor",
                        [](RunConfig& c) -> auto& { return c.data.predictor_checkpoint; }, "Predictor checkpoint");
  o.option<int>(train_gan, "--epochs", [](RunConfig& c) -> auto& { return c.gan.epochs; }, "Total epochs");
  o.option<int>(train_gan, "--batch-size", [](RunConfig& c) -> auto& { return c.gan.batch_size; }, "Batch size");
  o.option<double>(train_gan, "--lr", [](RunConfig& c) -> auto& { return c.gan.adam.learning_rate; },
                   "Adam learning rate");
  o.option<double>(train_gan, "--alpha", [](RunConfig& c) -> auto& { return c.gan.alpha; },
                   "Memorability loss weight");
  o.option<double>(train_gan, "--lambda-gp", [](RunConfig& c) -> auto& { return c.gan.lambda_gp; },
                   "Gradient-penalty weight");
  o.option<int>(train_gan, "--n-critic", [](RunConfig& c) -> auto& { return c.gan.n_critic; },
                "Critic steps per generator step");
  o.option<int>(train_gan, "--resolution", [](RunConfig& c) -> auto& { return c.gan.resolution; },
                "Image resolution");
  o.option<int>(train_gan, "--latent-dim", [](RunConfig& c) -> auto& { return c.gan.latent_dim; }, "Noise size");
  o.option<int>(train_gan, "--base-channels", [](RunConfig& c) -> auto& { return c.gan.base_channels; },
                "Channel width");
  o.option<double>(train_gan, "--m-mean", [](RunConfig& c) -> auto& { return c.gan.m_mean; },
                   "Mean of the conditioner distribution");
  o.option<double>(train_gan, "--m-std", [](RunConfig& c) -> auto& { return c.gan.m_std; },
                   "Std of the conditioner distribution");
  o.option<int>(train_gan, "--map-size", [](RunConfig& c) -> auto& { return c.gan.map_size; },
                "Spatial conditioner side");
  o.flag(train_gan, "--spatial", [](RunConfig& c) { c.gan.spatial = true; }, "Condition on a spatial map");

  auto* generate = app.add_subcommand("generate", "Sample images at one conditioner level");
  auto* sweep = app.add_subcommand("sweep", "One latent, a range of conditioner levels");
  bool sweep_spatial = false;
  sweep->add_flag("--spatial", sweep_spatial, "Scale a target map instead of a scalar");
  for (auto* sub : {generate, sweep}) {
    o.option<std::string>(sub, "--checkpoint", [](RunConfig& c) -> auto& { return c.data.gan_checkpoint; },
                          "GAN checkpoint file or training directory");
    o.option<std::string>(sub, "--target-map", [](RunConfig& c) -> auto& { return c.generate.target_map; },
                          "Spatial target (CSV or PNG); default is the central window");
  }
  o.option<int>(generate, "--n", [](RunConfig& c) -> auto& { return c.generate.n; }, "Number of images");
  o.option<double>(generate, "--m", [](RunConfig& c) -> auto& { return c.generate.m; }, "Conditioner level");
  o.option<int>(generate, "--columns", [](RunConfig& c) -> auto& { return c.generate.columns; }, "Grid columns");
  o.option<int>(sweep, "--steps", [](RunConfig& c) -> auto& { return c.generate.steps; }, "Number of levels");
  o.option<double>(sweep, "--m-min", [](RunConfig& c) -> auto& { return c.generate.m_min; }, "First level");
  o.option<double>(sweep, "--m-max", [](RunConfig& c) -> auto& { return c.generate.m_max; }, "Last level");

  auto* analyze = app.add_subcommand("analyze", "Psychometric analyses of a dataset");
  analyze->require_subcommand(1);
  analyze->fallthrough();
  o.option<std::string>(analyze, "--manifest", [](RunConfig& c) -> auto& { return c.data.manifest; },
                        "Dataset manifest");
  o.option<int>(analyze, "--splits", [](RunConfig& c) -> auto& { return c.analysis.splits; },
                "Random observer splits per image");
  for (const char* mode : {"consistency", "dprime", "correlations"}) {
    analyze->add_subcommand(mode)->fallthrough();
  }
  analyze->get_subcommand("consistency")->description("Split-half consistency per category");
  analyze->get_subcommand("dprime")->description("Pooled D' per category and per image");
  analyze->get_subcommand("correlations")->description("Consistency and VMS against D'");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained generator");
  evaluate->require_subcommand(1);
  evaluate->fallthrough();
  o.option<std::string>(evaluate, "--checkpoint", [](RunConfig& c) -> auto& { return c.data.gan_checkpoint; },
                        "GAN checkpoint file or training directory");
  auto* fid = evaluate->add_subcommand("fid", "Frechet distance to real images at two levels");
  fid->fallthrough();
  o.option<std::string>(fid, "--manifest", [](RunConfig& c) -> auto& { return c.data.manifest; },
                        "Dataset manifest (real images)");
  o.option<int>(fid, "--sets", [](RunConfig& c) -> auto& { return c.fid.protocol.sets; }, "Number of sets");
  o.option<int>(fid, "--per-set", [](RunConfig& c) -> auto& { return c.fid.protocol.per_set; },
                "Generated images per set and level");
  o.option<int>(fid, "--real-per-set", [](RunConfig& c) -> auto& { return c.fid.protocol.real_per_set; },
                "Real images per set (0 = --per-set)");
  o.option<double>(fid, "--m-low", [](RunConfig& c) -> auto& { return c.fid.protocol.m_low; }, "Low level");
  o.option<double>(fid, "--m-high", [](RunConfig& c) -> auto& { return c.fid.protocol.m_high; }, "High level");
  o.option<int>(fid, "--pool", [](RunConfig& c) -> auto& { return c.fid.pool; },
                "Raw-pixel pooling side (0 = full resolution)");
  auto* pairs = evaluate->add_subcommand("pairs", "Paired low/high generation and score comparison");
  pairs->fallthrough();
  o.option<std::string>(pairs, "--predictor", [](RunConfig& c) -> auto& { return c.data.predictor_checkpoint; },
                        "Predictor checkpoint (internal scorer)");
  o.option<int>(pairs, "--n", [](RunConfig& c) -> auto& { return c.pairs.n; }, "Number of pairs");
  o.option<double>(pairs, "--m-low", [](RunConfig& c) -> auto& { return c.pairs.m_low; }, "Low level");
  o.option<double>(pairs, "--m-high", [](RunConfig& c) -> auto& { return c.pairs.m_high; }, "High level");
  o.option<double>(pairs, "--threshold", [](RunConfig& c) -> auto& { return c.pairs.threshold; },
                   "Score threshold for the above/below split");
  o.option<double>(pairs, "--bin-width", [](RunConfig& c) -> auto& { return c.pairs.bin_width; },
                   "Histogram bin width");
  o.option<std::string>(pairs, "--scorer", [](RunConfig& c) -> auto& { return c.pairs.scorer; },
                        "internal | oracle | external | none");
  o.option<std::string>(pairs, "--scores", [](RunConfig& c) -> auto& { return c.pairs.scores; },
                        "External score CSV (filename,score)");
  o.flag(pairs, "--no-images", [](RunConfig& c) { c.pairs.save_images = false; }, "Do not write pair images");
  o.option<int>(pairs, "--window-top", [](RunConfig& c) -> auto& { return c.pairs.window_top; },
                "Spatial window top cell");
  o.option<int>(pairs, "--window-left", [](RunConfig& c) -> auto& { return c.pairs.window_left; },
                "Spatial window left cell");
  o.option<int>(pairs, "--window-size", [](RunConfig& c) -> auto& { return c.pairs.window_size; },
                "Spatial window side");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  RunConfig config;
  if (!config_path.empty()) config = load_run_config(config_path);
  o.apply(config);
  if (synthetic) config.synth.n = *synthetic;

  const std::filesystem::path dir = out_dir;
  const Console io{out, err};
  if (synth->parsed()) {
    run_synth(config, dir, io);
  } else if (ingest->parsed()) {
    run_ingest(config, dir, synthetic.has_value(), io);
  } else if (train_pred->parsed()) {
    run_train_predictor(config, dir, io);
  } else if (train_gan->parsed()) {
    run_train_gan(config, dir, resume, io);
  } else if (generate->parsed()) {
    run_generate(config, dir, io);
  } else if (sweep->parsed()) {
    run_sweep(config, dir, sweep_spatial, io);
  } else if (analyze->parsed()) {
    run_analyze(config, dir, analyze->get_subcommands().front()->get_name(), io);
  } else if (evaluate->parsed()) {
    run_evaluate(config, dir, evaluate->get_subcommands().front()->get_name(), io);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace vmsgan::cli
