#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vmsgan/checkpoint.hpp"
#include "vmsgan/image.hpp"
#include "vmsgan/nn/adam.hpp"
#include "vmsgan/nn/network.hpp"
#include "vmsgan/vms_predictor.hpp"

namespace vmsgan {

/// Hyperparameters of the memorability-constrained WGAN-GP.
struct GanConfig {
  double alpha = 1.0;       ///< weight of the memorability loss
  double lambda_gp = 10.0;  ///< gradient-penalty coefficient
  int n_critic = 5;         ///< critic steps per generator step
  nn::AdamConfig adam{1e-4, 0.5, 0.99, 1e-8};
  int batch_size = 64;
  int epochs = 320;
  double m_mean = 0.5;  ///< conditioner M ~ N(m_mean, m_std^2) truncated to [0, 1]
  double m_std = 0.25;
  double pixelnorm_epsilon = 1e-8;

  int resolution = 64;
  int latent_dim = 64;
  int base_channels = 16;
  bool spatial = false;  ///< M is a map_size x map_size map instead of a scalar
  int map_size = 10;

  void validate() const;
  [[nodiscard]] int conditioner_size() const { return spatial ? map_size * map_size : 1; }
};

void to_json(nlohmann::json& j, const GanConfig& c);
void from_json(const nlohmann::json& j, GanConfig& c);

/// Noise vector plus memorability conditioner (one value, or a row-major map).
struct LatentSample {
  std::vector<double> z;
  std::vector<double> m;
};

/// Rejection sampling from N(mean, std^2) restricted to [0, 1].
[[nodiscard]] double sample_truncated_normal(double mean, double std, std::mt19937_64& rng);

/// z ~ N(0, I). Scalar M ~ truncated normal; a spatial M is a random square
/// region (side 30-60% of the map) at a truncated-normal level, zero elsewhere.
[[nodiscard]] std::vector<LatentSample> sample_latent(int batch_size, const GanConfig& config, std::mt19937_64& rng);

/// b = a / sqrt(mean_c(a^2) + epsilon) per pixel (NCHW tensor).
[[nodiscard]] Tensor<double> pixel_norm(const Tensor<double>& activations, double epsilon);

/// Appends the batch-mean population standard deviation as one constant channel.
[[nodiscard]] Tensor<double> minibatch_stddev(const Tensor<double>& features);

/// G(z, m): z and flattened m are concatenated at the input.
class Generator {
 public:
  Generator() = default;
  Generator(const GanConfig& config, std::mt19937_64& rng);
  Generator(const GanConfig& config, std::vector<double> parameters);

  [[nodiscard]] const nn::Network& network() const { return net_; }
  [[nodiscard]] std::span<const double> parameters() const { return params_; }
  [[nodiscard]] std::span<double> parameters() { return params_; }
  [[nodiscard]] int latent_dim() const { return latent_dim_; }
  [[nodiscard]] int conditioner_size() const { return conditioner_size_; }
  [[nodiscard]] int resolution() const { return resolution_; }

  /// (batch, latent_dim + conditioner_size, 1, 1) input rows.
  [[nodiscard]] Tensor<double> input(std::span<const LatentSample> latents) const;
  [[nodiscard]] Tensor<double> generate(std::span<const LatentSample> latents) const;
  [[nodiscard]] Image generate(std::span<const double> z, std::span<const double> m) const;
  [[nodiscard]] Image generate_spatial(std::span<const double> z, const Grid& m_map) const;

 private:
  nn::Network net_;
  std::vector<double> params_;
  int latent_dim_ = 0;
  int conditioner_size_ = 0;
  int resolution_ = 0;
};

/// Unconstrained scalar critic D(x).
class Critic {
 public:
  Critic() = default;
  Critic(nn::Network network, std::vector<double> parameters);
  Critic(const GanConfig& config, std::mt19937_64& rng);

  [[nodiscard]] const nn::Network& network() const { return net_; }
  [[nodiscard]] std::span<const double> parameters() const { return params_; }
  [[nodiscard]] std::span<double> parameters() { return params_; }

  [[nodiscard]] std::vector<double> score(const Tensor<double>& images) const;

 private:
  nn::Network net_;
  std::vector<double> params_;
};

enum class ImageRole { Real, Fake, Interpolated };

struct ImageBatch {
  ImageRole role = ImageRole::Real;
  Tensor<double> images;
  std::vector<double> epsilon;  ///< per-sample mixing weights (interpolated batches)
};

/// x~ = eps * real + (1 - eps) * fake, one eps per sample.
[[nodiscard]] ImageBatch interpolate(const Tensor<double>& real, const Tensor<double>& fake,
                                     std::span<const double> epsilon);

[[nodiscard]] std::vector<double> draw_interpolation_weights(int batch, std::mt19937_64& rng);

/// lambda * mean_i (||d S / d x~_i||_2 - 1)^2 with S = sum_j D(x~)_j.
/// When `grad` is non-empty, d(penalty)/d(critic params) is added into it
/// using a forward-over-reverse pass.
double gradient_penalty(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                        std::span<const double> epsilon, double lambda_gp, std::span<double> grad = {});
double gradient_penalty(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                        std::mt19937_64& rng, double lambda_gp, std::span<double> grad = {});

struct CriticLoss {
  double total = 0.0;
  double fake_mean = 0.0;
  double real_mean = 0.0;
  double penalty = 0.0;
};

/// mean D(fake) - mean D(real) + gradient penalty. Only images enter: the
/// conditioner that produced the fakes plays no part in the critic update.
CriticLoss critic_loss(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                       std::span<const double> epsilon, double lambda_gp, std::span<double> grad = {});
CriticLoss critic_loss(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                       std::mt19937_64& rng, double lambda_gp, std::span<double> grad = {});

struct GeneratorLoss {
  double total = 0.0;
  double adversarial = 0.0;
  double memorability = 0.0;
};

/// alpha * mean_i (m_i - score_i)^2
[[nodiscard]] double memorability_term(std::span<const double> targets, std::span<const double> scores, double alpha);
/// alpha * mean_i mean_cells (target_i - predicted_i)^2
[[nodiscard]] double spatial_memorability_term(std::span<const Grid> targets, std::span<const Grid> predicted,
                                               double alpha);

/// -mean D(G(z, m)) + memorability term, with the scalar or spatial term
/// chosen by the generator's conditioner size. Adds d(total)/d(generator
/// params) into `grad` when non-empty; critic and predictor stay frozen.
GeneratorLoss generator_loss(const Generator& generator, const Critic& critic, const VmsPredictor& predictor,
                             std::span<const LatentSample> latents, double alpha, std::span<double> grad = {});
/// Same as generator_loss, but requires a spatial generator.
GeneratorLoss generator_loss_spatial(const Generator& generator, const Critic& critic,
                                     const VmsPredictor& predictor, std::span<const LatentSample> latents,
                                     double alpha, std::span<double> grad = {});

/// One row per generator step.
struct TrainingLogRow {
  std::int64_t step = 0;
  int epoch = 0;
  double critic_loss = 0.0;
  double gen_adversarial = 0.0;
  double gen_memorability = 0.0;
  double penalty = 0.0;
};

/// Everything needed to resume training bit-exactly.
struct GanState {
  GanConfig config;
  Generator generator;
  Critic critic;
  nn::Adam generator_opt;
  nn::Adam critic_opt;
  std::mt19937_64 rng;
  std::int64_t step = 0;         ///< generator steps taken
  std::int64_t critic_steps = 0;
  int epoch = 0;                 ///< completed epochs
};

[[nodiscard]] GanState init_gan_state(const GanConfig& config, std::uint64_t seed);

/// Stable hash of the configuration (for resume checks).
[[nodiscard]] std::string config_hash(const GanConfig& config);

[[nodiscard]] Checkpoint gan_checkpoint(const GanState& state);
[[nodiscard]] GanState gan_state_from_checkpoint(const Checkpoint& checkpoint);

using StepCallback = std::function<void(const TrainingLogRow&)>;
using EpochCallback = std::function<void(const GanState&)>;

/// Runs `epochs` more epochs. Each epoch shuffles the real images into full
/// batches; every critic step uses one batch, and every n_critic critic steps
/// one generator step follows.
void train_epochs(GanState& state, const Tensor<double>& real, const VmsPredictor& predictor, int epochs,
                  const StepCallback& on_step = {}, const EpochCallback& on_epoch = {});

struct GanTrainResult {
  Generator generator;
  Critic critic;
  std::vector<TrainingLogRow> log;
};

[[nodiscard]] GanTrainResult train(std::span<const Image> dataset, const VmsPredictor& predictor,
                                   const GanConfig& config, std::uint64_t seed);

/// One image per m value with z held fixed, in the given order.
[[nodiscard]] std::vector<Image> sweep(const Generator& generator, std::span<const double> z,
                                       std::span<const double> m_values);

/// Spatial sweep: the target map scaled by each level, z fixed.
[[nodiscard]] std::vector<Image> sweep_spatial(const Generator& generator, std::span<const double> z,
                                               const Grid& target_map, std::span<const double> levels);

}  // namespace vmsgan
