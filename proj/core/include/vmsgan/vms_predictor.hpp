#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vmsgan/checkpoint.hpp"
#include "vmsgan/dataset.hpp"
#include "vmsgan/image.hpp"
#include "vmsgan/nn/adam.hpp"
#include "vmsgan/nn/network.hpp"

namespace vmsgan {

struct PredictorConfig {
  int image_resolution = 64;
  int vms_resolution = 32;
  int latent_dim = 64;
  int base_channels = 16;
  int epochs = 20;
  int batch_size = 32;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};

  /// Throws UsageError for resolutions that are not 4 * 2^k (k >= 1) or
  /// non-positive sizes.
  void validate() const;
};

void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);

/// Posterior statistics for a batch, row-major (batch x dim).
struct LatentVars {
  int batch = 0;
  int dim = 0;
  std::vector<double> mu;
  std::vector<double> logvar;
  std::vector<double> z;

  [[nodiscard]] std::span<const double> mu_row(int n) const { return std::span(mu).subspan(n * dim, dim); }
  [[nodiscard]] std::span<const double> logvar_row(int n) const { return std::span(logvar).subspan(n * dim, dim); }
};

struct VaeLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// KL(N(mu, exp(logvar)) || N(0, I)) = 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar).
[[nodiscard]] double kl_divergence(std::span<const double> mu, std::span<const double> logvar);

/// Per-cell Bernoulli negative log-likelihood of `target` under `prediction`,
/// summed over both channels (0 * log 0 = 0).
[[nodiscard]] double bernoulli_nll(const VmsMap& prediction, const VmsMap& target);

/// Image -> VMS map variational autoencoder. The encoder sees the image, the
/// decoder reconstructs the image's VMS map; scores read the true channel.
class VmsPredictor {
 public:
  VmsPredictor() = default;
  VmsPredictor(const PredictorConfig& config, std::mt19937_64& rng);
  VmsPredictor(const PredictorConfig& config, std::vector<double> parameters);

  [[nodiscard]] bool initialized() const { return !params_.empty(); }
  [[nodiscard]] const PredictorConfig& config() const { return config_; }
  [[nodiscard]] const nn::Network& encoder() const { return encoder_; }
  [[nodiscard]] const nn::Network& decoder() const { return decoder_; }

  /// Encoder parameters first, then decoder parameters.
  [[nodiscard]] std::span<const double> parameters() const { return params_; }
  [[nodiscard]] std::span<double> parameters() { return params_; }
  [[nodiscard]] std::span<const double> encoder_parameters() const;
  [[nodiscard]] std::span<const double> decoder_parameters() const;

  /// Posterior mean and log-variance; z is set to mu.
  [[nodiscard]] LatentVars encode(const Tensor<double>& images) const;
  [[nodiscard]] LatentVars encode(const Image& image) const;

  /// Latent rows (batch x latent_dim) -> maps with every cell in [0, 1].
  [[nodiscard]] std::vector<VmsMap> decode(std::span<const double> z) const;
  [[nodiscard]] VmsMap decode_one(std::span<const double> z) const;

  /// Gradient of sum_i <weights_i, decode(z)_i.true_schema> with respect to z.
  [[nodiscard]] std::vector<double> decode_vjp(std::span<const double> z, std::span<const Grid> weights) const;

  /// Batch-mean VAE loss with the reparameterisation z = mu + exp(logvar / 2) * noise.
  /// `noise` is (batch x latent_dim). Adds d(total)/d(params) into `grad` when non-empty.
  VaeLoss loss(const Tensor<double>& images, std::span<const VmsMap> targets, std::span<const double> noise,
               std::span<double> grad = {}) const;

  /// Decoder applied to the posterior mean, no sampling.
  [[nodiscard]] std::vector<VmsMap> predict_maps(const Tensor<double>& images) const;
  [[nodiscard]] double predict_score(const Image& image) const;
  [[nodiscard]] std::vector<double> predict_scores(const Tensor<double>& images) const;
  [[nodiscard]] Grid predict_spatial(const Image& image, int height = 10, int width = 10) const;
  [[nodiscard]] std::vector<Grid> predict_spatial(const Tensor<double>& images, int height, int width) const;

  /// Gradient of sum_i weights_i * score_i with respect to the images; fills `scores`.
  [[nodiscard]] Tensor<double> score_input_gradient(const Tensor<double>& images, std::span<const double> weights,
                                                    std::vector<double>* scores = nullptr) const;

  /// Gradient of sum_i <weights_i, spatial_i> with respect to the images; fills `maps`.
  [[nodiscard]] Tensor<double> spatial_input_gradient(const Tensor<double>& images, int height, int width,
                                                      std::span<const Grid> weights,
                                                      std::vector<Grid>* maps = nullptr) const;

  /// Backpropagates d(loss)/d(true-channel probabilities) to the images.
  /// `dprob(n, p)` receives image n's probability grid and returns its
  /// cotangent; the probability grids are stored in `probs` when non-null.
  [[nodiscard]] Tensor<double> true_channel_vjp(const Tensor<double>& images,
                                                const std::function<Grid(int, const Grid&)>& dprob,
                                                std::vector<Grid>* probs = nullptr) const;

  [[nodiscard]] Checkpoint to_checkpoint() const;
  [[nodiscard]] static VmsPredictor from_checkpoint(const Checkpoint& checkpoint);
  void save(const std::filesystem::path& path) const;
  [[nodiscard]] static VmsPredictor load(const std::filesystem::path& path);

 private:
  void require_initialized() const;
  void check_images(const Tensor<double>& images) const;
  void build();
  [[nodiscard]] std::vector<Grid> true_channel(const Tensor<double>& images) const;

  PredictorConfig config_;
  nn::Network encoder_;
  nn::Network decoder_;
  std::vector<double> params_;
};

/// Per-epoch mean losses of a training run.
struct PredictorHistory {
  std::vector<VaeLoss> epochs;
};

using PredictorEpochCallback =
    std::function<void(int epoch, const VaeLoss& mean_loss, const VmsPredictor& predictor)>;

/// Adam training on records that all carry VMS maps. Bit-reproducible for a
/// fixed rng state.
[[nodiscard]] VmsPredictor train_predictor(std::span<const ImageRecord> records, const PredictorConfig& config,
                                           std::mt19937_64& rng, PredictorHistory* history = nullptr,
                                           const PredictorEpochCallback& on_epoch = {});

}  // namespace vmsgan
