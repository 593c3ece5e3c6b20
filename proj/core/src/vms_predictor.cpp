#include "vmsgan/vms_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vmsgan/error.hpp"

namespace vmsgan {
using nlohmann::json;

namespace {

bool is_power_ladder(int resolution) {
  if (resolution < 8 || resolution % 4 != 0) return false;
  int r = resolution / 4;
  while (r % 2 == 0) r /= 2;
  return r == 1;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -t*log(s(l)) - (1-t)*log(1-s(l)), written in a form stable for any logit.
double bce_with_logit(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

nn::Network build_encoder(const PredictorConfig& c) {
  std::vector<nn::Layer> layers;
  int channels = c.base_channels;
  int res = c.image_resolution / 2;
  layers.emplace_back(nn::Conv2d{3, channels, 4, 2, 1});
  layers.emplace_back(nn::LeakyRelu{});
  while (res > 4) {
    layers.emplace_back(nn::Conv2d{channels, channels * 2, 4, 2, 1});
    layers.emplace_back(nn::LeakyRelu{});
    channels *= 2;
    res /= 2;
  }
  layers.emplace_back(nn::Reshape{channels * res * res, 1, 1});
  layers.emplace_back(nn::Dense{channels * res * res, 2 * c.latent_dim});
  return {{1, 3, c.image_resolution, c.image_resolution}, std::move(layers)};
}

nn::Network build_decoder(const PredictorConfig& c) {
  int doublings = 0;
  for (int r = 4; r < c.vms_resolution; r *= 2) ++doublings;
  int channels = c.base_channels << std::max(0, doublings - 1);
  std::vector<nn::Layer> layers;
  layers.emplace_back(nn::Dense{c.latent_dim, channels * 16});
  layers.emplace_back(nn::Reshape{channels, 4, 4});
  layers.emplace_back(nn::LeakyRelu{});
  for (int i = 0; i + 1 < doublings; ++i) {
    const int next = std::max(1, channels / 2);
    layers.emplace_back(nn::ConvTranspose2d{channels, next, 4, 2, 1});
    layers.emplace_back(nn::LeakyRelu{});
    channels = next;
  }
  layers.emplace_back(nn::ConvTranspose2d{channels, 2, 4, 2, 1});
  return {{1, c.latent_dim, 1, 1}, std::move(layers)};
}

Tensor<double> latent_tensor(std::span<const double> z, int dim) {
  const int batch = static_cast<int>(z.size()) / dim;
  return Tensor<double>({batch, dim, 1, 1}, std::vector<double>(z.begin(), z.end()));
}

}  // namespace

void PredictorConfig::validate() const {
  if (!is_power_ladder(image_resolution)) {
    throw UsageError("predictor image resolution must be 4 * 2^k with k >= 1, got " + std::to_string(image_resolution));
  }
  if (!is_power_ladder(vms_resolution)) {
    throw UsageError("predictor VMS resolution must be 4 * 2^k with k >= 1, got " + std::to_string(vms_resolution));
  }
  if (latent_dim <= 0 || base_channels <= 0) throw UsageError("predictor sizes must be positive");
  if (epochs < 0 || batch_size <= 0) throw UsageError("predictor epochs must be >= 0 and batch size > 0");
}

void to_json(json& j, const PredictorConfig& c) {
  j = json{{"image_resolution", c.image_resolution},
           {"vms_resolution", c.vms_resolution},
           {"latent_dim", c.latent_dim},
           {"base_channels", c.base_channels},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"adam", c.adam}};
}

void from_json(const json& j, PredictorConfig& c) {
  c.image_resolution = j.value("image_resolution", c.image_resolution);
  c.vms_resolution = j.value("vms_resolution", c.vms_resolution);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("adam")) c.adam = j["adam"].get<nn::AdamConfig>();
}

double kl_divergence(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw UsageError("kl_divergence: mu and logvar lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!std::isfinite(mu[i]) || !std::isfinite(logvar[i])) throw NumericError("kl_divergence: non-finite input");
    // exp(lv) - 1 - lv loses precision near 0; expm1 keeps it.
    sum += mu[i] * mu[i] + (std::expm1(logvar[i]) - logvar[i]);
  }
  return 0.5 * sum;
}

double bernoulli_nll(const VmsMap& prediction, const VmsMap& target) {
  if (prediction.height() != target.height() || prediction.width() != target.width()) {
    throw UsageError("bernoulli_nll: map extents differ");
  }
  double sum = 0.0;
  for (const auto channel : {SchemaChannel::True, SchemaChannel::False}) {
    const auto& p = prediction.channel(channel).values;
    const auto& t = target.channel(channel).values;
    for (std::size_t i = 0; i < p.size(); ++i) sum -= xlogy(t[i], p[i]) + xlogy(1.0 - t[i], 1.0 - p[i]);
  }
  return sum;
}

// ---------------------------------------------------------------- VmsPredictor

VmsPredictor::VmsPredictor(const PredictorConfig& config, std::mt19937_64& rng) : config_(config) {
  build();
  params_ = encoder_.initial_parameters(rng);
  const auto dec = decoder_.initial_parameters(rng);
  params_.insert(params_.end(), dec.begin(), dec.end());
}

VmsPredictor::VmsPredictor(const PredictorConfig& config, std::vector<double> parameters)
    : config_(config), params_(std::move(parameters)) {
  build();
  if (params_.size() != encoder_.parameter_count() + decoder_.parameter_count()) {
    throw DataError("predictor parameter count does not match its configuration");
  }
}

void VmsPredictor::build() {
  config_.validate();
  encoder_ = build_encoder(config_);
  decoder_ = build_decoder(config_);
}

std::span<const double> VmsPredictor::encoder_parameters() const {
  return std::span<const double>(params_).subspan(0, encoder_.parameter_count());
}

std::span<const double> VmsPredictor::decoder_parameters() const {
  return std::span<const double>(params_).subspan(encoder_.parameter_count());
}

void VmsPredictor::require_initialized() const {
  if (!initialized()) throw UsageError("VMS predictor has no parameters (not trained or loaded)");
}

void VmsPredictor::check_images(const Tensor<double>& images) const {
  const Shape& s = images.shape();
  if (s.c != 3 || s.h != config_.image_resolution || s.w != config_.image_resolution) {
    throw UsageError("predictor expects " + std::to_string(config_.image_resolution) + "x" +
                     std::to_string(config_.image_resolution) + " RGB images, got " + s.str());
  }
}

LatentVars VmsPredictor::encode(const Tensor<double>& images) const {
  require_initialized();
  check_images(images);
  const Tensor<double> out = encoder_.forward(encoder_parameters(), images);
  const int dim = config_.latent_dim;
  LatentVars lv{images.batch(), dim, {}, {}, {}};
  for (int n = 0; n < lv.batch; ++n) {
    const auto row = out.sample(n);
    lv.mu.insert(lv.mu.end(), row.begin(), row.begin() + dim);
    lv.logvar.insert(lv.logvar.end(), row.begin() + dim, row.end());
  }
  lv.z = lv.mu;
  return lv;
}

LatentVars VmsPredictor::encode(const Image& image) const { return encode(to_tensor(std::span(&image, 1))); }

std::vector<VmsMap> VmsPredictor::decode(std::span<const double> z) const {
  require_initialized();
  const int dim = config_.latent_dim;
  if (z.empty() || z.size() % static_cast<std::size_t>(dim) != 0) {
    throw UsageError("decode expects rows of " + std::to_string(dim) + " latent values");
  }
  const Tensor<double> logits = decoder_.forward(decoder_parameters(), latent_tensor(z, dim));
  const int v = config_.vms_resolution;
  std::vector<VmsMap> maps;
  for (int n = 0; n < logits.batch(); ++n) {
    VmsMap m(v, v);
    const auto row = logits.sample(n);
    const std::size_t cells = static_cast<std::size_t>(v) * v;
    for (std::size_t i = 0; i < cells; ++i) {
      m.true_schema.values[i] = sigmoid(row[i]);
      m.false_schema.values[i] = sigmoid(row[cells + i]);
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

VmsMap VmsPredictor::decode_one(std::span<const double> z) const {
  if (z.size() != static_cast<std::size_t>(config_.latent_dim)) throw UsageError("decode: wrong latent length");
  return decode(z).front();
}

std::vector<double> VmsPredictor::decode_vjp(std::span<const double> z, std::span<const Grid> weights) const {
  require_initialized();
  const int dim = config_.latent_dim;
  if (z.empty() || z.size() % static_cast<std::size_t>(dim) != 0) throw UsageError("decode_vjp: bad latent size");
  nn::Trace<double> trace;
  const Tensor<double> logits = decoder_.forward(decoder_parameters(), latent_tensor(z, dim), &trace);
  if (weights.size() != static_cast<std::size_t>(logits.batch())) throw UsageError("decode_vjp: weight count");
  const std::size_t cells = static_cast<std::size_t>(config_.vms_resolution) * config_.vms_resolution;
  Tensor<double> dlogits(logits.shape());
  for (int n = 0; n < logits.batch(); ++n) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double s = sigmoid(logits.sample(n)[i]);
      dlogits.sample(n)[i] = weights[static_cast<std::size_t>(n)].values[i] * s * (1.0 - s);
    }
  }
  return decoder_.backward(decoder_parameters(), trace, dlogits, std::span<double>{}).values();
}

VaeLoss VmsPredictor::loss(const Tensor<double>& images, std::span<const VmsMap> targets,
                           std::span<const double> noise, std::span<double> grad) const {
  require_initialized();
  check_images(images);
  const int batch = images.batch();
  const int dim = config_.latent_dim;
  const int v = config_.vms_resolution;
  if (targets.size() != static_cast<std::size_t>(batch)) throw DataError("vae_loss: every image needs a target VMS map");
  if (noise.size() != static_cast<std::size_t>(batch) * dim) throw UsageError("vae_loss: noise must be batch x latent_dim");
  if (!grad.empty() && grad.size() != params_.size()) throw UsageError("vae_loss: gradient buffer size mismatch");
  for (const auto& t : targets) {
    if (t.height() != v || t.width() != v) throw DataError("vae_loss: target VMS resolution mismatch");
  }

  nn::Trace<double> enc_trace;
  const Tensor<double> enc_out = encoder_.forward(encoder_parameters(), images, &enc_trace);
  std::vector<double> z(static_cast<std::size_t>(batch) * dim);
  double kl_sum = 0.0;
  for (int n = 0; n < batch; ++n) {
    const auto row = enc_out.sample(n);
    kl_sum += kl_divergence(row.subspan(0, dim), row.subspan(dim, dim));
    for (int i = 0; i < dim; ++i) {
      z[static_cast<std::size_t>(n) * dim + i] = row[i] + std::exp(0.5 * row[dim + i]) * noise[n * dim + i];
    }
  }
  nn::Trace<double> dec_trace;
  const Tensor<double> logits = decoder_.forward(decoder_parameters(), latent_tensor(z, dim), &dec_trace);
  const std::size_t cells = static_cast<std::size_t>(v) * v;
  double recon_sum = 0.0;
  for (int n = 0; n < batch; ++n) {
    const auto row = logits.sample(n);
    const auto& t = targets[static_cast<std::size_t>(n)];
    for (std::size_t i = 0; i < cells; ++i) {
      recon_sum += bce_with_logit(row[i], t.true_schema.values[i]);
      recon_sum += bce_with_logit(row[cells + i], t.false_schema.values[i]);
    }
  }
  VaeLoss result;
  result.reconstruction = recon_sum / batch;
  result.kl = kl_sum / batch;
  result.total = result.reconstruction + result.kl;
  if (!std::isfinite(result.total)) throw NumericError("vae_loss is not finite");
  if (grad.empty()) return result;

  const double inv_batch = 1.0 / batch;
  Tensor<double> dlogits(logits.shape());
  for (int n = 0; n < batch; ++n) {
    const auto row = logits.sample(n);
    const auto& t = targets[static_cast<std::size_t>(n)];
    auto drow = dlogits.sample(n);
    for (std::size_t i = 0; i < cells; ++i) {
      drow[i] = (sigmoid(row[i]) - t.true_schema.values[i]) * inv_batch;
      drow[cells + i] = (sigmoid(row[cells + i]) - t.false_schema.values[i]) * inv_batch;
    }
  }
  const std::size_t enc_count = encoder_.parameter_count();
  const Tensor<double> dz = decoder_.backward(decoder_parameters(), dec_trace, dlogits, grad.subspan(enc_count));
  Tensor<double> denc(enc_out.shape());
  for (int n = 0; n < batch; ++n) {
    const auto row = enc_out.sample(n);
    auto drow = denc.sample(n);
    for (int i = 0; i < dim; ++i) {
      const double g = dz[static_cast<std::size_t>(n) * dim + i];
      const double mu = row[i];
      const double lv = row[dim + i];
      drow[i] = g + mu * inv_batch;
      drow[dim + i] = g * noise[n * dim + i] * 0.5 * std::exp(0.5 * lv) + 0.5 * std::expm1(lv) * inv_batch;
    }
  }
  (void)encoder_.backward(encoder_parameters(), enc_trace, denc, grad.subspan(0, enc_count), false);
  return result;
}

std::vector<VmsMap> VmsPredictor::predict_maps(const Tensor<double>& images) const {
  return decode(encode(images).mu);
}

std::vector<Grid> VmsPredictor::true_channel(const Tensor<double>& images) const {
  auto maps = predict_maps(images);
  std::vector<Grid> out;
  out.reserve(maps.size());
  for (auto& m : maps) out.push_back(std::move(m.true_schema));
  return out;
}

double VmsPredictor::predict_score(const Image& image) const {
  return predict_scores(to_tensor(std::span(&image, 1))).front();
}

std::vector<double> VmsPredictor::predict_scores(const Tensor<double>& images) const {
  std::vector<double> scores;
  for (const Grid& g : true_channel(images)) scores.push_back(g.mean());
  return scores;
}

Grid VmsPredictor::predict_spatial(const Image& image, int height, int width) const {
  return predict_spatial(to_tensor(std::span(&image, 1)), height, width).front();
}

std::vector<Grid> VmsPredictor::predict_spatial(const Tensor<double>& images, int height, int width) const {
  std::vector<Grid> out;
  for (const Grid& g : true_channel(images)) out.push_back(area_resample(g, height, width));
  return out;
}

Tensor<double> VmsPredictor::true_channel_vjp(const Tensor<double>& images,
                                                   const std::function<Grid(int, const Grid&)>& dprob,
                                                   std::vector<Grid>* probs) const {
  require_initialized();
  check_images(images);
  const int dim = config_.latent_dim;
  const int v = config_.vms_resolution;
  const std::size_t cells = static_cast<std::size_t>(v) * v;
  nn::Trace<double> enc_trace;
  const Tensor<double> enc_out = encoder_.forward(encoder_parameters(), images, &enc_trace);
  std::vector<double> mu;
  for (int n = 0; n < images.batch(); ++n) {
    const auto row = enc_out.sample(n);
    mu.insert(mu.end(), row.begin(), row.begin() + dim);
  }
  nn::Trace<double> dec_trace;
  const Tensor<double> logits = decoder_.forward(decoder_parameters(), latent_tensor(mu, dim), &dec_trace);
  Tensor<double> dlogits(logits.shape());
  if (probs != nullptr) probs->clear();
  for (int n = 0; n < images.batch(); ++n) {
    Grid p(v, v);
    for (std::size_t i = 0; i < cells; ++i) p.values[i] = sigmoid(logits.sample(n)[i]);
    const Grid dp = dprob(n, p);
    for (std::size_t i = 0; i < cells; ++i) dlogits.sample(n)[i] = dp.values[i] * p.values[i] * (1.0 - p.values[i]);
    if (probs != nullptr) probs->push_back(std::move(p));
  }
  const Tensor<double> dz = decoder_.backward(decoder_parameters(), dec_trace, dlogits, std::span<double>{});
  Tensor<double> denc(enc_out.shape());
  for (int n = 0; n < images.batch(); ++n) {
    for (int i = 0; i < dim; ++i) denc.sample(n)[i] = dz[static_cast<std::size_t>(n) * dim + i];
  }
  return encoder_.backward(encoder_parameters(), enc_trace, denc, std::span<double>{});
}

Tensor<double> VmsPredictor::score_input_gradient(const Tensor<double>& images, std::span<const double> weights,
                                                  std::vector<double>* scores) const {
  if (weights.size() != static_cast<std::size_t>(images.batch())) throw UsageError("one weight per image required");
  std::vector<Grid> probs;
  Tensor<double> grad = true_channel_vjp(
      images,
      [&](int n, const Grid& p) {
        return Grid(p.height, p.width, weights[static_cast<std::size_t>(n)] / static_cast<double>(p.size()));
      },
      &probs);
  if (scores != nullptr) {
    scores->clear();
    for (const Grid& p : probs) scores->push_back(p.mean());
  }
  return grad;
}

Tensor<double> VmsPredictor::spatial_input_gradient(const Tensor<double>& images, int height, int width,
                                                    std::span<const Grid> weights, std::vector<Grid>* maps) const {
  if (weights.size() != static_cast<std::size_t>(images.batch())) throw UsageError("one weight map per image required");
  std::vector<Grid> probs;
  Tensor<double> grad = true_channel_vjp(
      images,
      [&](int n, const Grid& p) {
        const Grid& w = weights[static_cast<std::size_t>(n)];
        if (w.height != height || w.width != width) throw UsageError("spatial weight map extent mismatch");
        return area_resample_adjoint(w, p.height, p.width);
      },
      &probs);
  if (maps != nullptr) {
    maps->clear();
    for (const Grid& p : probs) maps->push_back(area_resample(p, height, width));
  }
  return grad;
}

Checkpoint VmsPredictor::to_checkpoint() const {
  require_initialized();
  Checkpoint ckpt(json{{"kind", "vms_predictor"}, {"config", config_}});
  ckpt.put("params", params_);
  return ckpt;
}

VmsPredictor VmsPredictor::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.metadata().value("kind", std::string{}) != "vms_predictor") {
    throw DataError("checkpoint does not hold a VMS predictor");
  }
  return {ckpt.metadata().at("config").get<PredictorConfig>(), ckpt.doubles("params")};
}

void VmsPredictor::save(const std::filesystem::path& path) const { to_checkpoint().save(path); }

VmsPredictor VmsPredictor::load(const std::filesystem::path& path) { return from_checkpoint(Checkpoint::load(path)); }

// ---------------------------------------------------------------- training

VmsPredictor train_predictor(std::span<const ImageRecord> records, const PredictorConfig& config,
                             std::mt19937_64& rng, PredictorHistory* history, const PredictorEpochCallback& on_epoch) {
  config.validate();
  if (records.empty()) throw DataError("no training records");
  std::vector<Image> images;
  std::vector<VmsMap> targets;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.vms) throw DataError("record " + std::to_string(i) + " (" + r.id + ") has no VMS map");
    if (r.image.height != config.image_resolution || r.image.width != config.image_resolution) {
      throw DataError("record " + std::to_string(i) + " (" + r.id + ") image resolution mismatch");
    }
    if (r.vms->height() != config.vms_resolution || r.vms->width() != config.vms_resolution) {
      throw DataError("record " + std::to_string(i) + " (" + r.id + ") VMS resolution mismatch");
    }
    images.push_back(r.image);
    targets.push_back(*r.vms);
  }
  const Tensor<double> all = to_tensor(images);

  VmsPredictor predictor(config, rng);
  nn::Adam adam(config.adam, predictor.parameters().size());
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> grad(predictor.parameters().size());
  const std::size_t sample = all.shape().sample_size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    VaeLoss mean{};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      Tensor<double> batch(all.shape().with_batch(static_cast<int>(count)));
      std::vector<VmsMap> batch_targets;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        std::copy_n(all.data() + idx * sample, sample, batch.data() + k * sample);
        batch_targets.push_back(targets[idx]);
      }
      std::vector<double> noise(count * static_cast<std::size_t>(config.latent_dim));
      for (auto& e : noise) e = normal(rng);
      std::fill(grad.begin(), grad.end(), 0.0);
      const VaeLoss l = predictor.loss(batch, batch_targets, noise, grad);
      adam.step(predictor.parameters(), grad);
      mean.total += l.total;
      mean.reconstruction += l.reconstruction;
      mean.kl += l.kl;
      ++batches;
    }
    mean.total /= batches;
    mean.reconstruction /= batches;
    mean.kl /= batches;
    if (history != nullptr) history->epochs.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean, predictor);
  }
  return predictor;
}

}  // namespace vmsgan
