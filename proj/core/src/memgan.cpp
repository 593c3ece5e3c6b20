#include "vmsgan/memgan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "vmsgan/dual.hpp"
#include "vmsgan/error.hpp"

namespace vmsgan {
using nlohmann::json;

namespace {

int doublings_to(int resolution) {
  int d = 0;
  for (int r = 4; r < resolution; r *= 2) ++d;
  return d;
}

nn::Network build_generator(const GanConfig& c) {
  const int doublings = doublings_to(c.resolution);
  int channels = c.base_channels << std::max(0, doublings - 1);
  const int in = c.latent_dim + c.conditioner_size();
  std::vector<nn::Layer> layers;
  layers.emplace_back(nn::Dense{in, channels * 16});
  layers.emplace_back(nn::Reshape{channels, 4, 4});
  layers.emplace_back(nn::LeakyRelu{});
  layers.emplace_back(nn::PixelNorm{c.pixelnorm_epsilon});
  for (int i = 0; i + 1 < doublings; ++i) {
    const int next = std::max(1, channels / 2);
    layers.emplace_back(nn::ConvTranspose2d{channels, next, 4, 2, 1});
    layers.emplace_back(nn::LeakyRelu{});
    layers.emplace_back(nn::PixelNorm{c.pixelnorm_epsilon});
    channels = next;
  }
  layers.emplace_back(nn::ConvTranspose2d{channels, 3, 4, 2, 1});
  layers.emplace_back(nn::Tanh{});
  return {{1, in, 1, 1}, std::move(layers)};
}

nn::Network build_critic(const GanConfig& c) {
  std::vector<nn::Layer> layers;
  int channels = c.base_channels;
  int res = c.resolution / 2;
  layers.emplace_back(nn::Conv2d{3, channels, 4, 2, 1});
  layers.emplace_back(nn::LeakyRelu{});
  layers.emplace_back(nn::MinibatchStddev{});
  int in = channels + 1;
  while (res > 4) {
    layers.emplace_back(nn::Conv2d{in, channels * 2, 4, 2, 1});
    layers.emplace_back(nn::LeakyRelu{});
    channels *= 2;
    in = channels;
    res /= 2;
  }
  layers.emplace_back(nn::Reshape{in * res * res, 1, 1});
  layers.emplace_back(nn::Dense{in * res * res, 1});
  return {{1, 3, c.resolution, c.resolution}, std::move(layers)};
}

void check_pair(const Tensor<double>& real, const Tensor<double>& fake) {
  if (!(real.shape() == fake.shape())) {
    throw UsageError("real and fake batches differ: " + real.shape().str() + " vs " + fake.shape().str());
  }
  if (real.batch() < 2) throw UsageError("critic batches need at least two images");
}

// Seeds `value` into every entry of an (n, 1, 1, 1) gradient.
Tensor<double> constant_seed(int batch, double value) { return Tensor<double>({batch, 1, 1, 1}, value); }

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Scores of the critic plus d(weight * sum D)/d(params) accumulated into grad.
std::vector<double> critic_term(const Critic& critic, const Tensor<double>& images, double weight,
                                std::span<double> grad) {
  nn::Trace<double> trace;
  const Tensor<double> out = critic.network().forward(critic.parameters(), images, grad.empty() ? nullptr : &trace);
  if (!grad.empty()) {
    (void)critic.network().backward(critic.parameters(), trace, constant_seed(images.batch(), weight), grad, false);
  }
  return out.values();
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void GanConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw UsageError(std::string(name) + " must be positive");
  };
  positive(n_critic, "n_critic");
  positive(batch_size, "batch_size");
  positive(latent_dim, "latent_dim");
  positive(base_channels, "base_channels");
  positive(map_size, "map_size");
  if (epochs < 0) throw UsageError("epochs must be non-negative");
  if (batch_size < 2) throw UsageError("batch_size must be at least 2 (minibatch standard deviation)");
  if (resolution < 8 || (resolution & (resolution - 1)) != 0) {
    throw UsageError("GAN resolution must be a power of two >= 8, got " + std::to_string(resolution));
  }
  if (!(alpha >= 0.0)) throw UsageError("alpha must be non-negative");
  if (!(lambda_gp >= 0.0)) throw UsageError("lambda_gp must be non-negative");
  if (!(m_std > 0.0)) throw UsageError("m_std must be positive");
  if (!(m_mean >= 0.0 && m_mean <= 1.0)) throw UsageError("m_mean must lie in [0, 1]");
  if (!(pixelnorm_epsilon > 0.0)) throw UsageError("pixelnorm_epsilon must be positive");
}

void to_json(json& j, const GanConfig& c) {
  j = json{{"alpha", c.alpha},
           {"lambda_gp", c.lambda_gp},
           {"n_critic", c.n_critic},
           {"adam", c.adam},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"m_mean", c.m_mean},
           {"m_std", c.m_std},
           {"pixelnorm_epsilon", c.pixelnorm_epsilon},
           {"resolution", c.resolution},
           {"latent_dim", c.latent_dim},
           {"base_channels", c.base_channels},
           {"spatial", c.spatial},
           {"map_size", c.map_size}};
}

void from_json(const json& j, GanConfig& c) {
  GanConfig d;
  c.alpha = j.value("alpha", d.alpha);
  c.lambda_gp = j.value("lambda_gp", d.lambda_gp);
  c.n_critic = j.value("n_critic", d.n_critic);
  c.adam = j.value("adam", d.adam);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.m_mean = j.value("m_mean", d.m_mean);
  c.m_std = j.value("m_std", d.m_std);
  c.pixelnorm_epsilon = j.value("pixelnorm_epsilon", d.pixelnorm_epsilon);
  c.resolution = j.value("resolution", d.resolution);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.spatial = j.value("spatial", d.spatial);
  c.map_size = j.value("map_size", d.map_size);
}

// ---------------------------------------------------------------- latents

double sample_truncated_normal(double mean, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(mean, std);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    const double v = normal(rng);
    if (v >= 0.0 && v <= 1.0) return v;
  }
  throw NumericError("truncated normal rejection sampling did not terminate");
}

std::vector<LatentSample> sample_latent(int batch_size, const GanConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int k = config.map_size;
  const int min_side = std::max(1, (3 * k) / 10);
  const int max_side = std::max(min_side, (6 * k) / 10);
  std::vector<LatentSample> out(static_cast<std::size_t>(batch_size));
  for (auto& s : out) {
    s.z.resize(static_cast<std::size_t>(config.latent_dim));
    for (auto& v : s.z) v = normal(rng);
    const double level = sample_truncated_normal(config.m_mean, config.m_std, rng);
    if (!config.spatial) {
      s.m = {level};
      continue;
    }
    const int side = std::uniform_int_distribution<int>(min_side, max_side)(rng);
    const int top = std::uniform_int_distribution<int>(0, k - side)(rng);
    const int left = std::uniform_int_distribution<int>(0, k - side)(rng);
    s.m.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (int y = top; y < top + side; ++y) {
      for (int x = left; x < left + side; ++x) s.m[static_cast<std::size_t>(y) * k + x] = level;
    }
  }
  return out;
}

Tensor<double> pixel_norm(const Tensor<double>& activations, double epsilon) {
  Tensor<double> out(activations.shape());
  nn::forward<double>(nn::PixelNorm{epsilon}, {}, activations, out);
  return out;
}

Tensor<double> minibatch_stddev(const Tensor<double>& features) {
  const nn::Layer layer = nn::MinibatchStddev{};
  Tensor<double> out(nn::output_shape(layer, features.shape()));
  nn::forward<double>(layer, {}, features, out);
  return out;
}

// ---------------------------------------------------------------- networks

Generator::Generator(const GanConfig& config, std::mt19937_64& rng)
    : net_(build_generator(config)),
      latent_dim_(config.latent_dim),
      conditioner_size_(config.conditioner_size()),
      resolution_(config.resolution) {
  config.validate();
  params_ = net_.initial_parameters(rng);
}

Generator::Generator(const GanConfig& config, std::vector<double> parameters)
    : net_(build_generator(config)),
      params_(std::move(parameters)),
      latent_dim_(config.latent_dim),
      conditioner_size_(config.conditioner_size()),
      resolution_(config.resolution) {
  config.validate();
  if (params_.size() != net_.parameter_count()) {
    throw DataError("generator expects " + std::to_string(net_.parameter_count()) + " parameters, got " +
                    std::to_string(params_.size()));
  }
}

Tensor<double> Generator::input(std::span<const LatentSample> latents) const {
  const int width = latent_dim_ + conditioner_size_;
  Tensor<double> x({static_cast<int>(latents.size()), width, 1, 1});
  for (std::size_t n = 0; n < latents.size(); ++n) {
    const auto& s = latents[n];
    if (s.z.size() != static_cast<std::size_t>(latent_dim_)) {
      throw UsageError("latent z has " + std::to_string(s.z.size()) + " entries, expected " +
                       std::to_string(latent_dim_));
    }
    if (s.m.size() != static_cast<std::size_t>(conditioner_size_)) {
      throw UsageError("conditioner has " + std::to_string(s.m.size()) + " entries, expected " +
                       std::to_string(conditioner_size_));
    }
    auto row = x.sample(static_cast<int>(n));
    std::copy(s.z.begin(), s.z.end(), row.begin());
    std::copy(s.m.begin(), s.m.end(), row.begin() + latent_dim_);
  }
  return x;
}

Tensor<double> Generator::generate(std::span<const LatentSample> latents) const {
  return net_.forward(std::span<const double>(params_), input(latents));
}

Image Generator::generate(std::span<const double> z, std::span<const double> m) const {
  const LatentSample s{{z.begin(), z.end()}, {m.begin(), m.end()}};
  return image_at(generate(std::span(&s, 1)), 0);
}

Image Generator::generate_spatial(std::span<const double> z, const Grid& m_map) const {
  if (static_cast<int>(m_map.size()) != conditioner_size_ || conditioner_size_ == 1) {
    throw UsageError("spatial conditioner does not match the generator");
  }
  return generate(z, m_map.values);
}

Critic::Critic(nn::Network network, std::vector<double> parameters)
    : net_(std::move(network)), params_(std::move(parameters)) {
  if (params_.size() != net_.parameter_count()) {
    throw DataError("critic expects " + std::to_string(net_.parameter_count()) + " parameters, got " +
                    std::to_string(params_.size()));
  }
  if (net_.output_shape().sample_size() != 1) throw UsageError("critic must output one value per image");
}

Critic::Critic(const GanConfig& config, std::mt19937_64& rng) : net_(build_critic(config)) {
  config.validate();
  params_ = net_.initial_parameters(rng);
}

std::vector<double> Critic::score(const Tensor<double>& images) const {
  return net_.forward(std::span<const double>(params_), images).values();
}

// ---------------------------------------------------------------- critic loss

ImageBatch interpolate(const Tensor<double>& real, const Tensor<double>& fake, std::span<const double> epsilon) {
  if (!(real.shape() == fake.shape())) throw UsageError("cannot interpolate batches of different shapes");
  if (epsilon.size() != static_cast<std::size_t>(real.batch())) throw UsageError("one epsilon per image required");
  ImageBatch out{ImageRole::Interpolated, Tensor<double>(real.shape()), {epsilon.begin(), epsilon.end()}};
  for (int n = 0; n < real.batch(); ++n) {
    const double e = epsilon[static_cast<std::size_t>(n)];
    auto r = real.sample(n);
    auto f = fake.sample(n);
    auto o = out.images.sample(n);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = e * r[i] + (1.0 - e) * f[i];
  }
  return out;
}

std::vector<double> draw_interpolation_weights(int batch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> eps(static_cast<std::size_t>(batch));
  for (auto& e : eps) e = uniform(rng);
  return eps;
}

double gradient_penalty(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                        std::span<const double> epsilon, double lambda_gp, std::span<double> grad) {
  check_pair(real, fake);
  const ImageBatch mixed = interpolate(real, fake, epsilon);
  const auto& net = critic.network();
  const auto params = critic.parameters();
  const int batch = real.batch();

  // Input gradient of S = sum_j D(x~)_j. Through the minibatch-stddev channel
  // each row's gradient depends on the whole batch, hence the sum.
  nn::Trace<double> trace;
  (void)net.forward(params, mixed.images, &trace);
  const Tensor<double> g = net.backward(params, trace, constant_seed(batch, 1.0), std::span<double>{});

  std::vector<double> norms(static_cast<std::size_t>(batch));
  double penalty = 0.0;
  for (int n = 0; n < batch; ++n) {
    double sq = 0.0;
    for (double v : g.sample(n)) sq += v * v;
    norms[static_cast<std::size_t>(n)] = std::sqrt(sq);
    penalty += (norms[static_cast<std::size_t>(n)] - 1.0) * (norms[static_cast<std::size_t>(n)] - 1.0);
  }
  penalty *= lambda_gp / batch;
  if (!std::isfinite(penalty)) throw NumericError("gradient penalty is not finite");
  if (grad.empty()) return penalty;

  // d(penalty)/d(theta) = sum_i c_i * d/d(theta) <G_i(theta), G_i> with
  // c_i = (lambda / N) * 2 (|G_i| - 1) / |G_i|. The directional derivative of
  // the parameter gradient along V = c * G gives exactly this vector, so a
  // second backward pass run on dual numbers seeded with V yields it.
  Tensor<Dual> dual_in(mixed.images.shape());
  for (int n = 0; n < batch; ++n) {
    const double norm = norms[static_cast<std::size_t>(n)];
    const double c = norm > 0.0 ? (lambda_gp / batch) * 2.0 * (norm - 1.0) / norm : 0.0;
    auto x = mixed.images.sample(n);
    auto gx = g.sample(n);
    auto d = dual_in.sample(n);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = Dual{x[i], c * gx[i]};
  }
  nn::Trace<Dual> dual_trace;
  (void)net.forward(params, dual_in, &dual_trace);
  std::vector<Dual> dual_grad(params.size());
  (void)net.backward(params, dual_trace, Tensor<Dual>({batch, 1, 1, 1}, Dual{1.0, 0.0}), std::span<Dual>(dual_grad),
                     false);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += dual_grad[i].d;
  return penalty;
}

double gradient_penalty(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                        std::mt19937_64& rng, double lambda_gp, std::span<double> grad) {
  const auto eps = draw_interpolation_weights(real.batch(), rng);
  return gradient_penalty(critic, real, fake, eps, lambda_gp, grad);
}

CriticLoss critic_loss(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                       std::span<const double> epsilon, double lambda_gp, std::span<double> grad) {
  check_pair(real, fake);
  if (!grad.empty() && grad.size() != critic.parameters().size()) {
    throw UsageError("critic gradient buffer has the wrong size");
  }
  const double inv = 1.0 / real.batch();
  CriticLoss l;
  l.fake_mean = mean_of(critic_term(critic, fake, inv, grad));
  l.real_mean = mean_of(critic_term(critic, real, -inv, grad));
  l.penalty = gradient_penalty(critic, real, fake, epsilon, lambda_gp, grad);
  l.total = l.fake_mean - l.real_mean + l.penalty;
  if (!std::isfinite(l.total)) throw NumericError("critic loss is not finite");
  return l;
}

CriticLoss critic_loss(const Critic& critic, const Tensor<double>& real, const Tensor<double>& fake,
                       std::mt19937_64& rng, double lambda_gp, std::span<double> grad) {
  const auto eps = draw_interpolation_weights(real.batch(), rng);
  return critic_loss(critic, real, fake, eps, lambda_gp, grad);
}

// ---------------------------------------------------------------- generator loss

double memorability_term(std::span<const double> targets, std::span<const double> scores, double alpha) {
  if (targets.size() != scores.size() || targets.empty()) throw UsageError("memorability term needs matched batches");
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) sum += (targets[i] - scores[i]) * (targets[i] - scores[i]);
  return alpha * sum / static_cast<double>(targets.size());
}

double spatial_memorability_term(std::span<const Grid> targets, std::span<const Grid> predicted, double alpha) {
  if (targets.size() != predicted.size() || targets.empty()) {
    throw UsageError("spatial memorability term needs matched batches");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Grid& t = targets[i];
    const Grid& p = predicted[i];
    if (t.height != p.height || t.width != p.width) throw UsageError("spatial map extent mismatch");
    double cell = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) cell += (t.values[k] - p.values[k]) * (t.values[k] - p.values[k]);
    sum += cell / static_cast<double>(t.size());
  }
  return alpha * sum / static_cast<double>(targets.size());
}

GeneratorLoss generator_loss(const Generator& generator, const Critic& critic, const VmsPredictor& predictor,
                             std::span<const LatentSample> latents, double alpha, std::span<double> grad) {
  if (latents.empty()) throw UsageError("generator loss needs a non-empty batch");
  if (!grad.empty() && grad.size() != generator.parameters().size()) {
    throw UsageError("generator gradient buffer has the wrong size");
  }
  if (predictor.config().image_resolution != generator.resolution()) {
    throw UsageError("predictor resolution " + std::to_string(predictor.config().image_resolution) +
                     " does not match generator resolution " + std::to_string(generator.resolution()));
  }
  const bool spatial = generator.conditioner_size() > 1;
  const int batch = static_cast<int>(latents.size());
  const double inv = 1.0 / batch;
  const bool want_grad = !grad.empty();

  nn::Trace<double> gen_trace;
  const Tensor<double> images =
      generator.network().forward(generator.parameters(), generator.input(latents), want_grad ? &gen_trace : nullptr);

  GeneratorLoss l;
  nn::Trace<double> critic_trace;
  const Tensor<double> scores =
      critic.network().forward(critic.parameters(), images, want_grad ? &critic_trace : nullptr);
  l.adversarial = -mean_of(scores.values());

  Tensor<double> dimages(images.shape());
  if (want_grad) {
    dimages = critic.network().backward(critic.parameters(), critic_trace, constant_seed(batch, -inv),
                                        std::span<double>{});
  }

  if (alpha != 0.0) {
    const int k = spatial ? static_cast<int>(std::lround(std::sqrt(generator.conditioner_size()))) : 0;
    double sum = 0.0;
    auto dprob = [&](int n, const Grid& p) {
      const auto& m = latents[static_cast<std::size_t>(n)].m;
      if (!spatial) {
        const double diff = p.mean() - m[0];
        sum += diff * diff;
        return Grid(p.height, p.width, alpha * inv * 2.0 * diff / static_cast<double>(p.size()));
      }
      const Grid map = area_resample(p, k, k);
      Grid dmap(k, k);
      double cell = 0.0;
      for (std::size_t i = 0; i < map.size(); ++i) {
        const double diff = map.values[i] - m[i];
        cell += diff * diff;
        dmap.values[i] = alpha * inv * 2.0 * diff / static_cast<double>(map.size());
      }
      sum += cell / static_cast<double>(map.size());
      return area_resample_adjoint(dmap, p.height, p.width);
    };
    if (want_grad) {
      const Tensor<double> dmem = predictor.true_channel_vjp(images, dprob);
      for (std::size_t i = 0; i < dimages.size(); ++i) dimages[i] += dmem[i];
    } else {
      const auto probs = predictor.predict_maps(images);
      for (int n = 0; n < batch; ++n) (void)dprob(n, probs[static_cast<std::size_t>(n)].true_schema);
    }
    l.memorability = alpha * sum * inv;
  }
  l.total = l.adversarial + l.memorability;
  if (!std::isfinite(l.total)) throw NumericError("generator loss is not finite");

  if (want_grad) {
    (void)generator.network().backward(generator.parameters(), gen_trace, dimages, grad, false);
  }
  return l;
}

GeneratorLoss generator_loss_spatial(const Generator& generator, const Critic& critic, const VmsPredictor& predictor,
                                     std::span<const LatentSample> latents, double alpha, std::span<double> grad) {
  if (generator.conditioner_size() <= 1) throw UsageError("generator is not spatially conditioned");
  return generator_loss(generator, critic, predictor, latents, alpha, grad);
}

// ---------------------------------------------------------------- training

GanState init_gan_state(const GanConfig& config, std::uint64_t seed) {
  config.validate();
  GanState s;
  s.config = config;
  s.rng.seed(seed);
  s.generator = Generator(config, s.rng);
  s.critic = Critic(config, s.rng);
  s.generator_opt = nn::Adam(config.adam, s.generator.parameters().size());
  s.critic_opt = nn::Adam(config.adam, s.critic.parameters().size());
  return s;
}

std::string config_hash(const GanConfig& config) {
  json j = config;
  j.erase("epochs");  // extending a run is a legitimate resume
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

Checkpoint gan_checkpoint(const GanState& s) {
  std::ostringstream rng_state;
  rng_state << s.rng;
  Checkpoint ckpt(json{{"kind", "memgan"},
                       {"config", s.config},
                       {"config_hash", config_hash(s.config)},
                       {"step", s.step},
                       {"critic_steps", s.critic_steps},
                       {"epoch", s.epoch},
                       {"generator_adam_steps", s.generator_opt.steps()},
                       {"critic_adam_steps", s.critic_opt.steps()}});
  ckpt.put("generator", s.generator.parameters());
  ckpt.put("critic", s.critic.parameters());
  ckpt.put("generator_adam_m", s.generator_opt.first_moment());
  ckpt.put("generator_adam_v", s.generator_opt.second_moment());
  ckpt.put("critic_adam_m", s.critic_opt.first_moment());
  ckpt.put("critic_adam_v", s.critic_opt.second_moment());
  ckpt.put_bytes("rng", rng_state.str());
  return ckpt;
}

GanState gan_state_from_checkpoint(const Checkpoint& ckpt) {
  const json& meta = ckpt.metadata();
  if (meta.value("kind", std::string{}) != "memgan") throw DataError("checkpoint does not hold a GAN state");
  GanState s;
  s.config = meta.at("config").get<GanConfig>();
  s.config.validate();
  s.generator = Generator(s.config, ckpt.doubles("generator"));
  s.critic = Critic(build_critic(s.config), ckpt.doubles("critic"));
  s.generator_opt = nn::Adam(s.config.adam, s.generator.parameters().size());
  s.generator_opt.restore(meta.at("generator_adam_steps").get<std::int64_t>(), ckpt.doubles("generator_adam_m"),
                          ckpt.doubles("generator_adam_v"));
  s.critic_opt = nn::Adam(s.config.adam, s.critic.parameters().size());
  s.critic_opt.restore(meta.at("critic_adam_steps").get<std::int64_t>(), ckpt.doubles("critic_adam_m"),
                       ckpt.doubles("critic_adam_v"));
  std::istringstream rng_state(ckpt.bytes("rng"));
  rng_state >> s.rng;
  if (!rng_state) throw DataError("checkpoint RNG state is corrupt");
  s.step = meta.at("step").get<std::int64_t>();
  s.critic_steps = meta.at("critic_steps").get<std::int64_t>();
  s.epoch = meta.at("epoch").get<int>();
  return s;
}

void train_epochs(GanState& s, const Tensor<double>& real, const VmsPredictor& predictor, int epochs,
                  const StepCallback& on_step, const EpochCallback& on_epoch) {
  const GanConfig& c = s.config;
  c.validate();
  if (real.batch() == 0) throw DataError("no training images");
  if (real.shape().c != 3 || real.shape().h != c.resolution || real.shape().w != c.resolution) {
    throw DataError("training images are " + real.shape().str() + ", expected 3x" + std::to_string(c.resolution) +
                    "x" + std::to_string(c.resolution));
  }
  if (c.alpha != 0.0 && predictor.config().image_resolution != c.resolution) {
    throw UsageError("predictor resolution " + std::to_string(predictor.config().image_resolution) +
                     " does not match GAN resolution " + std::to_string(c.resolution));
  }
  const int batch = std::min(c.batch_size, real.batch());
  if (batch < 2) throw DataError("need at least two training images");
  const std::size_t sample = real.shape().sample_size();
  std::vector<std::size_t> order(static_cast<std::size_t>(real.batch()));
  std::vector<double> critic_grad(s.critic.parameters().size());
  std::vector<double> gen_grad(s.generator.parameters().size());

  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), s.rng);
    CriticLoss last_critic;
    for (std::size_t start = 0; start + static_cast<std::size_t>(batch) <= order.size();
         start += static_cast<std::size_t>(batch)) {
      Tensor<double> real_batch(real.shape().with_batch(batch));
      for (int k = 0; k < batch; ++k) {
        std::copy_n(real.data() + order[start + static_cast<std::size_t>(k)] * sample, sample,
                    real_batch.data() + static_cast<std::size_t>(k) * sample);
      }
      // The fakes' conditioners are drawn but only the images reach the critic.
      const auto latents = sample_latent(batch, c, s.rng);
      const Tensor<double> fake = s.generator.generate(latents);
      std::fill(critic_grad.begin(), critic_grad.end(), 0.0);
      last_critic = critic_loss(s.critic, real_batch, fake, s.rng, c.lambda_gp, critic_grad);
      s.critic_opt.step(s.critic.parameters(), critic_grad);
      ++s.critic_steps;

      if (s.critic_steps % c.n_critic == 0) {
        const auto gen_latents = sample_latent(batch, c, s.rng);
        std::fill(gen_grad.begin(), gen_grad.end(), 0.0);
        const GeneratorLoss gl = generator_loss(s.generator, s.critic, predictor, gen_latents, c.alpha, gen_grad);
        s.generator_opt.step(s.generator.parameters(), gen_grad);
        ++s.step;
        if (on_step) {
          on_step({s.step, s.epoch, last_critic.total, gl.adversarial, gl.memorability, last_critic.penalty});
        }
      }
    }
    ++s.epoch;
    if (on_epoch) on_epoch(s);
  }
}

GanTrainResult train(std::span<const Image> dataset, const VmsPredictor& predictor, const GanConfig& config,
                     std::uint64_t seed) {
  GanState state = init_gan_state(config, seed);
  GanTrainResult result;
  train_epochs(state, to_tensor(dataset), predictor, config.epochs,
               [&](const TrainingLogRow& row) { result.log.push_back(row); });
  result.generator = std::move(state.generator);
  result.critic = std::move(state.critic);
  return result;
}

std::vector<Image> sweep(const Generator& generator, std::span<const double> z, std::span<const double> m_values) {
  if (generator.conditioner_size() != 1) throw UsageError("scalar sweep needs a scalar-conditioned generator");
  std::vector<LatentSample> latents;
  if (m_values.empty()) throw UsageError("sweep needs at least one m value");
  for (double m : m_values) latents.push_back({{z.begin(), z.end()}, {m}});
  return to_images(generator.generate(latents));
}

std::vector<Image> sweep_spatial(const Generator& generator, std::span<const double> z, const Grid& target_map,
                                 std::span<const double> levels) {
  if (static_cast<int>(target_map.size()) != generator.conditioner_size() || generator.conditioner_size() == 1) {
    throw UsageError("spatial sweep map does not match the generator");
  }
  if (levels.empty()) throw UsageError("sweep needs at least one level");
  std::vector<LatentSample> latents;
  for (double level : levels) {
    LatentSample s{{z.begin(), z.end()}, target_map.values};
    for (auto& v : s.m) v *= level;
    latents.push_back(std::move(s));
  }
  return to_images(generator.generate(latents));
}

}  // namespace vmsgan
