#include "vmsgan/nn/adam.hpp"

#include <cmath>

#include "vmsgan/error.hpp"

namespace vmsgan::nn {

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
}

Adam::Adam(AdamConfig config, std::size_t parameter_count)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(config_.learning_rate > 0.0) || config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0 || !(config_.epsilon > 0.0)) {
    throw UsageError("invalid Adam hyperparameters");
  }
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw UsageError("Adam step size mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient in optimizer step");
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

void Adam::restore(std::int64_t steps, std::vector<double> first, std::vector<double> second) {
  if (first.size() != m_.size() || second.size() != v_.size()) {
    throw DataError("optimizer state does not match parameter count");
  }
  t_ = steps;
  m_ = std::move(first);
  v_ = std::move(second);
}

}  // namespace vmsgan::nn
