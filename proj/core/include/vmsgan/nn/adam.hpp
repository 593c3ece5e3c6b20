#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace vmsgan::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

/// Adam with bias-corrected moments over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, std::size_t parameter_count);

  void step(std::span<double> params, std::span<const double> grads);

  [[nodiscard]] const AdamConfig& config() const { return config_; }
  [[nodiscard]] std::int64_t steps() const { return t_; }
  [[nodiscard]] const std::vector<double>& first_moment() const { return m_; }
  [[nodiscard]] const std::vector<double>& second_moment() const { return v_; }

  /// Restores optimizer state from a checkpoint.
  void restore(std::int64_t steps, std::vector<double> first, std::vector<double> second);

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t t_ = 0;
};

}  // namespace vmsgan::nn
