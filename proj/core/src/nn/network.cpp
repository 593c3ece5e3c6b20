#include "vmsgan/nn/network.hpp"

#include <string>

#include "vmsgan/dual.hpp"

namespace vmsgan::nn {

Network::Network(Shape sample_input, std::vector<Layer> layers) : layers_(std::move(layers)) {
  input_ = sample_input.with_batch(1);
  Shape current = input_;
  offsets_.reserve(layers_.size());
  for (const auto& layer : layers_) {
    offsets_.push_back(total_params_);
    total_params_ += nn::parameter_count(layer);
    current = nn::output_shape(layer, current);
  }
  output_ = current;
}

std::vector<double> Network::initial_parameters(std::mt19937_64& rng) const {
  std::vector<double> params(total_params_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    initialize(layers_[i], std::span<double>(params).subspan(offsets_[i], nn::parameter_count(layers_[i])), rng);
  }
  return params;
}

void Network::check_params(std::size_t count) const {
  if (count != total_params_) {
    throw UsageError("network expects " + std::to_string(total_params_) + " parameters, got " +
                     std::to_string(count));
  }
}

template <class T>
Tensor<T> Network::forward(std::span<const double> params, const Tensor<T>& x, Trace<T>* trace) const {
  check_params(params.size());
  const Shape& s = x.shape();
  if (s.c != input_.c || s.h != input_.h || s.w != input_.w) {
    throw UsageError("network input " + s.str() + " does not match expected sample shape " + input_.str());
  }
  if (trace != nullptr) {
    trace->activations.clear();
    trace->activations.reserve(layers_.size() + 1);
    trace->activations.push_back(x);
  }
  Tensor<T> current = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Tensor<T> next;
    nn::forward(layers_[i], params.subspan(offsets_[i], nn::parameter_count(layers_[i])), current, next);
    if (trace != nullptr) trace->activations.push_back(next);
    current = std::move(next);
  }
  return current;
}

template <class T>
Tensor<T> Network::backward(std::span<const double> params, const Trace<T>& trace, const Tensor<T>& grad_out,
                            std::span<T> param_grad, bool want_input_grad) const {
  check_params(params.size());
  if (!param_grad.empty()) check_params(param_grad.size());
  if (trace.activations.size() != layers_.size() + 1) throw UsageError("trace does not belong to this network");
  if (grad_out.shape() != trace.activations.back().shape()) {
    throw UsageError("output gradient shape " + grad_out.shape().str() + " does not match network output " +
                     trace.activations.back().shape().str());
  }
  Tensor<T> grad = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const std::size_t count = nn::parameter_count(layers_[i]);
    const auto layer_params = params.subspan(offsets_[i], count);
    const std::span<T> layer_grad = param_grad.empty() ? std::span<T>{} : param_grad.subspan(offsets_[i], count);
    const bool need_dx = want_input_grad || i > 0;
    if (!need_dx && layer_grad.empty()) return {};
    Tensor<T> dx;
    nn::backward(layers_[i], layer_params, trace.activations[i], trace.activations[i + 1], grad,
                 need_dx ? &dx : nullptr, layer_grad);
    if (!need_dx) return {};
    grad = std::move(dx);
  }
  return grad;
}

template Tensor<double> Network::forward<double>(std::span<const double>, const Tensor<double>&,
                                                 Trace<double>*) const;
template Tensor<Dual> Network::forward<Dual>(std::span<const double>, const Tensor<Dual>&, Trace<Dual>*) const;
template Tensor<double> Network::backward<double>(std::span<const double>, const Trace<double>&,
                                                  const Tensor<double>&, std::span<double>, bool) const;
template Tensor<Dual> Network::backward<Dual>(std::span<const double>, const Trace<Dual>&, const Tensor<Dual>&,
                                              std::span<Dual>, bool) const;

}  // namespace vmsgan::nn
