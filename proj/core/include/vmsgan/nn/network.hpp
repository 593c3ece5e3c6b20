#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "vmsgan/nn/layers.hpp"
#include "vmsgan/tensor.hpp"

namespace vmsgan::nn {

/// Activations recorded by a forward pass: entry i is the input of layer i,
/// the last entry is the network output.
template <class T>
struct Trace {
  std::vector<Tensor<T>> activations;
};

/// A stateless layer stack. Parameters live outside the network and are
/// passed to every call as one flat span, laid out layer after layer.
class Network {
 public:
  Network() = default;
  Network(Shape sample_input, std::vector<Layer> layers);

  [[nodiscard]] const Shape& input_shape() const { return input_; }
  [[nodiscard]] const Shape& output_shape() const { return output_; }
  [[nodiscard]] std::size_t parameter_count() const { return total_params_; }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }

  [[nodiscard]] std::vector<double> initial_parameters(std::mt19937_64& rng) const;

  template <class T>
  [[nodiscard]] Tensor<T> forward(std::span<const double> params, const Tensor<T>& x,
                                  Trace<T>* trace = nullptr) const;

  /// Backpropagates `grad_out` through the recorded trace. Parameter
  /// gradients are accumulated into `param_grad` when it is non-empty.
  template <class T>
  [[nodiscard]] Tensor<T> backward(std::span<const double> params, const Trace<T>& trace,
                                   const Tensor<T>& grad_out, std::span<T> param_grad,
                                   bool want_input_grad = true) const;

 private:
  void check_params(std::size_t count) const;

  Shape input_;
  Shape output_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t total_params_ = 0;
};

}  // namespace vmsgan::nn
