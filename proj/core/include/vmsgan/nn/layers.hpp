#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <variant>

#include "vmsgan/tensor.hpp"

namespace vmsgan::nn {

/// Fully connected layer over the flattened sample. Parameters: W (out x in), b (out).
struct Dense {
  int in_features = 0;
  int out_features = 0;
};

/// 2-D convolution. Parameters: W (out x in*k*k), b (out).
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

/// Transposed 2-D convolution (adjoint of Conv2d geometry).
/// Parameters: W (in x out*k*k), b (out). Output extent (h-1)*stride - 2*padding + kernel.
struct ConvTranspose2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
};

struct LeakyRelu {
  double slope = 0.2;
};

struct Tanh {};

/// Divides every pixel's channel vector by its root-mean-square.
struct PixelNorm {
  double epsilon = 1e-8;
};

/// Appends one channel holding the batch-averaged per-feature population
/// standard deviation. Needs at least two samples.
struct MinibatchStddev {};

/// Reinterprets each sample as (c, h, w); Reshape{features, 1, 1} flattens.
struct Reshape {
  int c = 0;
  int h = 1;
  int w = 1;
};

using Layer = std::variant<Dense, Conv2d, ConvTranspose2d, LeakyRelu, Tanh, PixelNorm, MinibatchStddev, Reshape>;

[[nodiscard]] std::size_t parameter_count(const Layer& layer);

/// Per-sample output extent; throws UsageError when `input` does not fit.
[[nodiscard]] Shape output_shape(const Layer& layer, Shape input);

/// He-normal weights, zero biases.
void initialize(const Layer& layer, std::span<double> params, std::mt19937_64& rng);

[[nodiscard]] std::string describe(const Layer& layer);

template <class T>
void forward(const Layer& layer, std::span<const double> params, const Tensor<T>& x, Tensor<T>& y);

/// Accumulates into `dparams` when it is non-empty; writes `*dx` when non-null.
template <class T>
void backward(const Layer& layer, std::span<const double> params, const Tensor<T>& x, const Tensor<T>& y,
              const Tensor<T>& dy, Tensor<T>* dx, std::span<T> dparams);

}  // namespace vmsgan::nn
