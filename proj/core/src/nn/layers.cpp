#include "vmsgan/nn/layers.hpp"

#include <cmath>
#include <sstream>
#include <type_traits>

#include "gemm.hpp"
#include "vmsgan/dual.hpp"

namespace vmsgan {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

}  // namespace vmsgan

namespace vmsgan::nn {
namespace {

using detail::gemm;
using detail::Op;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

// Geometry shared by Conv2d (image = input, grid = output) and
// ConvTranspose2d (image = output, grid = input).
struct Patch {
  int channels;
  int image_h;
  int image_w;
  int grid_h;
  int grid_w;
  int kernel;
  int stride;
  int padding;

  [[nodiscard]] int rows() const { return channels * kernel * kernel; }
  [[nodiscard]] int grid() const { return grid_h * grid_w; }
};

// col[(c*k + ki)*k + kj][n*grid + gy*gw + gx] = image[c][gy*s - p + ki][gx*s - p + kj]
template <class T>
void im2col(const Patch& g, const T* image, int sample, std::size_t row_len, T* col) {
  const std::size_t base = static_cast<std::size_t>(sample) * g.grid();
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = image + static_cast<std::size_t>(c) * g.image_h * g.image_w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* row = col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * row_len + base;
        for (int gy = 0; gy < g.grid_h; ++gy) {
          const int iy = gy * g.stride - g.padding + ki;
          T* dst = row + static_cast<std::size_t>(gy) * g.grid_w;
          if (iy < 0 || iy >= g.image_h) {
            for (int gx = 0; gx < g.grid_w; ++gx) dst[gx] = T{};
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.image_w;
          for (int gx = 0; gx < g.grid_w; ++gx) {
            const int ix = gx * g.stride - g.padding + kj;
            dst[gx] = (ix >= 0 && ix < g.image_w) ? src[ix] : T{};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the image.
template <class T>
void col2im(const Patch& g, const T* col, int sample, std::size_t row_len, T* image) {
  const std::size_t base = static_cast<std::size_t>(sample) * g.grid();
  for (int c = 0; c < g.channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * g.image_h * g.image_w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * row_len + base;
        for (int gy = 0; gy < g.grid_h; ++gy) {
          const int iy = gy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.image_h) continue;
          const T* src = row + static_cast<std::size_t>(gy) * g.grid_w;
          T* dst = plane + static_cast<std::size_t>(iy) * g.image_w;
          for (int gx = 0; gx < g.grid_w; ++gx) {
            const int ix = gx * g.stride - g.padding + kj;
            if (ix >= 0 && ix < g.image_w) dst[ix] += src[gx];
          }
        }
      }
    }
  }
}

// (N, C, P) <-> (C, N*P)
template <class T>
void to_channel_major(const Tensor<T>& x, std::vector<T>& out) {
  const Shape& s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t row_len = static_cast<std::size_t>(s.n) * plane;
  out.assign(static_cast<std::size_t>(s.c) * row_len, T{});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      T* dst = out.data() + c * row_len + n * plane;
      std::copy(src, src + plane, dst);
    }
  }
}

template <class T>
void from_channel_major(const std::vector<T>& in, Tensor<T>& y) {
  const Shape& s = y.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t row_len = static_cast<std::size_t>(s.n) * plane;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = in.data() + c * row_len + n * plane;
      T* dst = y.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      std::copy(src, src + plane, dst);
    }
  }
}

template <class T>
void add_channel_bias(std::span<const double> bias, Tensor<T>& y) {
  const Shape& s = y.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      T* p = y.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      const T b = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

template <class T>
void accumulate_channel_bias_grad(const Tensor<T>& dy, std::span<T> dbias) {
  const Shape& s = dy.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = dy.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      T sum{};
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      dbias[c] += sum;
    }
  }
}

int conv_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

int deconv_extent(int in, int kernel, int stride, int padding) {
  return (in - 1) * stride - 2 * padding + kernel;
}

// ---------------------------------------------------------------- Dense

template <class T>
void dense_forward(const Dense& l, std::span<const double> p, const Tensor<T>& x, Tensor<T>& y) {
  const int n = x.batch();
  y = Tensor<T>({n, l.out_features, 1, 1});
  gemm(Op::kNone, Op::kTranspose, n, l.out_features, l.in_features, x.data(), p.data(), y.data(), false);
  const double* bias = p.data() + static_cast<std::size_t>(l.out_features) * l.in_features;
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < l.out_features; ++o) y[static_cast<std::size_t>(i) * l.out_features + o] += T(bias[o]);
  }
}

template <class T>
void dense_backward(const Dense& l, std::span<const double> p, const Tensor<T>& x, const Tensor<T>& dy,
                    Tensor<T>* dx, std::span<T> dp) {
  const int n = x.batch();
  if (!dp.empty()) {
    gemm(Op::kTranspose, Op::kNone, l.out_features, l.in_features, n, dy.data(), x.data(), dp.data(), true);
    T* dbias = dp.data() + static_cast<std::size_t>(l.out_features) * l.in_features;
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < l.out_features; ++o) dbias[o] += dy[static_cast<std::size_t>(i) * l.out_features + o];
    }
  }
  if (dx != nullptr) {
    *dx = Tensor<T>(x.shape());
    gemm(Op::kNone, Op::kNone, n, l.in_features, l.out_features, dy.data(), p.data(), dx->data(), false);
  }
}

// ---------------------------------------------------------------- Conv2d

template <class T>
void conv_forward(const Conv2d& l, std::span<const double> p, const Tensor<T>& x, Tensor<T>& y) {
  const Shape& s = x.shape();
  const int oh = conv_extent(s.h, l.kernel, l.stride, l.padding);
  const int ow = conv_extent(s.w, l.kernel, l.stride, l.padding);
  const Patch g{l.in_channels, s.h, s.w, oh, ow, l.kernel, l.stride, l.padding};
  const std::size_t row_len = static_cast<std::size_t>(s.n) * g.grid();
  std::vector<T> col(static_cast<std::size_t>(g.rows()) * row_len);
  for (int n = 0; n < s.n; ++n) im2col(g, x.sample(n).data(), n, row_len, col.data());
  std::vector<T> out(static_cast<std::size_t>(l.out_channels) * row_len);
  gemm(Op::kNone, Op::kNone, l.out_channels, static_cast<int>(row_len), g.rows(), p.data(), col.data(),
       out.data(), false);
  y = Tensor<T>({s.n, l.out_channels, oh, ow});
  from_channel_major(out, y);
  add_channel_bias(p.subspan(static_cast<std::size_t>(l.out_channels) * g.rows()), y);
}

template <class T>
void conv_backward(const Conv2d& l, std::span<const double> p, const Tensor<T>& x, const Tensor<T>& dy,
                   Tensor<T>* dx, std::span<T> dp) {
  const Shape& s = x.shape();
  const Shape& os = dy.shape();
  const Patch g{l.in_channels, s.h, s.w, os.h, os.w, l.kernel, l.stride, l.padding};
  const std::size_t row_len = static_cast<std::size_t>(s.n) * g.grid();
  const std::size_t weights = static_cast<std::size_t>(l.out_channels) * g.rows();
  std::vector<T> dout;
  to_channel_major(dy, dout);
  if (!dp.empty()) {
    std::vector<T> col(static_cast<std::size_t>(g.rows()) * row_len);
    for (int n = 0; n < s.n; ++n) im2col(g, x.sample(n).data(), n, row_len, col.data());
    gemm(Op::kNone, Op::kTranspose, l.out_channels, g.rows(), static_cast<int>(row_len), dout.data(), col.data(),
         dp.data(), true);
    accumulate_channel_bias_grad(dy, dp.subspan(weights));
  }
  if (dx != nullptr) {
    std::vector<T> dcol(static_cast<std::size_t>(g.rows()) * row_len);
    gemm(Op::kTranspose, Op::kNone, g.rows(), static_cast<int>(row_len), l.out_channels, p.data(), dout.data(),
         dcol.data(), false);
    *dx = Tensor<T>(s);
    for (int n = 0; n < s.n; ++n) col2im(g, dcol.data(), n, row_len, dx->sample(n).data());
  }
}

// ---------------------------------------------------------------- ConvTranspose2d

template <class T>
void deconv_forward(const ConvTranspose2d& l, std::span<const double> p, const Tensor<T>& x, Tensor<T>& y) {
  const Shape& s = x.shape();
  const int oh = deconv_extent(s.h, l.kernel, l.stride, l.padding);
  const int ow = deconv_extent(s.w, l.kernel, l.stride, l.padding);
  const Patch g{l.out_channels, oh, ow, s.h, s.w, l.kernel, l.stride, l.padding};
  const std::size_t row_len = static_cast<std::size_t>(s.n) * g.grid();
  std::vector<T> xin;
  to_channel_major(x, xin);
  std::vector<T> col(static_cast<std::size_t>(g.rows()) * row_len);
  gemm(Op::kTranspose, Op::kNone, g.rows(), static_cast<int>(row_len), l.in_channels, p.data(), xin.data(),
       col.data(), false);
  y = Tensor<T>({s.n, l.out_channels, oh, ow});
  for (int n = 0; n < s.n; ++n) col2im(g, col.data(), n, row_len, y.sample(n).data());
  add_channel_bias(p.subspan(static_cast<std::size_t>(l.in_channels) * g.rows()), y);
}

template <class T>
void deconv_backward(const ConvTranspose2d& l, std::span<const double> p, const Tensor<T>& x,
                     const Tensor<T>& dy, Tensor<T>* dx, std::span<T> dp) {
  const Shape& s = x.shape();
  const Shape& os = dy.shape();
  const Patch g{l.out_channels, os.h, os.w, s.h, s.w, l.kernel, l.stride, l.padding};
  const std::size_t row_len = static_cast<std::size_t>(s.n) * g.grid();
  const std::size_t weights = static_cast<std::size_t>(l.in_channels) * g.rows();
  std::vector<T> dcol(static_cast<std::size_t>(g.rows()) * row_len);
  for (int n = 0; n < s.n; ++n) im2col(g, dy.sample(n).data(), n, row_len, dcol.data());
  if (!dp.empty()) {
    std::vector<T> xin;
    to_channel_major(x, xin);
    gemm(Op::kNone, Op::kTranspose, l.in_channels, g.rows(), static_cast<int>(row_len), xin.data(), dcol.data(),
         dp.data(), true);
    accumulate_channel_bias_grad(dy, dp.subspan(weights));
  }
  if (dx != nullptr) {
    std::vector<T> dxin(static_cast<std::size_t>(l.in_channels) * row_len);
    gemm(Op::kNone, Op::kNone, l.in_channels, static_cast<int>(row_len), g.rows(), p.data(), dcol.data(),
         dxin.data(), false);
    *dx = Tensor<T>(s);
    from_channel_major(dxin, *dx);
  }
}

// ---------------------------------------------------------------- PixelNorm

template <class T>
void pixelnorm_forward(const PixelNorm& l, const Tensor<T>& x, Tensor<T>& y) {
  const Shape& s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  y = Tensor<T>(s);
  for (int n = 0; n < s.n; ++n) {
    const T* src = x.sample(n).data();
    T* dst = y.sample(n).data();
    for (std::size_t i = 0; i < plane; ++i) {
      T ms{};
      for (int c = 0; c < s.c; ++c) ms += src[c * plane + i] * src[c * plane + i];
      ms = ms / T(static_cast<double>(s.c)) + T(l.epsilon);
      if (value_of(ms) <= 0.0) continue;  // all-zero pixel with epsilon 0 stays zero
      using std::sqrt;
      const T inv = T(1.0) / sqrt(ms);
      for (int c = 0; c < s.c; ++c) dst[c * plane + i] = src[c * plane + i] * inv;
    }
  }
}

template <class T>
void pixelnorm_backward(const PixelNorm& l, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  const Shape& s = x.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  dx = Tensor<T>(s);
  for (int n = 0; n < s.n; ++n) {
    const T* src = x.sample(n).data();
    const T* g = dy.sample(n).data();
    T* out = dx.sample(n).data();
    for (std::size_t i = 0; i < plane; ++i) {
      T ms{};
      T dot{};
      for (int c = 0; c < s.c; ++c) {
        ms += src[c * plane + i] * src[c * plane + i];
        dot += src[c * plane + i] * g[c * plane + i];
      }
      ms = ms / T(static_cast<double>(s.c)) + T(l.epsilon);
      if (value_of(ms) <= 0.0) continue;
      using std::sqrt;
      const T inv = T(1.0) / sqrt(ms);
      const T coef = inv * inv * inv * dot / T(static_cast<double>(s.c));
      for (int c = 0; c < s.c; ++c) out[c * plane + i] = inv * g[c * plane + i] - src[c * plane + i] * coef;
    }
  }
}

// ---------------------------------------------------------------- MinibatchStddev

// Deviations are taken relative to sample 0 so identical samples give an
// exactly zero spread.
template <class T>
struct Deviations {
  T shifted_mean{};
  T sum_sq{};
};

template <class T>
Deviations<T> deviations(const Tensor<T>& x, std::size_t f, T inv_n) {
  const int batch = x.shape().n;
  const T base = x.sample(0)[f];
  Deviations<T> d;
  for (int n = 0; n < batch; ++n) d.shifted_mean += x.sample(n)[f] - base;
  d.shifted_mean = d.shifted_mean * inv_n;
  for (int n = 0; n < batch; ++n) {
    const T e = x.sample(n)[f] - base - d.shifted_mean;
    d.sum_sq += e * e;
  }
  return d;
}

template <class T>
void mbstd_forward(const Tensor<T>& x, Tensor<T>& y) {
  const Shape& s = x.shape();
  if (s.n < 2) throw UsageError("minibatch stddev needs a batch of at least 2 samples");
  const std::size_t feat = s.sample_size();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const T inv_n = T(1.0 / s.n);
  T total{};
  for (std::size_t f = 0; f < feat; ++f) {
    const Deviations<T> d = deviations(x, f, inv_n);
    using std::sqrt;
    total += sqrt(d.sum_sq * inv_n);
  }
  const T stat = total / T(static_cast<double>(feat));
  y = Tensor<T>({s.n, s.c + 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    auto src = x.sample(n);
    auto dst = y.sample(n);
    std::copy(src.begin(), src.end(), dst.begin());
    std::fill(dst.begin() + static_cast<std::ptrdiff_t>(feat), dst.begin() + static_cast<std::ptrdiff_t>(feat + plane), stat);
  }
}

template <class T>
void mbstd_backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  const Shape& s = x.shape();
  const std::size_t feat = s.sample_size();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  T dstat{};
  for (int n = 0; n < s.n; ++n) {
    auto g = dy.sample(n);
    for (std::size_t i = 0; i < plane; ++i) dstat += g[feat + i];
  }
  dx = Tensor<T>(s);
  for (int n = 0; n < s.n; ++n) {
    auto g = dy.sample(n);
    std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(feat), dx.sample(n).begin());
  }
  const T inv_n = T(1.0 / s.n);
  const T scale = dstat / T(static_cast<double>(feat));
  for (std::size_t f = 0; f < feat; ++f) {
    const Deviations<T> d = deviations(x, f, inv_n);
    using std::sqrt;
    const T sd = sqrt(d.sum_sq * inv_n);
    if (value_of(sd) <= 0.0) continue;  // subgradient 0 at a constant feature
    for (int n = 0; n < s.n; ++n) {
      dx.sample(n)[f] += scale * (x.sample(n)[f] - x.sample(0)[f] - d.shifted_mean) * inv_n / sd;
    }
  }
}

}  // namespace

std::size_t parameter_count(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Dense& l) -> std::size_t {
                          return static_cast<std::size_t>(l.out_features) * (l.in_features + 1);
                        },
                        [](const Conv2d& l) -> std::size_t {
                          return static_cast<std::size_t>(l.out_channels) *
                                 (static_cast<std::size_t>(l.in_channels) * l.kernel * l.kernel + 1);
                        },
                        [](const ConvTranspose2d& l) -> std::size_t {
                          return static_cast<std::size_t>(l.in_channels) * l.out_channels * l.kernel * l.kernel +
                                 static_cast<std::size_t>(l.out_channels);
                        },
                        [](const auto&) -> std::size_t { return 0; },
                    },
                    layer);
}

Shape output_shape(const Layer& layer, Shape in) {
  return std::visit(
      Overloaded{
          [&](const Dense& l) {
            if (static_cast<std::size_t>(l.in_features) != in.sample_size()) {
              throw UsageError("dense layer expects " + std::to_string(l.in_features) + " features, got " + in.str());
            }
            return Shape{in.n, l.out_features, 1, 1};
          },
          [&](const Conv2d& l) {
            if (l.in_channels != in.c) throw UsageError("conv2d channel mismatch at input " + in.str());
            const Shape out{in.n, l.out_channels, conv_extent(in.h, l.kernel, l.stride, l.padding),
                            conv_extent(in.w, l.kernel, l.stride, l.padding)};
            if (out.h <= 0 || out.w <= 0) throw UsageError("conv2d input too small: " + in.str());
            return out;
          },
          [&](const ConvTranspose2d& l) {
            if (l.in_channels != in.c) throw UsageError("conv-transpose channel mismatch at input " + in.str());
            return Shape{in.n, l.out_channels, deconv_extent(in.h, l.kernel, l.stride, l.padding),
                         deconv_extent(in.w, l.kernel, l.stride, l.padding)};
          },
          [&](const MinibatchStddev&) { return Shape{in.n, in.c + 1, in.h, in.w}; },
          [&](const Reshape& l) {
            const Shape out{in.n, l.c, l.h, l.w};
            if (out.sample_size() != in.sample_size()) {
              throw UsageError("cannot reshape " + in.str() + " to " + out.str());
            }
            return out;
          },
          [&](const auto&) { return in; },
      },
      layer);
}

void initialize(const Layer& layer, std::span<double> params, std::mt19937_64& rng) {
  auto he = [&](std::size_t weights, double fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < weights; ++i) params[i] = dist(rng);
    for (std::size_t i = weights; i < params.size(); ++i) params[i] = 0.0;
  };
  std::visit(Overloaded{
                 [&](const Dense& l) {
                   he(static_cast<std::size_t>(l.out_features) * l.in_features, l.in_features);
                 },
                 [&](const Conv2d& l) {
                   const double fan_in = static_cast<double>(l.in_channels) * l.kernel * l.kernel;
                   he(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel, fan_in);
                 },
                 [&](const ConvTranspose2d& l) {
                   const double fan_in =
                       static_cast<double>(l.in_channels) * l.kernel * l.kernel / (l.stride * l.stride);
                   he(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel, fan_in);
                 },
                 [](const auto&) {},
             },
             layer);
}

std::string describe(const Layer& layer) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const Dense& l) { os << "Dense(" << l.in_features << " -> " << l.out_features << ')'; },
                 [&](const Conv2d& l) {
                   os << "Conv2d(" << l.in_channels << " -> " << l.out_channels << ", k" << l.kernel << " s"
                      << l.stride << " p" << l.padding << ')';
                 },
                 [&](const ConvTranspose2d& l) {
                   os << "ConvTranspose2d(" << l.in_channels << " -> " << l.out_channels << ", k" << l.kernel
                      << " s" << l.stride << " p" << l.padding << ')';
                 },
                 [&](const LeakyRelu& l) { os << "LeakyRelu(" << l.slope << ')'; },
                 [&](const Tanh&) { os << "Tanh"; },
                 [&](const PixelNorm& l) { os << "PixelNorm(" << l.epsilon << ')'; },
                 [&](const MinibatchStddev&) { os << "MinibatchStddev"; },
                 [&](const Reshape& l) { os << "Reshape(" << l.c << ", " << l.h << ", " << l.w << ')'; },
             },
             layer);
  return os.str();
}

template <class T>
void forward(const Layer& layer, std::span<const double> params, const Tensor<T>& x, Tensor<T>& y) {
  std::visit(Overloaded{
                 [&](const Dense& l) { dense_forward(l, params, x, y); },
                 [&](const Conv2d& l) { conv_forward(l, params, x, y); },
                 [&](const ConvTranspose2d& l) { deconv_forward(l, params, x, y); },
                 [&](const LeakyRelu& l) {
                   y = x;
                   const T slope(l.slope);
                   for (auto& v : y.values()) {
                     if (value_of(v) < 0.0) v = v * slope;
                   }
                 },
                 [&](const Tanh&) {
                   y = x;
                   using std::tanh;
                   for (auto& v : y.values()) v = tanh(v);
                 },
                 [&](const PixelNorm& l) { pixelnorm_forward(l, x, y); },
                 [&](const MinibatchStddev&) { mbstd_forward(x, y); },
                 [&](const Reshape& l) {
                   y = x;
                   y.reshape({x.batch(), l.c, l.h, l.w});
                 },
             },
             layer);
}

template <class T>
void backward(const Layer& layer, std::span<const double> params, const Tensor<T>& x, const Tensor<T>& y,
              const Tensor<T>& dy, Tensor<T>* dx, std::span<T> dparams) {
  std::visit(Overloaded{
                 [&](const Dense& l) { dense_backward(l, params, x, dy, dx, dparams); },
                 [&](const Conv2d& l) { conv_backward(l, params, x, dy, dx, dparams); },
                 [&](const ConvTranspose2d& l) { deconv_backward(l, params, x, dy, dx, dparams); },
                 [&](const LeakyRelu& l) {
                   if (dx == nullptr) return;
                   *dx = dy;
                   const T slope(l.slope);
                   for (std::size_t i = 0; i < dx->size(); ++i) {
                     if (value_of(x[i]) < 0.0) (*dx)[i] = (*dx)[i] * slope;
                   }
                 },
                 [&](const Tanh&) {
                   if (dx == nullptr) return;
                   *dx = dy;
                   for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] = (*dx)[i] * (T(1.0) - y[i] * y[i]);
                 },
                 [&](const PixelNorm& l) {
                   if (dx != nullptr) pixelnorm_backward(l, x, dy, *dx);
                 },
                 [&](const MinibatchStddev&) {
                   if (dx != nullptr) mbstd_backward(x, dy, *dx);
                 },
                 [&](const Reshape&) {
                   if (dx == nullptr) return;
                   *dx = dy;
                   dx->reshape(x.shape());
                 },
             },
             layer);
}

template void forward<double>(const Layer&, std::span<const double>, const Tensor<double>&, Tensor<double>&);
template void forward<Dual>(const Layer&, std::span<const double>, const Tensor<Dual>&, Tensor<Dual>&);
template void backward<double>(const Layer&, std::span<const double>, const Tensor<double>&,
                               const Tensor<double>&, const Tensor<double>&, Tensor<double>*, std::span<double>);
template void backward<Dual>(const Layer&, std::span<const double>, const Tensor<Dual>&, const Tensor<Dual>&,
                             const Tensor<Dual>&, Tensor<Dual>*, std::span<Dual>);

}  // namespace vmsgan::nn
