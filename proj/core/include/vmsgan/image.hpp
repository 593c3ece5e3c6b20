#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vmsgan/tensor.hpp"

namespace vmsgan {

/// Row-major single-channel grid of reals.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0);

  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] double mean() const;
};

/// H x W x 3 interleaved RGB with values in [-1, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0);

  double& at(int y, int x, int ch) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  [[nodiscard]] double at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
};

/// Decoded 8-bit raster, interleaved channels.
struct Raster8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

/// Reads a PNG converted to `channels` (1 = gray, 3 = RGB). Throws DataError.
[[nodiscard]] Raster8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Raster8& raster);

/// 0..255 -> [-1, 1] linearly (v / 127.5 - 1).
[[nodiscard]] Image image_from_raster(const Raster8& raster);
/// [-1, 1] -> 0..255, rounded and clamped.
[[nodiscard]] Raster8 raster_from_image(const Image& image);

/// Exact box-filter resampling: each output cell is the area-weighted mean of
/// the source cells it overlaps. Preserves the global mean.
[[nodiscard]] Grid area_resample(const Grid& source, int out_height, int out_width);

/// Adjoint of area_resample: maps a gradient on the output grid back onto a
/// source grid of the given extent.
[[nodiscard]] Grid area_resample_adjoint(const Grid& output_grad, int source_height, int source_width);

[[nodiscard]] Image resize_area(const Image& image, int out_height, int out_width);

/// Stack images into an (n, 3, h, w) tensor. All images must share one extent.
[[nodiscard]] Tensor<double> to_tensor(std::span<const Image> images);
[[nodiscard]] Image image_at(const Tensor<double>& batch, int n);
[[nodiscard]] std::vector<Image> to_images(const Tensor<double>& batch);

/// Tiles images left to right, top to bottom, `columns` per row, with a gap.
[[nodiscard]] Image tile_images(std::span<const Image> images, int columns, int gap = 2);

}  // namespace vmsgan
