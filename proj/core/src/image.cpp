#include "vmsgan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vmsgan/error.hpp"

namespace vmsgan {

Grid::Grid(int h, int w, double fill) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

double Grid::mean() const {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

Image::Image(int h, int w, double fill) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

Raster8 read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw UsageError("read_png supports 1 or 3 channels");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw DataError("cannot decode image " + path.string() + ": " + img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Raster8 out;
  out.height = static_cast<int>(img.height);
  out.width = static_cast<int>(img.width);
  out.channels = channels;
  out.data.resize(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr) == 0) {
    const std::string message = img.message;
    png_image_free(&img);
    throw DataError("cannot decode image " + path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Raster8& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw UsageError("write_png supports 1 or 3 channels");
  if (raster.data.size() != static_cast<std::size_t>(raster.height) * raster.width * raster.channels) {
    throw UsageError("raster buffer size mismatch");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(raster.width);
  img.height = static_cast<png_uint_32>(raster.height);
  img.format = raster.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (png_image_write_to_file(&img, path.c_str(), 0, raster.data.data(), 0, nullptr) == 0) {
    throw DataError("cannot write image " + path.string() + ": " + img.message);
  }
}

Image image_from_raster(const Raster8& raster) {
  Image img(raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = raster.channels == 1 ? 0 : c;
        const auto v = raster.data[(static_cast<std::size_t>(y) * raster.width + x) * raster.channels + src];
        img.at(y, x, c) = static_cast<double>(v) / 127.5 - 1.0;
      }
    }
  }
  return img;
}

Raster8 raster_from_image(const Image& image) {
  Raster8 r{image.height, image.width, 3, std::vector<std::uint8_t>(image.pixels.size())};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double v = std::round((image.pixels[i] + 1.0) * 127.5);
    r.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return r;
}

namespace {

// Row-major (out x in) matrix of box-filter weights; each row sums to 1.
std::vector<double> box_weights(int in, int out) {
  std::vector<double> w(static_cast<std::size_t>(out) * in, 0.0);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int i = first; i <= last; ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w[static_cast<std::size_t>(o) * in + i] = overlap / scale;
    }
  }
  return w;
}

void check_extent(int h, int w) {
  if (h <= 0 || w <= 0) throw UsageError("degenerate resampling resolution");
}

}  // namespace

Grid area_resample(const Grid& source, int out_height, int out_width) {
  check_extent(out_height, out_width);
  check_extent(source.height, source.width);
  const auto wy = box_weights(source.height, out_height);
  const auto wx = box_weights(source.width, out_width);
  // rows first: tmp (out_h x in_w)
  Grid tmp(out_height, source.width);
  for (int o = 0; o < out_height; ++o) {
    for (int i = 0; i < source.height; ++i) {
      const double weight = wy[static_cast<std::size_t>(o) * source.height + i];
      if (weight == 0.0) continue;
      for (int x = 0; x < source.width; ++x) tmp.at(o, x) += weight * source.at(i, x);
    }
  }
  Grid out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    for (int o = 0; o < out_width; ++o) {
      double acc = 0.0;
      for (int i = 0; i < source.width; ++i) acc += wx[static_cast<std::size_t>(o) * source.width + i] * tmp.at(y, i);
      out.at(y, o) = acc;
    }
  }
  return out;
}

Grid area_resample_adjoint(const Grid& output_grad, int source_height, int source_width) {
  check_extent(source_height, source_width);
  const auto wy = box_weights(source_height, output_grad.height);
  const auto wx = box_weights(source_width, output_grad.width);
  Grid tmp(output_grad.height, source_width);
  for (int y = 0; y < output_grad.height; ++y) {
    for (int o = 0; o < output_grad.width; ++o) {
      const double g = output_grad.at(y, o);
      for (int i = 0; i < source_width; ++i) tmp.at(y, i) += wx[static_cast<std::size_t>(o) * source_width + i] * g;
    }
  }
  Grid out(source_height, source_width);
  for (int o = 0; o < output_grad.height; ++o) {
    for (int i = 0; i < source_height; ++i) {
      const double weight = wy[static_cast<std::size_t>(o) * source_height + i];
      if (weight == 0.0) continue;
      for (int x = 0; x < source_width; ++x) out.at(i, x) += weight * tmp.at(o, x);
    }
  }
  return out;
}

Image resize_area(const Image& image, int out_height, int out_width) {
  if (image.height == out_height && image.width == out_width) return image;
  Image out(out_height, out_width);
  for (int c = 0; c < 3; ++c) {
    Grid plane(image.height, image.width);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) plane.at(y, x) = image.at(y, x, c);
    }
    const Grid resized = area_resample(plane, out_height, out_width);
    for (int y = 0; y < out_height; ++y) {
      for (int x = 0; x < out_width; ++x) out.at(y, x, c) = resized.at(y, x);
    }
  }
  return out;
}

Tensor<double> to_tensor(std::span<const Image> images) {
  if (images.empty()) throw UsageError("cannot build a tensor from zero images");
  const int h = images.front().height;
  const int w = images.front().width;
  Tensor<double> t({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.height != h || img.width != w) throw UsageError("images in a batch must share one resolution");
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) t.at(static_cast<int>(n), c, y, x) = img.at(y, x, c);
      }
    }
  }
  return t;
}

Image image_at(const Tensor<double>& batch, int n) {
  const Shape& s = batch.shape();
  if (s.c != 3) throw UsageError("image tensors need 3 channels");
  Image img(s.h, s.w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) img.at(y, x, c) = batch.at(n, c, y, x);
    }
  }
  return img;
}

std::vector<Image> to_images(const Tensor<double>& batch) {
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(batch.batch()));
  for (int n = 0; n < batch.batch(); ++n) out.push_back(image_at(batch, n));
  return out;
}

Image tile_images(std::span<const Image> images, int columns, int gap) {
  if (images.empty() || columns <= 0) throw UsageError("nothing to tile");
  const int h = images.front().height;
  const int w = images.front().width;
  const int count = static_cast<int>(images.size());
  const int cols = std::min(columns, count);
  const int rows = (count + cols - 1) / cols;
  Image out(rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, 1.0);
  for (int i = 0; i < count; ++i) {
    const int oy = (i / cols) * (h + gap);
    const int ox = (i % cols) * (w + gap);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) out.at(oy + y, ox + x, c) = images[static_cast<std::size_t>(i)].at(y, x, c);
      }
    }
  }
  return out;
}

}  // namespace vmsgan
