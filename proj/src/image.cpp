#include "uavgeo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "uavgeo/error.hpp"

namespace uavgeo {

RgbImage::RgbImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
  if (w <= 0 || h <= 0) throw Error("empty input");
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open " + path.string());

  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_stdio(&img, fp.get())) {
    throw Error("not a PNG: " + path.string() + " (" + img.message + ")");
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error("failed to decode " + path.string() + ": " + msg);
  }
  if (out.empty()) throw Error("empty input: " + path.string());
  return out;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (image.empty()) throw Error("empty input");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  // png_image_write_to_file embeds no timestamp, so output bytes are a pure function of the pixels.
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error("cannot write " + path.string() + ": " + msg);
  }
}

namespace {

double bilinear(const RgbImage& src, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(src.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(src.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, src.width - 1);
  const int y1 = std::min(y0 + 1, src.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1 - fx) * src.at(x0, y0, c) + fx * src.at(x1, y0, c);
  const double bot = (1 - fx) * src.at(x0, y1, c) + fx * src.at(x1, y1, c);
  return (1 - fy) * top + fy * bot;
}

}  // namespace

std::vector<double> resample_planar(const RgbImage& src, double x0, double y0, double w, double h,
                                    int out_w, int out_h, bool flip_horizontal) {
  if (src.empty()) throw Error("empty input");
  const double sx = w / out_w;
  const double sy = h / out_h;
  // Supersample each output cell so strong downscaling averages its footprint.
  const int kx = std::max(1, static_cast<int>(std::ceil(sx)));
  const int ky = std::max(1, static_cast<int>(std::ceil(sy)));
  const double norm = 1.0 / (kx * ky);

  std::vector<double> out(static_cast<std::size_t>(3) * out_w * out_h);
  const std::size_t plane = static_cast<std::size_t>(out_w) * out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const int dst_x = flip_horizontal ? out_w - 1 - ox : ox;
      double acc[3] = {0, 0, 0};
      for (int j = 0; j < ky; ++j) {
        const double y = y0 + (oy + (j + 0.5) / ky) * sy - 0.5;
        for (int i = 0; i < kx; ++i) {
          const double x = x0 + (ox + (i + 0.5) / kx) * sx - 0.5;
          for (int c = 0; c < 3; ++c) acc[c] += bilinear(src, x, y, c);
        }
      }
      for (int c = 0; c < 3; ++c) {
        out[c * plane + static_cast<std::size_t>(oy) * out_w + dst_x] = acc[c] * norm;
      }
    }
  }
  return out;
}

RgbImage resize(const RgbImage& src, int out_w, int out_h) {
  const auto planar = resample_planar(src, 0, 0, src.width, src.height, out_w, out_h);
  RgbImage out(out_w, out_h);
  const std::size_t plane = static_cast<std::size_t>(out_w) * out_h;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(planar[c * plane + p]), 0L, 255L));
    }
  }
  return out;
}

}  // namespace uavgeo
