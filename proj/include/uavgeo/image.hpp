#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace uavgeo {

enum class Channel : int { R = 0, G = 1, B = 2 };

/// Interleaved 8-bit RGB raster, row-major, `pixels.size() == width * height * 3`.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0);

  bool empty() const { return width <= 0 || height <= 0 || pixels.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const RgbImage&) const = default;
};

RgbImage read_png(const std::filesystem::path& path);
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// Area-weighted bilinear resample of a sub-rectangle [x0,x0+w) x [y0,y0+h) of `src`
/// to `out_w` x `out_h`, returned as planar floating-point RGB (3 * out_h * out_w) in [0,255].
std::vector<double> resample_planar(const RgbImage& src, double x0, double y0, double w, double h,
                                    int out_w, int out_h, bool flip_horizontal = false);

/// Plain bilinear resize back to 8-bit.
RgbImage resize(const RgbImage& src, int out_w, int out_h);

}  // namespace uavgeo
