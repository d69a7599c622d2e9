#pragma once

// Training-free colour style alignment: drone images are pushed through the
// average per-channel cumulative-distribution lookup of the satellite set.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uavgeo/image.hpp"

namespace uavgeo::style {

using Lut = std::array<std::uint8_t, 256>;

/// Pixel tallies per gray level for one channel.
struct ChannelHistogram {
  std::array<std::uint64_t, 256> counts{};

  std::uint64_t total() const;
  ChannelHistogram& operator+=(const ChannelHistogram& other);
  bool operator==(const ChannelHistogram&) const = default;
};

/// Three monotone 256-entry lookup tables, one per RGB channel.
struct ColorMapping {
  Lut r{};
  Lut g{};
  Lut b{};

  const Lut& channel(Channel c) const;
  Lut& channel(Channel c);
  /// Every LUT non-decreasing (range is implied by the 8-bit storage).
  bool is_monotone() const;

  static ColorMapping identity();
  bool operator==(const ColorMapping&) const = default;
};

ChannelHistogram channel_histogram(const RgbImage& image, Channel channel);

/// lut[x] = floor(min(255, cdf(x) * 255 + 0.5)) where cdf is the normalised cumulative histogram.
Lut mapping_from_histogram(const ChannelHistogram& hist);

ColorMapping mapping_from_image(const RgbImage& image);

/// Entrywise floor(mean + 0.5), clamped to [0,255]. Integer arithmetic, so the
/// result does not depend on the order of `mappings`.
ColorMapping average_mapping(std::span<const ColorMapping> mappings);

/// Alternative to averaging per-image mappings: pool all histograms first.
ColorMapping pooled_mapping(std::span<const RgbImage> images);

RgbImage apply_mapping(const RgbImage& image, const ColorMapping& mapping);

/// Text format: three lines `R: v0,...,v255`, then G and B.
void save_mapping(const ColorMapping& mapping, const std::filesystem::path& path);
ColorMapping load_mapping(const std::filesystem::path& path);

std::string format_mapping(const ColorMapping& mapping);
ColorMapping parse_mapping(const std::string& text);

/// Aggregate normalised CDF of one channel over a set of images.
std::array<double, 256> aggregate_cdf(std::span<const RgbImage> images, Channel channel);

/// max_x |a(x) - b(x)|
double max_cdf_gap(const std::array<double, 256>& a, const std::array<double, 256>& b);

}  // namespace uavgeo::style
