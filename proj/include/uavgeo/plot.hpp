#pragma once

#include "uavgeo/image.hpp"
#include "uavgeo/style_align.hpp"

namespace uavgeo::plot {

struct PlotLayout {
  int margin = 24;
  int scale = 2;  ///< pixels per input level
};

/// Output level against input level for the R, G and B tables, drawn in their
/// own colours on a white canvas with a grey frame and quarter grid.
RgbImage plot_mapping(const style::ColorMapping& mapping, const PlotLayout& layout = {});

/// Canvas position of the point (level, value); used by tests to probe the curves.
std::pair<int, int> plot_point(const PlotLayout& layout, int level, int value);

}  // namespace uavgeo::plot
