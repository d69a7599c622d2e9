#include "uavgeo/plot.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>

namespace uavgeo::plot {

namespace {

void put(RgbImage& img, int x, int y, const std::array<std::uint8_t, 3>& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
}

void line(RgbImage& img, int x0, int y0, int x1, int y1, const std::array<std::uint8_t, 3>& c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

std::pair<int, int> plot_point(const PlotLayout& layout, int level, int value) {
  const int span = 255 * layout.scale;
  return {layout.margin + level * layout.scale, layout.margin + span - value * layout.scale};
}

RgbImage plot_mapping(const style::ColorMapping& mapping, const PlotLayout& layout) {
  const int span = 255 * layout.scale;
  const int side = span + 2 * layout.margin + 1;
  RgbImage img(side, side, 255);

  const std::array<std::uint8_t, 3> grid{225, 225, 225}, frame{110, 110, 110};
  for (int q = 1; q < 4; ++q) {
    const int level = q * 255 / 4;
    auto [gx, gy0] = plot_point(layout, level, 0);
    auto [gx1, gy1] = plot_point(layout, level, 255);
    line(img, gx, gy0, gx1, gy1, grid);
    auto [hx0, hy] = plot_point(layout, 0, level);
    auto [hx1, hy1] = plot_point(layout, 255, level);
    line(img, hx0, hy, hx1, hy1, grid);
  }
  auto [x0, y0] = plot_point(layout, 0, 255);
  auto [x1, y1] = plot_point(layout, 255, 0);
  line(img, x0, y0, x1, y0, frame);
  line(img, x0, y1, x1, y1, frame);
  line(img, x0, y0, x0, y1, frame);
  line(img, x1, y0, x1, y1, frame);

  const std::array<std::array<std::uint8_t, 3>, 3> colors{{{220, 30, 30}, {30, 160, 30}, {30, 60, 220}}};
  for (int ch = 0; ch < 3; ++ch) {
    const auto& lut = mapping.channel(static_cast<Channel>(ch));
    for (int v = 0; v < 255; ++v) {
      auto [ax, ay] = plot_point(layout, v, lut[v]);
      auto [bx, by] = plot_point(layout, v + 1, lut[v + 1]);
      line(img, ax, ay, bx, by, colors[ch]);
    }
  }
  return img;
}

}  // namespace uavgeo::plot
