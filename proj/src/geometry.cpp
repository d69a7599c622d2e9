#include "uavgeo/geometry.hpp"

#include <cmath>
#include <string>

#include "uavgeo/error.hpp"

namespace uavgeo::geometry {

void PartitionSpec::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("partition.ratio must lie in (0,1), got " + std::to_string(ratio));
}

namespace {

void place(int dim, double ratio, int& start, int& end) {
  const int side = static_cast<int>(std::lround(ratio * dim));
  if (side < 1) throw Error("center too small");
  const int margin = dim - side;
  start = margin - margin / 2;
  end = start + side;
}

}  // namespace

RegionBox center_box(int height, int width, const PartitionSpec& spec) {
  spec.validate();
  if (height < 1 || width < 1) throw Error("empty feature map");
  RegionBox box;
  place(height, spec.ratio, box.row_start, box.row_end);
  place(width, spec.ratio, box.col_start, box.col_end);
  return box;
}

std::vector<bool> surround_mask(int height, int width, const RegionBox& box) {
  std::vector<bool> mask(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) mask[static_cast<std::size_t>(r) * width + c] = !box.contains(r, c);
  }
  return mask;
}

CenterSurround split_center_surround(const Tensor& fm, const PartitionSpec& spec) {
  CenterSurround out;
  out.box = center_box(fm.h(), fm.w(), spec);
  out.surround = surround_mask(fm.h(), fm.w(), out.box);
  out.center = Tensor(fm.n(), fm.c(), out.box.rows(), out.box.cols());
  for (int n = 0; n < fm.n(); ++n) {
    for (int c = 0; c < fm.c(); ++c) {
      for (int r = 0; r < out.box.rows(); ++r) {
        for (int k = 0; k < out.box.cols(); ++k) {
          out.center(n, c, r, k) = fm(n, c, out.box.row_start + r, out.box.col_start + k);
        }
      }
    }
  }
  return out;
}

}  // namespace uavgeo::geometry
