#pragma once

// Dual square-ring partition: a centred box plus the ring around it.

#include <vector>

#include "uavgeo/tensor.hpp"

namespace uavgeo::geometry {

/// Centre side length as a fraction of the map side, 0 < ratio < 1.
struct PartitionSpec {
  double ratio = 0.5;

  void validate() const;
};

/// Half-open cell box [row_start,row_end) x [col_start,col_end).
struct RegionBox {
  int row_start = 0;
  int row_end = 0;
  int col_start = 0;
  int col_end = 0;

  int rows() const { return row_end - row_start; }
  int cols() const { return col_end - col_start; }
  int area() const { return rows() * cols(); }
  bool contains(int r, int c) const { return r >= row_start && r < row_end && c >= col_start && c < col_end; }
  bool operator==(const RegionBox&) const = default;
};

/// Sides are round(ratio * dim). When the leftover margin is odd, the box sits one
/// cell towards the bottom/right, e.g. a 1x1 centre of a 2x2 grid is cell (1,1).
RegionBox center_box(int height, int width, const PartitionSpec& spec);

/// Row-major H*W mask, true outside the centre box.
std::vector<bool> surround_mask(int height, int width, const RegionBox& box);

struct CenterSurround {
  Tensor center;              ///< N x C x box.rows() x box.cols()
  std::vector<bool> surround; ///< H*W, row-major
  RegionBox box;
};

CenterSurround split_center_surround(const Tensor& fm, const PartitionSpec& spec);

}  // namespace uavgeo::geometry
