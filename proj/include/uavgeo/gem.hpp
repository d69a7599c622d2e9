#pragma once

// Generalized-mean pooling over a spatial region:
//   f_k = ( mean_{cells in region} max(x, eps)^p )^(1/p)
// p = 1 is average pooling, p -> inf tends to max pooling.

#include <vector>

#include "uavgeo/geometry.hpp"
#include "uavgeo/layers.hpp"
#include "uavgeo/tensor.hpp"

namespace uavgeo::nn {

inline constexpr double kGemEps = 1e-6;

/// Flat row-major cell indices of a spatial region.
using Region = std::vector<int>;

Region region_from_box(int height, int width, const geometry::RegionBox& box);
Region region_from_mask(const std::vector<bool>& mask);
Region full_region(int height, int width);

/// N x C x H x W -> N x C matrix.
Tensor gem_pool(const Tensor& fm, const Region& region, double p);

/// Gradient of sum(dy * gem_pool(fm)) with respect to fm. `pooled` is the forward output.
Tensor gem_pool_backward(const Tensor& fm, const Region& region, double p, const Tensor& pooled, const Tensor& dy);

/// d/dp of sum(dy * gem_pool(fm)).
double gem_pool_grad_p(const Tensor& fm, const Region& region, double p, const Tensor& pooled, const Tensor& dy);

/// GeM layer with an optionally trainable exponent.
class GemPool {
 public:
  GemPool(double p, bool learnable, std::string name);

  Tensor forward(const Tensor& fm, const Region& region);
  Tensor backward(const Tensor& dy);
  void collect(StateRefs& refs);

  double p() const { return p_.value[0]; }
  void clamp_p(double lo) {
    if (p_.value[0] < lo) p_.value[0] = lo;
  }

 private:
  Parameter p_;
  bool learnable_;
  Tensor input_, output_;
  Region region_;
};

}  // namespace uavgeo::nn
