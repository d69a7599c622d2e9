#pragma once

#include <random>
#include <string>
#include <vector>

#include "uavgeo/geometry.hpp"
#include "uavgeo/layers.hpp"

namespace uavgeo::nn {

/// Hierarchical attention block.
///
/// Two single-channel maps are stacked: the channel mean at every cell of the
/// whole map, and the channel max restricted to the centre box (zero outside
/// it). A 5x5 convolution, batch norm and a sigmoid turn them into a spatial
/// gate A in (0,1)^{HxW}; the output is the input scaled by A, broadcast over
/// channels, so shape is preserved.
class Hab {
 public:
  Hab(geometry::PartitionSpec spec, std::string name);

  /// Small random conv weights; BN scale starts low so the initial gate is ~0.5.
  void init(std::mt19937_64& rng);

  Tensor forward(const Tensor& fm, Mode mode);
  Tensor backward(const Tensor& dy);
  void collect(StateRefs& refs);

  /// N x 1 x H x W gate from the last forward call.
  const Tensor& attention() const { return attention_; }
  /// N x 2 x H x W stacked (mean, padded centre max) input of the fusion conv.
  const Tensor& stacked() const { return stacked_; }

  Conv2d& conv() { return conv_; }
  BatchNorm& bn() { return bn_; }
  const geometry::PartitionSpec& spec() const { return spec_; }

 private:
  geometry::PartitionSpec spec_;
  Conv2d conv_;
  BatchNorm bn_;
  Tensor input_, stacked_, attention_;
  geometry::RegionBox box_;
  std::vector<int> argmax_;  // per (n, cell in box): channel holding the max
};

}  // namespace uavgeo::nn
