#pragma once

#include <unordered_map>
#include <vector>

#include "uavgeo/layers.hpp"

namespace uavgeo::optim {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int step_epochs = 30;     ///< decay period
  double step_gamma = 0.5;  ///< multiplicative decay per period
};

/// lr * gamma^(floor(epoch / step_epochs)), epoch counted from 0.
double step_lr(const SgdOptions& options, int epoch);

/// SGD with classical momentum (v <- mu v + g + wd w; w <- w - lr v).
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}

  void step(const std::vector<nn::Parameter*>& params, double lr);
  const SgdOptions& options() const { return options_; }

 private:
  SgdOptions options_;
  std::unordered_map<const nn::Parameter*, Tensor> velocity_;
};

}  // namespace uavgeo::optim
