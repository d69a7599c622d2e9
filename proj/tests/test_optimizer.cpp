#include <gtest/gtest.h>

#include "uavgeo/optimizer.hpp"

using namespace uavgeo;
using namespace uavgeo::optim;

TEST(StepLr, HalvesEveryThirtyEpochs) {
  SgdOptions o;
  EXPECT_EQ(step_lr(o, 0), 0.01);
  EXPECT_EQ(step_lr(o, 29), 0.01);
  EXPECT_EQ(step_lr(o, 30), 0.005);
  EXPECT_EQ(step_lr(o, 60), 0.0025);
  EXPECT_EQ(step_lr(o, 199), 0.01 * 0.5 * 0.5 * 0.5 * 0.5 * 0.5 * 0.5);
}

TEST(Sgd, MomentumAndDecayByHand) {
  nn::Parameter w{"w", Tensor::matrix(1, 1, 2.0), Tensor::matrix(1, 1, 0.5), true};
  nn::Parameter b{"b", Tensor::matrix(1, 1, 2.0), Tensor::matrix(1, 1, 0.5), false};
  Sgd sgd({0.1, 0.9, 0.01, 30, 0.5});
  sgd.step({&w, &b}, 0.1);
  // v = 0.5 + 0.01 * 2 = 0.52
  EXPECT_NEAR(w.value[0], 2.0 - 0.1 * 0.52, 1e-15);
  EXPECT_NEAR(b.value[0], 2.0 - 0.1 * 0.5, 1e-15);
  const double w1 = w.value[0];
  sgd.step({&w, &b}, 0.1);
  const double v2 = 0.9 * 0.52 + 0.5 + 0.01 * w1;
  EXPECT_NEAR(w.value[0], w1 - 0.1 * v2, 1e-15);
  EXPECT_NEAR(b.value[0], 1.95 - 0.1 * (0.9 * 0.5 + 0.5), 1e-15);
}
