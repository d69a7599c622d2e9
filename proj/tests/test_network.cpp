#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "support/testing.hpp"
#include "uavgeo/error.hpp"
#include "uavgeo/network.hpp"
#include "uavgeo/optimizer.hpp"

using namespace uavgeo;
using namespace uavgeo::net;

namespace {

ModelConfig tiny_config(int classes = 5) {
  ModelConfig c;
  c.num_classes = classes;
  c.input_size = 32;
  c.base_width = 2;
  c.blocks = {1, 1, 1, 1};
  c.init_seed = 3;
  return c;
}

Tensor random_images(std::mt19937_64& rng, int n, int size) { return fixtures::random_tensor(rng, n, 3, size, size, -2.0, 2.0); }

}  // namespace

TEST(Backbone, FullWidth256GivesSixteenBySixteen) {
  ModelConfig c;
  c.num_classes = 10;
  Model model(c);
  std::mt19937_64 rng(1);
  const auto out = model.forward(random_images(rng, 1, 256), nn::Mode::Eval);
  EXPECT_EQ(out.feature_map.c(), 2048);
  EXPECT_EQ(out.feature_map.h(), 16);
  EXPECT_EQ(out.feature_map.w(), 16);
  EXPECT_EQ(out.center.c(), 2048);
  EXPECT_EQ(out.surround.c(), 2048);
  EXPECT_EQ(out.joint.c(), 4096);
  EXPECT_EQ(out.joint_bn.c(), 4096);
  EXPECT_EQ(out.compressed.c(), 2048);
  EXPECT_EQ(out.logits.c(), 10);
}

TEST(Backbone, FullWidth512GivesThirtyTwoByThirtyTwo) {
  ModelConfig c;
  c.num_classes = 10;
  c.input_size = 512;
  Model model(c);
  std::mt19937_64 rng(2);
  const auto fm = model.backbone_forward(random_images(rng, 1, 512), nn::Mode::Eval);
  EXPECT_EQ(fm.c(), 2048);
  EXPECT_EQ(fm.h(), 32);
  EXPECT_EQ(fm.w(), 32);
}

TEST(Backbone, DownsamplesBySixteenForEverySize) {
  Model model(tiny_config());
  std::mt19937_64 rng(3);
  for (int s : {32, 48, 64, 96}) {
    const auto fm = model.backbone_forward(random_images(rng, 1, s), nn::Mode::Eval);
    EXPECT_EQ(fm.h(), s / 16);
    EXPECT_EQ(fm.w(), s / 16);
  }
}

TEST(Backbone, RejectsWrongChannelCount) {
  Model model(tiny_config());
  EXPECT_THROW(model.backbone_forward(Tensor(1, 4, 32, 32), nn::Mode::Eval), Error);
}

TEST(Backbone, EvalModeIsDeterministic) {
  Model model(tiny_config());
  std::mt19937_64 rng(4);
  const auto x = random_images(rng, 2, 32);
  const auto a = model.forward(x, nn::Mode::Eval);
  const auto b = model.forward(x, nn::Mode::Eval);
  for (std::size_t i = 0; i < a.joint_bn.size(); ++i) EXPECT_EQ(a.joint_bn[i], b.joint_bn[i]);
  Model twin(tiny_config());
  const auto c = twin.forward(x, nn::Mode::Eval);
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_EQ(a.logits[i], c.logits[i]);
}

TEST(Model, AttentionBlocksFollowConfig) {
  auto c = tiny_config();
  Model a(c);
  EXPECT_NE(a.hab(Stage::Stage3), nullptr);
  EXPECT_EQ(a.hab(Stage::Stage4), nullptr);
  EXPECT_NE(a.hab(Stage::Stage5), nullptr);
  c.hab_stages = {Stage::Stage4};
  Model b(c);
  EXPECT_EQ(b.hab(Stage::Stage3), nullptr);
  EXPECT_NE(b.hab(Stage::Stage4), nullptr);
}

TEST(Model, JointIsCentreThenSurround) {
  Model model(tiny_config());
  std::mt19937_64 rng(5);
  const auto out = model.forward(random_images(rng, 2, 64), nn::Mode::Eval);
  const int C = out.center.c();
  for (int n = 0; n < 2; ++n) {
    for (int k = 0; k < C; ++k) {
      EXPECT_EQ(out.joint(n, k, 0, 0), out.center(n, k, 0, 0));
      EXPECT_EQ(out.joint(n, C + k, 0, 0), out.surround(n, k, 0, 0));
    }
  }
}

TEST(Model, EmbedProducesConsistentDescriptor) {
  Model model(tiny_config());
  std::mt19937_64 rng(6);
  const auto img = fixtures::random_image(rng, 40, 40);
  const auto d = model.embed(img);
  const int C = model.config().feature_channels();
  EXPECT_EQ(d.center_vec.size(), static_cast<std::size_t>(C));
  EXPECT_EQ(d.surround_vec.size(), static_cast<std::size_t>(C));
  EXPECT_EQ(d.joint.size(), static_cast<std::size_t>(2 * C));
  EXPECT_EQ(d.compressed.size(), static_cast<std::size_t>(C));
  for (int k = 0; k < C; ++k) EXPECT_EQ(d.joint[k], d.center_vec[k]);
  const auto batch = model.embed_batch({img, img});
  for (std::size_t k = 0; k < d.joint_bn.size(); ++k) EXPECT_NEAR(batch[1].joint_bn[k], d.joint_bn[k], 1e-12);
}

TEST(Classify, ZeroHeadGivesZeroLogits) {
  Model model(tiny_config(4));
  model.classifier().weight().value.fill(0.0);
  model.classifier().bias().value.fill(0.0);
  std::mt19937_64 rng(7);
  const auto logits = model.classify(fixtures::random_tensor(rng, 3, model.config().feature_channels(), 1, 1));
  for (double v : logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Classify, IdentityHeadPicksTheHotIndex) {
  auto c = tiny_config(64);
  Model model(c);
  const int C = c.feature_channels();
  ASSERT_EQ(C, 64);
  auto& w = model.classifier().weight().value;
  w.fill(0.0);
  for (int i = 0; i < C; ++i) w[i * C + i] = 1.0;
  model.classifier().bias().value.fill(0.0);
  Tensor x = Tensor::matrix(1, C);
  x[17] = 1.0;
  const auto logits = model.classify(x);
  EXPECT_EQ(std::max_element(logits.values().begin(), logits.values().end()) - logits.values().begin(), 17);
}

TEST(Classify, MatchesDenseProductAndChecksDimensions) {
  Model model(tiny_config(6));
  const int C = model.config().feature_channels();
  std::mt19937_64 rng(8);
  const auto x = fixtures::random_tensor(rng, 2, C, 1, 1);
  const auto logits = model.classify(x);
  const auto& w = model.classifier().weight().value;
  const auto& b = model.classifier().bias().value;
  for (int n = 0; n < 2; ++n) {
    for (int k = 0; k < 6; ++k) {
      double s = b[k];
      for (int i = 0; i < C; ++i) s += w[k * C + i] * x(n, i, 0, 0);
      EXPECT_NEAR(logits(n, k, 0, 0), s, 1e-12);
    }
  }
  EXPECT_THROW(model.classify(Tensor::matrix(2, C + 1)), Error);
}

TEST(SharedForward, SameImageGivesSameDescriptorInBothViews) {
  Model model(tiny_config());
  std::mt19937_64 rng(9);
  const auto x = random_images(rng, 3, 32);
  for (nn::Mode mode : {nn::Mode::Train, nn::Mode::Eval}) {
    const auto out = shared_forward(model, x, x, mode);
    for (std::size_t i = 0; i < out.drone.joint_bn.size(); ++i) EXPECT_NEAR(out.drone.joint_bn[i], out.satellite.joint_bn[i], 1e-12);
  }
}

TEST(SharedForward, BatchOfThirtyTwoPerView) {
  Model model(tiny_config(7));
  std::mt19937_64 rng(10);
  const auto out = shared_forward(model, random_images(rng, 32, 32), random_images(rng, 32, 32), nn::Mode::Train);
  EXPECT_EQ(out.drone.logits.n(), 32);
  EXPECT_EQ(out.drone.logits.c(), 7);
  EXPECT_EQ(out.satellite.logits.n(), 32);
  EXPECT_EQ(out.satellite.logits.c(), 7);
}

TEST(SharedForward, EitherViewUpdatesTheSameWeights) {
  Model model(tiny_config());
  std::mt19937_64 rng(11);
  const auto drone = random_images(rng, 2, 32), sat = random_images(rng, 2, 32);
  auto* stem = model.parameters().front();
  for (int view = 0; view < 2; ++view) {
    model.zero_grad();
    model.forward(Tensor::concat_batch(drone, sat), nn::Mode::Train);
    Tensor d_logits = Tensor::matrix(4, 5);
    for (int n = 2 * view; n < 2 * view + 2; ++n) d_logits(n, 1, 0, 0) = 1.0;
    model.backward({}, d_logits);
    double norm = 0;
    for (double g : stem->grad.values()) norm += g * g;
    EXPECT_GT(norm, 0.0) << "view " << view;
  }
  const Tensor before = stem->value;
  optim::Sgd sgd({});
  sgd.step(model.parameters(), 0.1);
  double moved = 0;
  for (std::size_t i = 0; i < before.size(); ++i) moved += std::abs(stem->value[i] - before[i]);
  EXPECT_GT(moved, 0.0);
}

TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  auto c = tiny_config(4);
  c.gem_learnable = true;
  Model model(c);
  std::mt19937_64 rng(12);
  const auto x = random_images(rng, 3, 32);
  const auto r1 = fixtures::random_tensor(rng, 3, 2 * c.feature_channels(), 1, 1);
  const auto r2 = fixtures::random_tensor(rng, 3, 4, 1, 1);
  auto loss = [&] {
    const auto out = model.forward(x, nn::Mode::Train);
    return fixtures::dot(r1, out.joint_bn) + fixtures::dot(r2, out.logits);
  };
  model.zero_grad();
  model.forward(x, nn::Mode::Train);
  model.backward(r1, r2);
  for (auto* p : model.parameters()) {
    const Tensor analytic = p->grad;
    const auto cmp = fixtures::check_gradient(p->value, analytic, loss, rng, 6);
    EXPECT_LE(cmp.relative(), 1e-4) << p->name << " " << cmp.max_diff << " " << cmp.scale;
  }
}

TEST(ModelConfig, MapRoundTripAndValidation) {
  auto c = tiny_config();
  c.hab_stages = {Stage::Stage4, Stage::Stage5};
  c.descriptor = DescriptorKind::Compressed;
  const auto back = ModelConfig::from_map(c.to_map());
  EXPECT_EQ(back.to_map(), c.to_map());

  auto bad = tiny_config();
  bad.gem_p = 0.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config();
  bad.input_size = 40;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(descriptor_kind_from_string("joint_bn"), DescriptorKind::JointBn);
  EXPECT_THROW(descriptor_kind_from_string("pooled"), ConfigError);
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
  Model model(tiny_config());
  std::mt19937_64 rng(13);
  // Move the running statistics away from their initial values.
  model.forward(random_images(rng, 4, 32), nn::Mode::Train);
  const auto x = random_images(rng, 2, 32);
  const auto before = model.forward(x, nn::Mode::Eval);
  const auto dir = std::filesystem::temp_directory_path() / "uavgeo_ckpt_test";
  std::filesystem::create_directories(dir);
  Tensor centers = fixtures::random_tensor(rng, 5, 8, 1, 1);
  save_checkpoint(model, dir / "m.ckpt", {{"centers", centers}});

  auto loaded = load_checkpoint(dir / "m.ckpt");
  const auto after = loaded.model.forward(x, nn::Mode::Eval);
  for (std::size_t i = 0; i < before.logits.size(); ++i) EXPECT_EQ(before.logits[i], after.logits[i]);
  ASSERT_TRUE(loaded.extras.contains("centers"));
  for (std::size_t i = 0; i < centers.size(); ++i) EXPECT_EQ(loaded.extras["centers"][i], centers[i]);

  auto other = tiny_config();
  other.gem_p = 4.0;
  try {
    load_checkpoint(dir / "m.ckpt", &other);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("checkpoint/config mismatch"), std::string::npos);
  }
  other = tiny_config(9);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", &other), ConfigError);
}

TEST(Checkpoint, GarbageFileIsRejected) {
  const auto path = std::filesystem::temp_directory_path() / "uavgeo_not_a_ckpt";
  std::ofstream(path) << "hello";
  EXPECT_THROW(load_checkpoint(path), Error);
}
