#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "uavgeo/config.hpp"
#include "uavgeo/error.hpp"

namespace fs = std::filesystem;
using namespace uavgeo;
using namespace uavgeo::config;

namespace {

fs::path write_file(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("uavgeo_cfg_" + name);
  std::ofstream(p) << text;
  return p;
}

Sources no_env() {
  Sources s;
  s.use_environment = false;
  return s;
}

}  // namespace

TEST(RunConfig, DefaultsFollowTheTrainingRecipe) {
  const RunConfig c;
  EXPECT_EQ(c.optim.lr, 0.01);
  EXPECT_EQ(c.optim.momentum, 0.9);
  EXPECT_EQ(c.optim.weight_decay, 0.0005);
  EXPECT_EQ(c.optim.step_epochs, 30);
  EXPECT_EQ(c.optim.step_gamma, 0.5);
  EXPECT_EQ(c.epochs, 200);
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_EQ(c.loss.w_center, 0.0005);
  EXPECT_EQ(c.loss.w_ce, 1.0);
  EXPECT_EQ(c.loss.w_dc, 1.0);
  EXPECT_EQ(c.loss.lambda_dc, 0.2);
  EXPECT_EQ(c.model.gem_p, 3.0);
  EXPECT_EQ(c.model.partition_ratio, 0.5);
  EXPECT_EQ(c.model.input_size, 256);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, MapRoundTrip) {
  RunConfig c;
  c.set("model.hab_stages", "stage4");
  c.set("loss.aux", "triplet");
  c.set("optim.lr", "0.125");
  c.set("sas.pooled", "true");
  RunConfig d;
  for (const auto& [k, v] : c.to_map()) d.set(k, v);
  EXPECT_EQ(d.to_map(), c.to_map());
  EXPECT_EQ(d.aux, AuxLoss::Triplet);
  EXPECT_TRUE(d.sas_pooled);
}

TEST(RunConfig, UnknownAndMalformedKeys) {
  RunConfig c;
  EXPECT_THROW(c.set("optim.learning_rate", "0.1"), ConfigError);
  EXPECT_THROW(c.set("optim.lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("optim.epochs", "2.5"), ConfigError);
  EXPECT_THROW(c.set("model.descriptor", "raw"), ConfigError);
  EXPECT_THROW(c.set("model.hab_stages", "stage2"), ConfigError);
  EXPECT_THROW(c.set("loss.aux", "kl"), ConfigError);
  EXPECT_THROW(c.set("train.augment", "maybe"), ConfigError);
}

TEST(RunConfig, NegativeLearningRateFailsValidation) {
  RunConfig c;
  c.set("optim.lr", "-0.01");
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  EXPECT_THROW(c.set("partition.ratio", "1.5"), ConfigError);
  c = RunConfig{};
  c.set("loss.w_dc", "-1");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ParseKv, CommentsBlanksAndErrors) {
  const auto kv = parse_kv("# comment\n\nseed = 5   # trailing\n optim.lr=0.2\n");
  EXPECT_EQ(kv.at("seed"), "5");
  EXPECT_EQ(kv.at("optim.lr"), "0.2");
  try {
    parse_kv("seed = 1\nnot a pair\n", "x.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_kv("seed=1\nseed=2\n"), ParseError);
}

TEST(Resolve, PrecedenceIsPresetFileEnvironmentOverrides) {
  const auto file = write_file("prec.cfg", "optim.epochs = 7\noptim.lr = 0.3\nloss.w_dc = 0.5\n");
  Sources s = no_env();
  s.preset = "toy";
  EXPECT_EQ(resolve(s).epochs, 40);
  EXPECT_EQ(resolve(s).model.num_classes, 20);

  s.file = file;
  auto c = resolve(s);
  EXPECT_EQ(c.epochs, 7);
  EXPECT_EQ(c.model.input_size, 64);

  s.use_environment = true;
  ::setenv("UAVGEO_OPTIM__LR", "0.05", 1);
  c = resolve(s);
  EXPECT_EQ(c.optim.lr, 0.05);

  s.overrides = {"optim.lr=0.07"};
  s.seed = 99;
  c = resolve(s);
  EXPECT_EQ(c.optim.lr, 0.07);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.loss.w_dc, 0.5);
  ::unsetenv("UAVGEO_OPTIM__LR");
}

TEST(Resolve, MisspeltEnvironmentOverrideIsRejected) {
  ::setenv("UAVGEO_OPTIM__LRATE", "1", 1);
  Sources s;
  EXPECT_THROW(resolve(s), ConfigError);
  ::unsetenv("UAVGEO_OPTIM__LRATE");
}

TEST(Resolve, BadSourcesAreConfigErrors) {
  Sources s = no_env();
  s.preset = "huge";
  EXPECT_THROW(resolve(s), ConfigError);
  s = no_env();
  s.file = write_file("bad.cfg", "optim.lr\n");
  EXPECT_THROW(resolve(s), ConfigError);
  s = no_env();
  s.overrides = {"optim.lr"};
  EXPECT_THROW(resolve(s), ConfigError);
  s = no_env();
  s.file = fs::temp_directory_path() / "uavgeo_cfg_does_not_exist";
  EXPECT_THROW(resolve(s), ConfigError);
}

TEST(EnvName, DotsBecomeDoubleUnderscores) {
  EXPECT_EQ(env_name("model.gem_p"), "UAVGEO_MODEL__GEM_P");
  EXPECT_EQ(env_name("seed"), "UAVGEO_SEED");
}

TEST(KnownKeys, CoverTheModuleKeys) {
  const auto keys = known_keys();
  for (const char* k : {"partition.ratio", "model.gem_p", "model.hab_stages", "model.input_size", "model.descriptor", "loss.w_center",
                        "loss.w_ce", "loss.w_dc", "loss.lambda_dc", "loss.aux", "optim.lr", "optim.momentum", "optim.weight_decay",
                        "data.root", "seed", "sas.pooled"}) {
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
  }
}
