#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vadet/config.hpp"

using namespace vadet;
using namespace vadet::config;

TEST(Config, DefaultsRoundTrip) {
  RunConfig c = from_json(json::object());
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.cluster.alpha, 1.0);
  RunConfig back = from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(from_json({{"sed", 1}}), ConfigError);
  EXPECT_THROW(from_json({{"train", {{"pretrain", {{"epoch", 3}}}}}}), ConfigError);
  EXPECT_THROW(from_json({{"cluster", {{"dec", {{"lr2", 0.1}}}}}}), ConfigError);
  EXPECT_THROW(from_json({{"model", {{"hiden", 8}}}}), ConfigError);
  EXPECT_THROW(from_json({{"eval", {{"probe", {{"seed", 3}}}}}}), ConfigError);
}

TEST(Config, WrongTypesAndBadValuesRejected) {
  EXPECT_THROW(from_json({{"train", {{"pretrain", {{"epochs", "three"}}}}}}), ConfigError);
  EXPECT_THROW(from_json({{"cluster", {{"latent", "z_q"}}}}), ConfigError);
  EXPECT_THROW(from_json({{"cluster", {{"centroid_population", "all"}}}}), ConfigError);
  EXPECT_THROW(from_json({{"data", {{"test_fraction", 1.0}}}}), ConfigError);
  EXPECT_THROW(from_json({{"train", {{"combine", "vote"}}}}), ConfigError);
  EXPECT_THROW(from_json({{"train", {{"finetune", {{"folds", 1}}}}}}), ConfigError);
}

TEST(Config, SeedPropagatesAndSynthSeedIsNotAKey) {
  RunConfig c = from_json({{"seed", 17}});
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.synth.seed, 17u);
  EXPECT_EQ(c.eval.probe.seed, 17u);
  EXPECT_THROW(from_json({{"synth", {{"seed", 3}}}}), ConfigError);
}

TEST(Config, DottedOverrides) {
  json doc = json::object();
  apply_override(doc, "train.finetune.lr=1e-4");
  apply_override(doc, "cluster.latent=z_s");
  apply_override(doc, "train.ablation.no_pretrain=true");
  apply_override(doc, "seed=9");
  RunConfig c = from_json(doc);
  EXPECT_DOUBLE_EQ(c.train.finetune.lr, 1e-4);
  EXPECT_EQ(c.cluster.latent, "z_s");
  EXPECT_TRUE(c.train.ablation.no_pretrain);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "seed.x=1"), ConfigError);
}

TEST(Config, LoadFileWithOverrides) {
  const auto path = std::filesystem::temp_directory_path() / "vadet_config_test.json";
  {
    std::ofstream f(path);
    f << R"({"seed": 2, "train": {"pretrain": {"epochs": 4}}})";
  }
  RunConfig c = load(path.string(), {"train.pretrain.epochs=6"});
  EXPECT_EQ(c.seed, 2u);
  EXPECT_EQ(c.train.pretrain.epochs, 6);
  {
    std::ofstream f(path);
    f << "{ not json";
  }
  EXPECT_THROW(load(path.string()), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load(path.string()), ConfigError);
  EXPECT_EQ(load("").seed, 0u);
}
