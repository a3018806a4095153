#include <gtest/gtest.h>

#include <fstream>

#include "tempdir.hpp"
#include "tfnet/config.hpp"
#include "tfnet/error.hpp"

using namespace tfnet;
using nlohmann::json;

TEST(Config, DefaultsMatchTrainingRecipe) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.train.batch_size, 12u);
  EXPECT_EQ(c.train.momentum, 0.9);
  EXPECT_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.train.halving_interval, 10000u);
  EXPECT_EQ(c.train.epochs, 25u);
  EXPECT_EQ(c.input.depth, 16u);
  EXPECT_EQ(c.eval.iou, 0.5);
  EXPECT_EQ(c.loss.coord, 5.0);
  EXPECT_EQ(c.loss.noobj, 0.5);
  EXPECT_EQ(c.model.anchors.size(), 5u);
}

TEST(Config, UnknownKeysAreRejected) {
  try {
    parse_config(json{{"train", {{"learning_rate", 0.1}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rate"), std::string::npos);
  }
  EXPECT_THROW(parse_config(json{{"bogus", 1}}), ConfigError);
}

TEST(Config, TypeMismatchesAreRejected) {
  EXPECT_THROW(parse_config(json{{"train", {{"lr", "fast"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"train", {{"batch_size", -3}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"model", {{"scale", "huge"}}}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"input", {{"frame_size", 64}, {"keyframe_size", 100}}}}), ConfigError);
}

TEST(Config, OverridesWin) {
  json doc = json::object();
  apply_override(doc, "train.lr=0.01");
  apply_override(doc, "model.temporal_pool=max");
  apply_override(doc, "train.augment=false");
  const RunConfig c = parse_config(doc);
  EXPECT_EQ(c.train.lr, 0.01);
  EXPECT_EQ(c.model.temporal_pool, "max");
  EXPECT_FALSE(c.train.augment);
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
}

TEST(Config, FileThenOverrides) {
  TempDir dir("config");
  {
    std::ofstream out(dir / "c.json");
    out << R"({"train": {"lr": 0.5, "seed": 3}, "input": {"frame_size": 64, "keyframe_size": 128}})";
  }
  const RunConfig c = load_config(dir / "c.json", {"train.lr=0.25"});
  EXPECT_EQ(c.train.lr, 0.25);
  EXPECT_EQ(c.train.seed, 3u);
  EXPECT_EQ(c.input.frame_size, 64u);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  json doc = json::object();
  apply_override(doc, "model.lambda=0.25");
  apply_override(doc, "eval.conf_threshold=0.1");
  const RunConfig c = parse_config(doc);
  EXPECT_EQ(to_json(parse_config(to_json(c))), to_json(c));
  EXPECT_EQ(to_json(parse_config(json::object())), default_config_json());
}
