// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "support/temp_dir.hpp"
#include "unirender/config.hpp"

namespace unirender {
namespace {

using nlohmann::json;

std::string ErrorOf(const json& j) {
  try {
    ParseRunConfig(j);
  } catch (const UsageError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, EmptyDocumentGivesDefaults) {
  const RunConfig rc = ParseRunConfig(json::object());
  EXPECT_EQ(rc.data.num_objects, 64);
  EXPECT_EQ(rc.data.grid_step, 0.1);
  EXPECT_EQ(rc.train.steps, 20000);
  EXPECT_EQ(rc.train.batch_size, 32);
  EXPECT_EQ(rc.train.learning_rate, 2e-4);
  EXPECT_EQ(rc.train.p_dir, 0.5);
  EXPECT_EQ(rc.train.p_t, 0.9);
  EXPECT_EQ(rc.train.lambda_cycle, 0.1);
  EXPECT_FALSE(rc.train.cycle_detach);
  EXPECT_EQ(rc.train.schedule.T, 200);
  EXPECT_EQ(rc.arch.base_width, 32);
  EXPECT_EQ(rc.arch.image_size, 32);
  EXPECT_EQ(rc.eval.options.sampler_steps, 50);
  EXPECT_EQ(rc.eval.split, Split::kHeldout);
}

TEST(RunConfig, ReadsEverySection) {
  const RunConfig rc = ParseRunConfig(json::parse(R"({
    "data": {"image_size": 16, "num_heldout": 12, "output_dir": "out", "previews": true},
    "train": {"selector": "algorithm1", "cycle_detach": true, "schedule": {"T": 50, "beta_max": 0.05}},
    "arch": {"base_width": 8, "levels": 1},
    "eval": {"split": "train", "per_object": 3}
  })"));
  EXPECT_EQ(rc.data.image_size, 16);
  EXPECT_EQ(rc.arch.image_size, 16);
  EXPECT_EQ(rc.data.output_dir, "out");
  EXPECT_TRUE(rc.data.previews);
  EXPECT_EQ(rc.train.selector, SelectorMode::kAlgorithm1);
  EXPECT_TRUE(rc.train.cycle_detach);
  EXPECT_EQ(rc.train.schedule.T, 50);
  EXPECT_EQ(rc.train.schedule.beta_max, 0.05);
  EXPECT_EQ(rc.arch.max_timestep, 50);
  EXPECT_EQ(rc.arch.levels, 1);
  EXPECT_EQ(rc.eval.split, Split::kTrain);
  EXPECT_EQ(rc.eval.options.per_object, 3);
}

TEST(RunConfig, UnknownKeysAreNamed) {
  EXPECT_NE(ErrorOf(json::parse(R"({"train": {"stpes": 1}})")).find("train.stpes"), std::string::npos);
  EXPECT_NE(ErrorOf(json::parse(R"({"train": {"schedule": {"beta": 1}}})")).find("train.schedule.beta"), std::string::npos);
  EXPECT_NE(ErrorOf(json::parse(R"({"model": {}})")).find("model"), std::string::npos);
}

TEST(RunConfig, RejectsBadValues) {
  EXPECT_FALSE(ErrorOf(json::parse(R"({"train": {"selector": "random"}})")).empty());
  EXPECT_FALSE(ErrorOf(json::parse(R"({"eval": {"split": "test"}})")).empty());
  EXPECT_FALSE(ErrorOf(json::parse(R"({"data": {"image_size": 16}, "arch": {"image_size": 32}})")).empty());
  EXPECT_FALSE(ErrorOf(json::parse(R"({"data": {"num_heldout": 3}})")).empty());
  EXPECT_FALSE(ErrorOf(json::parse(R"({"train": {"schedule": {"beta_min": 0.5, "beta_max": 0.1}}})")).empty());
  EXPECT_FALSE(ErrorOf(json::parse(R"({"eval": {"sampler_steps": 0}})")).empty());
  EXPECT_FALSE(ErrorOf(json::parse(R"({"train": {"steps": "many"}})")).empty());
}

TEST(RunConfig, LoadsFromFile) {
  testing::TempDir dir("config");
  std::ofstream(dir.path() / "ok.json") << R"({"train": {"steps": 7}})";
  EXPECT_EQ(LoadRunConfig(dir.path() / "ok.json").train.steps, 7);
  std::ofstream(dir.path() / "broken.json") << "{ not json";
  EXPECT_THROW(LoadRunConfig(dir.path() / "broken.json"), UsageError);
  EXPECT_THROW(LoadRunConfig(dir.path() / "missing.json"), UsageError);
}

TEST(RunConfig, ShippedConfigsParse) {
  for (const char* name : {"acceptance.json", "tiny.json"}) {
    EXPECT_NO_THROW(LoadRunConfig(std::filesystem::path(UNIRENDER_SOURCE_DIR) / "configs" / name)) << name;
  }
}

}  // namespace
}  // namespace unirender
