// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "support/temp_dir.hpp"
#include "unirender/sample_io.hpp"
#include "unirender/scene_gen.hpp"

namespace unirender {
namespace {

namespace fs = std::filesystem;

TEST(SampleScene, Deterministic) {
  const SceneSpec a = SampleScene(11, 22, 0.3, 0.7);
  const SceneSpec b = SampleScene(11, 22, 0.3, 0.7);
  EXPECT_EQ(RenderScene(a), RenderScene(b));
  ASSERT_EQ(a.spheres().size(), b.spheres().size());
  for (size_t i = 0; i < a.spheres().size(); ++i) EXPECT_EQ(a.spheres()[i].center, b.spheres()[i].center);
}

TEST(SampleScene, ObjectSeedScopesGeometryAndAlbedo) {
  const SceneSpec a = SampleScene(11, 22, 0.0, 0.1);
  const SceneSpec b = SampleScene(11, 33, 1.0, 0.9);
  ASSERT_EQ(a.spheres().size(), b.spheres().size());
  for (size_t i = 0; i < a.spheres().size(); ++i) {
    EXPECT_EQ(a.spheres()[i].center, b.spheres()[i].center);
    EXPECT_EQ(a.spheres()[i].radius, b.spheres()[i].radius);
    EXPECT_EQ(a.spheres()[i].material.albedo(), b.spheres()[i].material.albedo());
  }
  EXPECT_EQ(b.spheres()[0].material.metallic(), 1.0);
  EXPECT_EQ(b.spheres()[0].material.roughness(), 0.9);
  EXPECT_NE(a.lights()[0].direction, b.lights()[0].direction);
}

TEST(SampleScene, LightSeedScopesLights) {
  const SceneSpec a = SampleScene(11, 22, 0.0, 0.1);
  const SceneSpec b = SampleScene(99, 22, 0.5, 0.5);
  ASSERT_EQ(a.lights().size(), b.lights().size());
  for (size_t i = 0; i < a.lights().size(); ++i) EXPECT_EQ(a.lights()[i].direction, b.lights()[i].direction);
  EXPECT_EQ(a.ambient(), b.ambient());
}

TEST(SampleScene, AlbedoRange) {
  for (uint64_t s = 0; s < 10000; ++s) {
    const Rgb a = SampleScene(s, 0, 0.5, 0.5).spheres()[0].material.albedo();
    for (int c = 0; c < 3; ++c) {
      ASSERT_GE(a[c], 0.1);
      ASSERT_LE(a[c], 0.9);
    }
  }
}

TEST(SampleScene, LightCountFollowsSampling) {
  for (int k = 1; k <= 4; ++k) EXPECT_EQ(SampleScene(1, 2, 0, 0, SceneSampling{32, k, 1.0}).lights().size(), static_cast<size_t>(k));
}

TEST(Relit, KeepsGeometryAndSwapsRig) {
  const SceneSpec s = SampleScene(5, 6, 0.4, 0.6);
  const SceneSpec r = Relit(s, 77);
  EXPECT_EQ(RasterizeScene(s).normal, RasterizeScene(r).normal);
  EXPECT_EQ(r.lights().size(), s.lights().size());
  EXPECT_EQ(r.lights()[0].direction, SampleScene(1, 77, 0, 0).lights()[0].direction);
  EXPECT_EQ(RenderScene(Relit(s, 6)), RenderScene(s));
}

TEST(DatasetConfig, GridCounts) {
  DatasetConfig c;
  c.num_objects = 2;
  c.grid_step = 0.5;
  EXPECT_EQ(PlanDataset(c).samples.size(), 18u);
  c.num_objects = 1;
  c.grid_step = 0.1;
  const DatasetIndex idx = PlanDataset(c);
  EXPECT_EQ(idx.samples.size(), 121u);
  EXPECT_EQ(idx.heldout.size(), 121u * c.num_heldout);
  EXPECT_EQ(c.GridValue(0), 0.0);
  EXPECT_EQ(c.GridValue(10), 1.0);
}

TEST(DatasetConfig, Validation) {
  DatasetConfig c;
  c.grid_step = 0.3;
  EXPECT_THROW(c.Validate(), UsageError);
  c.grid_step = 0.25;
  EXPECT_NO_THROW(c.Validate());
  c.num_heldout = 9;
  EXPECT_THROW(c.Validate(), UsageError);
}

TEST(PlanDataset, SplitsAreDisjointAndTuplesUnique) {
  DatasetConfig c;
  c.num_objects = 5;
  c.num_heldout = 10;
  c.grid_step = 0.25;
  const DatasetIndex idx = PlanDataset(c);
  std::set<uint64_t> train_seeds, held_seeds;
  std::set<std::tuple<int, int, int>> tuples;
  for (const auto& r : idx.samples) {
    train_seeds.insert(r.object_seed);
    EXPECT_TRUE(tuples.insert({r.object, r.metallic_index, r.roughness_index}).second);
  }
  for (const auto& r : idx.heldout) {
    held_seeds.insert(r.object_seed);
    EXPECT_TRUE(tuples.insert({r.object, r.metallic_index, r.roughness_index}).second);
  }
  EXPECT_EQ(train_seeds.size(), 5u);
  EXPECT_EQ(held_seeds.size(), 10u);
  for (uint64_t s : held_seeds) EXPECT_FALSE(train_seeds.count(s));
  // Light rigs vary per pair.
  std::set<uint64_t> lights;
  for (const auto& r : idx.samples) lights.insert(r.light_seed);
  EXPECT_EQ(lights.size(), idx.samples.size());
}

DatasetConfig SmallConfig(const fs::path& out) {
  DatasetConfig c;
  c.num_objects = 2;
  c.num_heldout = 10;
  c.grid_step = 0.5;
  c.image_size = 16;
  c.seed = 4;
  c.output_dir = out;
  return c;
}

std::string FileBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(GenerateDataset, IndexCompleteAndFilesParse) {
  testing::TempDir dir("gen");
  const DatasetConfig c = SmallConfig(dir.path() / "d");
  const DatasetIndex idx = GenerateDataset(c);
  const DatasetIndex loaded = LoadIndex(c.output_dir);
  EXPECT_EQ(loaded.samples, idx.samples);
  EXPECT_EQ(loaded.heldout, idx.heldout);
  for (const auto* recs : {&loaded.samples, &loaded.heldout}) {
    for (const auto& r : *recs) {
      const auto [bundle, meta] = ReadSample(loaded.root / r.file);
      EXPECT_EQ(meta, r.Meta());
      EXPECT_EQ(bundle.rgb, RenderRecord(r, c).rgb);
    }
  }
}

TEST(GenerateDataset, RegenerationIsByteIdentical) {
  testing::TempDir dir("regen");
  const DatasetConfig a = SmallConfig(dir.path() / "a");
  DatasetConfig b = a;
  b.output_dir = dir.path() / "b";
  const DatasetIndex ia = GenerateDataset(a);
  GenerateDataset(b);
  for (const auto& r : ia.samples) EXPECT_EQ(FileBytes(a.output_dir / r.file), FileBytes(b.output_dir / r.file));
  for (const auto& r : ia.heldout) EXPECT_EQ(FileBytes(a.output_dir / r.file), FileBytes(b.output_dir / r.file));
}

TEST(GenerateDataset, FailureRemovesPartialFiles) {
  testing::TempDir dir("fail");
  const DatasetConfig c = SmallConfig(dir.path() / "d");
  const DatasetIndex plan = PlanDataset(c);
  // A directory squatting on one sample's temp path makes that write fail.
  fs::path blocker = c.output_dir / plan.samples[3].file;
  blocker += ".tmp";
  fs::create_directories(blocker);
  EXPECT_THROW(GenerateDataset(c), DataError);
  EXPECT_FALSE(fs::exists(c.output_dir / "index.json"));
  for (const auto& r : plan.samples) EXPECT_FALSE(fs::is_regular_file(c.output_dir / r.file)) << r.file;
  for (const auto& r : plan.heldout) EXPECT_FALSE(fs::is_regular_file(c.output_dir / r.file)) << r.file;
}

TEST(GenerateDataset, WritesPreviews) {
  testing::TempDir dir("prev");
  DatasetConfig c = SmallConfig(dir.path() / "d");
  c.previews = true;
  GenerateDataset(c);
  EXPECT_TRUE(fs::exists(c.output_dir / "previews" / "o0000.png"));
  EXPECT_TRUE(fs::exists(c.output_dir / "previews" / "o0011.png"));
}

// ---------------------------------------------------------------------------
// Sample format

FrameBundle SomeBundle() { return RenderScene(SampleScene(3, 4, 0.7, 0.2, SceneSampling{16, 2, 1.0})); }
const SampleMeta kMeta{0.7, 0.2, 3, 4};

TEST(SampleIo, RoundTripIsBitExact) {
  const FrameBundle b = SomeBundle();
  const std::vector<char> bytes = EncodeSample(b, kMeta);
  const auto [decoded, meta] = DecodeSample(bytes);
  EXPECT_EQ(meta, kMeta);
  EXPECT_EQ(EncodeSample(decoded, meta), bytes);
  EXPECT_EQ(std::memcmp(decoded.specular.data.data(), b.specular.data.data(), b.specular.data.size() * 4), 0);
}

TEST(SampleIo, FileRoundTrip) {
  testing::TempDir dir("io");
  const FrameBundle b = SomeBundle();
  WriteSample(dir.path() / "s.urnd", b, kMeta);
  EXPECT_FALSE(fs::exists(dir.path() / "s.urnd.tmp"));
  const auto [decoded, meta] = ReadSample(dir.path() / "s.urnd");
  EXPECT_EQ(decoded.rgb, b.rgb);
  EXPECT_EQ(decoded.mask, b.mask);
}

TEST(SampleIo, LayoutMatchesFormat) {
  const FrameBundle b = SomeBundle();
  const std::vector<char> bytes = EncodeSample(b, kMeta);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 5), "URND1");
  const uint32_t len = static_cast<uint8_t>(bytes[5]) | static_cast<uint8_t>(bytes[6]) << 8 |
                       static_cast<uint8_t>(bytes[7]) << 16 | static_cast<uint32_t>(static_cast<uint8_t>(bytes[8])) << 24;
  const auto header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + len);
  EXPECT_EQ(header.at("width"), 16);
  EXPECT_EQ(header.at("channel_names").size(), 16u);
  EXPECT_EQ(header.at("channel_names")[0], "rgb.r");
  EXPECT_EQ(header.at("channel_names")[15], "mask");
  EXPECT_EQ(bytes.size(), 9 + len + 16u * 16 * 16 * 4);
  // First payload float is rgb.r of pixel 0, little-endian.
  float v;
  std::memcpy(&v, bytes.data() + 9 + len, 4);
  EXPECT_EQ(v, b.rgb.at(0, 0));
}

SampleFormatError::Reason ReasonOf(const std::vector<char>& bytes) {
  try {
    DecodeSample(bytes);
  } catch (const SampleFormatError& e) {
    return e.reason();
  }
  ADD_FAILURE() << "decode succeeded";
  return SampleFormatError::Reason::kIo;
}

TEST(SampleIo, TruncationIsReported) {
  const std::vector<char> bytes = EncodeSample(SomeBundle(), kMeta);
  for (size_t cut : {bytes.size() - 1, bytes.size() - 1000, size_t{20}, size_t{7}, size_t{3}}) {
    EXPECT_EQ(ReasonOf(std::vector<char>(bytes.begin(), bytes.begin() + cut)), SampleFormatError::Reason::kTruncated)
        << cut;
  }
}

TEST(SampleIo, BadMagicIsReported) {
  std::vector<char> bytes = EncodeSample(SomeBundle(), kMeta);
  bytes[4] = '2';
  EXPECT_EQ(ReasonOf(bytes), SampleFormatError::Reason::kBadMagic);
}

TEST(SampleIo, ChannelCountMismatchIsReported) {
  std::vector<char> bytes = EncodeSample(SomeBundle(), kMeta);
  bytes.insert(bytes.end(), 16 * 16 * 4, 0);  // one extra whole plane
  EXPECT_EQ(ReasonOf(bytes), SampleFormatError::Reason::kSizeMismatch);
}

TEST(SampleIo, CorruptHeaderIsReported) {
  std::vector<char> bytes = EncodeSample(SomeBundle(), kMeta);
  bytes[9] = '[';
  EXPECT_EQ(ReasonOf(bytes), SampleFormatError::Reason::kBadHeader);
}

TEST(SampleIo, MissingFileIsDataError) {
  EXPECT_THROW(ReadSample("/nonexistent/x.urnd"), DataError);
}

}  // namespace
}  // namespace unirender
