// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "unirender/attr_codec.hpp"
#include "unirender/scene_gen.hpp"

namespace unirender {
namespace {

FrameBundle Bundle(double m, double r, uint64_t seed = 1) {
  return RenderScene(SampleScene(seed, seed + 100, m, r, SceneSampling{32, 2, 1.0}));
}

TEST(Pack, ScalarFillsAtEndpoints) {
  const FrameBundle b = Bundle(1.0, 0.0);
  const AttributeStack s = PackAttributes(b);
  for (size_t p = 0; p < b.pixels(); ++p) {
    if (b.foreground(p)) {
      EXPECT_EQ(s.data.at(attr::kMetallic, p), 1.0f);
      EXPECT_EQ(s.data.at(attr::kRoughness, p), -1.0f);
      EXPECT_EQ(s.data.at(attr::kMask, p), 1.0f);
    } else {
      for (int c = 0; c < kAttrChannels; ++c) ASSERT_EQ(s.data.at(c, p), -1.0f);
    }
  }
}

TEST(Pack, NormalEncodingIsIdentityAffine) {
  // (n + 1) / 2 followed by the [0,1] -> [-1,1] affine map is the identity.
  FrameBundle b(2, 1);
  b.mask.at(0, 0) = 1;
  const double n[3] = {0.0, 0.0, 1.0};
  for (int c = 0; c < 3; ++c) b.normal.at(c, 0) = static_cast<float>(n[c]);
  const AttributeStack s = PackAttributes(b);
  EXPECT_EQ(s.data.at(attr::kNormal, 0), 0.0f);
  EXPECT_EQ(s.data.at(attr::kNormal + 1, 0), 0.0f);
  EXPECT_EQ(s.data.at(attr::kNormal + 2, 0), 1.0f);
}

TEST(Pack, EntriesInRange) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const AttributeStack s = PackAttributes(RenderScene(testing::RandomScene(rng, 32)));
    for (float v : s.data.data) {
      ASSERT_GE(v, -1.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Pack, ShadingCompression) {
  EXPECT_EQ(EncodeShading(0.0), -1.0);
  EXPECT_EQ(EncodeShading(1.0), 0.0);
  EXPECT_NEAR(EncodeShading(3.0), 0.5, 1e-15);
  for (double x : {0.0, 0.01, 0.3, 1.0, 2.5, 4.0, 50.0}) EXPECT_NEAR(DecodeShading(EncodeShading(x)), x, 1e-12 * (1 + x * x));
}

TEST(RoundTrip, RandomBundles) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const FrameBundle b = RenderScene(testing::RandomScene(rng, 32));
    const DecodedIntrinsics d = UnpackAttributes(PackAttributes(b));
    // Scalars pass through one float32 rounding of 2m - 1.
    EXPECT_NEAR(d.metallic, b.material.metallic(), 1e-7);
    EXPECT_NEAR(d.roughness, b.material.roughness(), 1e-7);
    EXPECT_EQ(d.mask, b.mask);
    for (size_t p = 0; p < b.pixels(); ++p) {
      if (!b.foreground(p)) continue;
      for (int c = 0; c < 3; ++c) {
        ASSERT_NEAR(d.albedo.at(c, p), b.albedo.at(c, p), 1e-5);
        ASSERT_NEAR(d.normal.at(c, p), b.normal.at(c, p), 1e-5);
        // float32 storage of 2x/(1+x) - 1 resolves x to ~6e-8 (1+x)^2.
        const double s = b.specular.at(c, p), df = b.diffuse.at(c, p);
        ASSERT_NEAR(d.specular.at(c, p), s, 1e-5 * (1 + s) * (1 + s));
        ASSERT_NEAR(d.diffuse.at(c, p), df, 1e-5 * (1 + df) * (1 + df));
      }
    }
  }
}

TEST(RoundTrip, ShadingMapsInTypicalRange) {
  FrameBundle b(64, 1);
  for (size_t p = 0; p < b.pixels(); ++p) {
    b.mask.at(0, p) = 1;
    b.normal.at(2, p) = 1;
    for (int c = 0; c < 3; ++c) {
      b.specular.at(c, p) = static_cast<float>(4.0 * p / 63.0);
      b.diffuse.at(c, p) = static_cast<float>(4.0 * (63 - p) / 63.0);
    }
  }
  const DecodedIntrinsics d = UnpackAttributes(PackAttributes(b));
  for (size_t p = 0; p < b.pixels(); ++p) {
    EXPECT_NEAR(d.specular.at(0, p), b.specular.at(0, p), 1e-5);
    EXPECT_NEAR(d.diffuse.at(0, p), b.diffuse.at(0, p), 1e-5);
  }
}

TEST(Unpack, MetallicHalf) {
  const DecodedIntrinsics d = UnpackAttributes(PackAttributes(Bundle(0.5, 0.3)));
  EXPECT_NEAR(d.metallic, 0.5, 1e-6);
  EXPECT_NEAR(d.roughness, 0.3, 1e-6);
}

TEST(Unpack, AllBackgroundFails) {
  AttributeStack s(8, 8);
  std::fill(s.data.data.begin(), s.data.data.end(), -1.0f);
  EXPECT_THROW(UnpackAttributes(s), NoForegroundError);
  try {
    UnpackAttributes(s);
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no foreground"), std::string::npos);
  }
}

TEST(Unpack, NoisyScalarChannel) {
  const AttributeStack clean = PackAttributes(Bundle(0.6, 0.4));
  const DecodedIntrinsics ref = UnpackAttributes(clean);
  ASSERT_GE(ref.foreground_pixels, 100u);
  Rng rng(8);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    AttributeStack s = clean;
    for (size_t p = 0; p < s.data.pixels(); ++p) s.data.at(attr::kMetallic, p) += static_cast<float>(0.01 * rng.Normal());
    worst = std::max(worst, std::abs(UnpackAttributes(s).metallic - ref.metallic));
  }
  EXPECT_LT(worst, 0.01);
}

TEST(Unpack, IgnoresBackgroundValues) {
  const AttributeStack clean = PackAttributes(Bundle(0.2, 0.9));
  AttributeStack noisy = clean;
  Rng rng(10);
  for (size_t p = 0; p < noisy.data.pixels(); ++p) {
    if (clean.data.at(attr::kMask, p) > 0) continue;
    for (int c = attr::kAlbedo; c < kAttrChannels; ++c) noisy.data.at(c, p) = static_cast<float>(rng.Uniform(-1, 1));
  }
  const DecodedIntrinsics a = UnpackAttributes(clean), b = UnpackAttributes(noisy);
  EXPECT_EQ(a.metallic, b.metallic);
  EXPECT_EQ(a.albedo, b.albedo);
  EXPECT_EQ(a.normal, b.normal);
  EXPECT_EQ(a.specular, b.specular);
  EXPECT_EQ(a.diffuse, b.diffuse);
}

TEST(Unpack, ClampsAndRenormalizes) {
  AttributeStack s(4, 4);
  Rng rng(12);
  for (float& v : s.data.data) v = static_cast<float>(rng.Uniform(-1.5, 1.5));
  for (size_t p = 0; p < s.data.pixels(); ++p) s.data.at(attr::kMask, p) = 0.5f;
  const DecodedIntrinsics d = UnpackAttributes(s);
  EXPECT_GE(d.metallic, 0.0);
  EXPECT_LE(d.metallic, 1.0);
  for (size_t p = 0; p < s.data.pixels(); ++p) {
    const double len = std::sqrt(std::pow(d.normal.at(0, p), 2) + std::pow(d.normal.at(1, p), 2) +
                                 std::pow(d.normal.at(2, p), 2));
    EXPECT_NEAR(len, 1.0, 1e-6);
    for (int c = 0; c < 3; ++c) EXPECT_TRUE(std::isfinite(d.specular.at(c, p)));
  }
}

TEST(Unpack, MaskThreshold) {
  AttributeStack s(2, 1);
  s.data.at(attr::kMask, 0) = 0.2f;
  s.data.at(attr::kMask, 1) = 0.8f;
  EXPECT_EQ(UnpackAttributes(s, 0.0).foreground_pixels, 2u);
  EXPECT_EQ(UnpackAttributes(s, 0.5).foreground_pixels, 1u);
}

TEST(Rgb, EncodeDecode) {
  const FrameBundle b = Bundle(0.3, 0.3);
  const PlanarImage enc = EncodeRgb(b.rgb);
  for (float v : enc.data) {
    ASSERT_GE(v, -1.0f);
    ASSERT_LT(v, 1.0f);
  }
  const PlanarImage dec = DecodeRgb(enc);
  for (size_t i = 0; i < dec.data.size(); ++i) {
    const double x = b.rgb.data[i];
    ASSERT_NEAR(dec.data[i], x, 1e-5 * (1 + x) * (1 + x));
  }
  const PlanarImage comp = CompressedRgb(b.rgb);
  for (size_t i = 0; i < comp.data.size(); ++i) ASSERT_NEAR(comp.data[i], b.rgb.data[i] / (1.0 + b.rgb.data[i]), 1e-7);
}

}  // namespace
}  // namespace unirender
