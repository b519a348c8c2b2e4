// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// Fixed pixel-space attribute stack consumed and produced by the denoiser.
//
// Channel layout, all values in [-1, 1]:
//   0      metallic fill   2m - 1
//   1      roughness fill  2r - 1
//   2      mask            +1 foreground / -1 background
//   3..5   albedo          2a - 1
//   6..8   normal          2 * (n + 1) / 2 - 1
//   9..11  specular        2 x / (1 + x) - 1
//   12..14 diffuse         2 x / (1 + x) - 1
// Background pixels hold -1 in every channel.

#pragma once

#include <algorithm>
#include <cmath>

#include "unirender/common.hpp"
#include "unirender/pbr.hpp"

namespace unirender {

inline constexpr int kAttrChannels = 15;
inline constexpr int kRgbChannels = 3;

namespace attr {
inline constexpr int kMetallic = 0;
inline constexpr int kRoughness = 1;
inline constexpr int kMask = 2;
inline constexpr int kAlbedo = 3;
inline constexpr int kNormal = 6;
inline constexpr int kSpecular = 9;
inline constexpr int kDiffuse = 12;
}  // namespace attr

/// H x W x 15 attribute image (planar).
struct AttributeStack {
  PlanarImage data;

  AttributeStack() = default;
  AttributeStack(int w, int h) : data(w, h, kAttrChannels) {}
  explicit AttributeStack(PlanarImage d) : data(std::move(d)) {
    if (data.channels != kAttrChannels) throw DataError("AttributeStack: expected 15 channels");
  }
};

class NoForegroundError : public DataError {
 public:
  NoForegroundError() : DataError("no foreground: mask channel is empty") {}
};

inline double ToSigned(double unit) { return 2.0 * unit - 1.0; }
inline double FromSigned(double s) { return 0.5 * (s + 1.0); }

/// Radiance -> [-1, 1): 2x/(1+x) - 1.
inline double EncodeShading(double x) { return 2.0 * x / (1.0 + x) - 1.0; }

/// Inverse of EncodeShading; input clamped so the result stays finite.
inline double DecodeShading(double s) {
  const double u = FromSigned(std::clamp(s, -1.0, 1.0 - 2e-6));
  return u / (1.0 - u);
}

inline AttributeStack PackAttributes(const FrameBundle& b) {
  AttributeStack stack(b.width(), b.height());
  PlanarImage& out = stack.data;
  std::fill(out.data.begin(), out.data.end(), -1.0f);
  const auto m = static_cast<float>(ToSigned(b.material.metallic()));
  const auto r = static_cast<float>(ToSigned(b.material.roughness()));
  for (size_t p = 0; p < b.pixels(); ++p) {
    if (!b.foreground(p)) continue;
    out.at(attr::kMetallic, p) = m;
    out.at(attr::kRoughness, p) = r;
    out.at(attr::kMask, p) = 1.0f;
    for (int c = 0; c < 3; ++c) {
      out.at(attr::kAlbedo + c, p) = static_cast<float>(ToSigned(b.albedo.at(c, p)));
      out.at(attr::kNormal + c, p) = static_cast<float>(ToSigned(FromSigned(b.normal.at(c, p))));
      out.at(attr::kSpecular + c, p) = static_cast<float>(EncodeShading(b.specular.at(c, p)));
      out.at(attr::kDiffuse + c, p) = static_cast<float>(EncodeShading(b.diffuse.at(c, p)));
    }
  }
  return stack;
}

struct DecodedIntrinsics {
  double metallic = 0;
  double roughness = 0;
  PlanarImage albedo, normal, specular, diffuse;  // zero on background
  PlanarImage mask;
  size_t foreground_pixels = 0;

  GBuffer ToGBuffer() const {
    GBuffer gb;
    gb.albedo = albedo;
    gb.normal = normal;
    gb.mask = mask;
    return gb;
  }
};

/// Decodes a (possibly raw model output) stack. Values are clamped to
/// [-1, 1]; the mask is channel 2 > mask_threshold.
inline DecodedIntrinsics UnpackAttributes(const AttributeStack& stack, double mask_threshold = 0.0) {
  const PlanarImage& in = stack.data;
  if (in.channels != kAttrChannels) throw DataError("UnpackAttributes: expected 15 channels");
  const int w = in.width, h = in.height;
  DecodedIntrinsics out;
  out.albedo = PlanarImage(w, h, 3);
  out.normal = PlanarImage(w, h, 3);
  out.specular = PlanarImage(w, h, 3);
  out.diffuse = PlanarImage(w, h, 3);
  out.mask = PlanarImage(w, h, 1);
  auto value = [&](int c, size_t p) { return std::clamp<double>(in.at(c, p), -1.0, 1.0); };

  double msum = 0, rsum = 0;
  for (size_t p = 0; p < in.pixels(); ++p) {
    if (!(value(attr::kMask, p) > mask_threshold)) continue;
    ++out.foreground_pixels;
    out.mask.at(0, p) = 1.0f;
    msum += FromSigned(value(attr::kMetallic, p));
    rsum += FromSigned(value(attr::kRoughness, p));
    Vec3 n{value(attr::kNormal, p), value(attr::kNormal + 1, p), value(attr::kNormal + 2, p)};
    n = length(n) > 0 ? normalize(n) : kViewDirection;
    for (int c = 0; c < 3; ++c) {
      out.albedo.at(c, p) = static_cast<float>(FromSigned(value(attr::kAlbedo + c, p)));
      out.normal.at(c, p) = static_cast<float>(n[c]);
      out.specular.at(c, p) = static_cast<float>(DecodeShading(value(attr::kSpecular + c, p)));
      out.diffuse.at(c, p) = static_cast<float>(DecodeShading(value(attr::kDiffuse + c, p)));
    }
  }
  if (out.foreground_pixels == 0) throw NoForegroundError();
  out.metallic = msum / static_cast<double>(out.foreground_pixels);
  out.roughness = rsum / static_cast<double>(out.foreground_pixels);
  return out;
}

/// Linear RGB -> network range [-1, 1) using the shading compression.
inline PlanarImage EncodeRgb(const PlanarImage& linear) {
  PlanarImage out(linear.width, linear.height, 3);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(EncodeShading(std::max(0.0f, linear.data[i])));
  return out;
}

inline PlanarImage DecodeRgb(const PlanarImage& encoded) {
  PlanarImage out(encoded.width, encoded.height, 3);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(DecodeShading(encoded.data[i]));
  return out;
}

/// Linear radiance -> [0, 1) image used for scoring RGB against references.
inline PlanarImage CompressedRgb(const PlanarImage& linear) {
  PlanarImage out = linear;
  for (float& v : out.data) v = static_cast<float>(CompressRadiance(std::max(0.0f, v)));
  return out;
}

}  // namespace unirender
