// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// URND1 sample files:
//   "URND1" | u32 LE header length | UTF-8 JSON header | planar f32 LE channels
// The header carries {width, height, channel_names, metallic, roughness,
// object_seed, light_seed}; channels follow in header order.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unirender/common.hpp"
#include "unirender/pbr.hpp"

namespace unirender {

static_assert(std::endian::native == std::endian::little, "URND1/URCK1 I/O assumes a little-endian host");

struct SampleMeta {
  double metallic = 0.0;
  double roughness = 0.0;
  uint64_t object_seed = 0;
  uint64_t light_seed = 0;

  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

class SampleFormatError : public DataError {
 public:
  enum class Reason { kBadMagic, kTruncated, kBadHeader, kSizeMismatch, kIo };

  SampleFormatError(Reason reason, const std::string& what) : DataError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

inline constexpr std::string_view kSampleMagic = "URND1";

inline const std::array<std::string, 16>& SampleChannelNames() {
  static const std::array<std::string, 16> names = {
      "rgb.r",      "rgb.g",      "rgb.b",      "albedo.r",  "albedo.g",  "albedo.b",  "normal.x",  "normal.y",
      "normal.z",   "specular.r", "specular.g", "specular.b", "diffuse.r", "diffuse.g", "diffuse.b", "mask"};
  return names;
}

namespace detail {

inline void AppendU32(std::vector<char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline uint32_t ReadU32(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline void AppendPlane(std::vector<char>& out, std::span<const float> plane) {
  const size_t at = out.size();
  out.resize(at + plane.size_bytes());
  std::memcpy(out.data() + at, plane.data(), plane.size_bytes());
}

/// Write-then-rename so a failed write never leaves a file at `path`.
inline void WriteFileAtomically(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw SampleFormatError(SampleFormatError::Reason::kIo, "cannot open " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
      os.close();
      std::filesystem::remove(tmp);
      throw SampleFormatError(SampleFormatError::Reason::kIo, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw SampleFormatError(SampleFormatError::Reason::kIo, "rename failed: " + path.string());
  }
}

inline std::vector<char> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SampleFormatError(SampleFormatError::Reason::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::array<const PlanarImage*, 6> BundlePlanes(const FrameBundle& b) {
  return {&b.rgb, &b.albedo, &b.normal, &b.specular, &b.diffuse, &b.mask};
}

inline std::array<PlanarImage*, 6> BundlePlanes(FrameBundle& b) {
  return {&b.rgb, &b.albedo, &b.normal, &b.specular, &b.diffuse, &b.mask};
}

}  // namespace detail

inline std::vector<char> EncodeSample(const FrameBundle& bundle, const SampleMeta& meta) {
  nlohmann::json header;
  header["width"] = bundle.width();
  header["height"] = bundle.height();
  header["channel_names"] = SampleChannelNames();
  header["metallic"] = meta.metallic;
  header["roughness"] = meta.roughness;
  header["object_seed"] = meta.object_seed;
  header["light_seed"] = meta.light_seed;
  const std::string text = header.dump();

  std::vector<char> out(kSampleMagic.begin(), kSampleMagic.end());
  detail::AppendU32(out, static_cast<uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const PlanarImage* img : detail::BundlePlanes(bundle))
    for (int c = 0; c < img->channels; ++c) detail::AppendPlane(out, img->plane(c));
  return out;
}

inline std::pair<FrameBundle, SampleMeta> DecodeSample(std::span<const char> bytes) {
  using Reason = SampleFormatError::Reason;
  const size_t magic_len = kSampleMagic.size();
  if (bytes.size() < magic_len) throw SampleFormatError(Reason::kTruncated, "URND1: file shorter than magic");
  if (std::string_view(bytes.data(), magic_len) != kSampleMagic) throw SampleFormatError(Reason::kBadMagic, "URND1: bad magic");
  if (bytes.size() < magic_len + 4) throw SampleFormatError(Reason::kTruncated, "URND1: missing header length");
  const uint32_t header_len = detail::ReadU32(bytes.data() + magic_len);
  const size_t payload_at = magic_len + 4 + header_len;
  if (bytes.size() < payload_at) throw SampleFormatError(Reason::kTruncated, "URND1: header truncated");

  nlohmann::json header;
  SampleMeta meta;
  int width = 0, height = 0;
  std::vector<std::string> names;
  try {
    header = nlohmann::json::parse(bytes.begin() + magic_len + 4, bytes.begin() + payload_at);
    width = header.at("width").get<int>();
    height = header.at("height").get<int>();
    names = header.at("channel_names").get<std::vector<std::string>>();
    meta.metallic = header.at("metallic").get<double>();
    meta.roughness = header.at("roughness").get<double>();
    meta.object_seed = header.at("object_seed").get<uint64_t>();
    meta.light_seed = header.at("light_seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SampleFormatError(Reason::kBadHeader, std::string("URND1: invalid header: ") + e.what());
  }
  if (width <= 0 || height <= 0) throw SampleFormatError(Reason::kBadHeader, "URND1: non-positive image size");

  const size_t plane_bytes = static_cast<size_t>(width) * height * sizeof(float);
  const size_t payload = bytes.size() - payload_at;
  if (payload % plane_bytes != 0) throw SampleFormatError(Reason::kTruncated, "URND1: payload ends inside a channel plane");
  if (payload / plane_bytes != names.size()) {
    throw SampleFormatError(Reason::kSizeMismatch, "URND1: header declares " + std::to_string(names.size()) +
                                                       " channels but payload holds " +
                                                       std::to_string(payload / plane_bytes));
  }

  FrameBundle bundle(width, height);
  std::vector<bool> seen(SampleChannelNames().size(), false);
  for (size_t k = 0; k < names.size(); ++k) {
    const auto& all = SampleChannelNames();
    const auto it = std::find(all.begin(), all.end(), names[k]);
    if (it == all.end()) throw SampleFormatError(Reason::kBadHeader, "URND1: unknown channel " + names[k]);
    const size_t idx = static_cast<size_t>(it - all.begin());
    if (seen[idx]) throw SampleFormatError(Reason::kBadHeader, "URND1: duplicate channel " + names[k]);
    seen[idx] = true;
    PlanarImage* img = detail::BundlePlanes(bundle)[idx / 3];
    const int c = idx < 15 ? static_cast<int>(idx % 3) : 0;
    std::memcpy(img->plane(c).data(), bytes.data() + payload_at + k * plane_bytes, plane_bytes);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw SampleFormatError(Reason::kBadHeader, "URND1: missing channels");

  Rgb albedo;
  for (size_t p = 0; p < bundle.pixels(); ++p) {
    if (bundle.foreground(p)) {
      albedo = {bundle.albedo.at(0, p), bundle.albedo.at(1, p), bundle.albedo.at(2, p)};
      break;
    }
  }
  try {
    bundle.material = MaterialParams(meta.metallic, meta.roughness, albedo);
  } catch (const UsageError& e) {
    throw SampleFormatError(Reason::kBadHeader, std::string("URND1: ") + e.what());
  }
  return {std::move(bundle), meta};
}

inline void WriteSample(const std::filesystem::path& path, const FrameBundle& bundle, const SampleMeta& meta) {
  detail::WriteFileAtomically(path, EncodeSample(bundle, meta));
}

inline std::pair<FrameBundle, SampleMeta> ReadSample(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::ReadFileBytes(path);
  return DecodeSample(bytes);
}

}  // namespace unirender
