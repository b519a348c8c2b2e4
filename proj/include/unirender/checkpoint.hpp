// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// URCK1 checkpoints:
//   "URCK1" | u32 LE header length | UTF-8 JSON header | f32 LE tensor payloads
// The header holds {arch, schedule, train_step, tensors: [{name, shape,
// offset, nbytes}]}; offsets are relative to the start of the payload.
// Optimizer moments are stored as extra tensors "adam.m/<param>" and
// "adam.v/<param>".

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unirender/diffusion.hpp"
#include "unirender/dual_net.hpp"
#include "unirender/nn/tensor.hpp"
#include "unirender/sample_io.hpp"

namespace unirender {

inline constexpr std::string_view kCheckpointMagic = "URCK1";

struct ScheduleConfig {
  int T = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  NoiseSchedule Make() const { return NoiseSchedule(T, beta_min, beta_max); }
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ScheduleConfig& s) {
  j = {{"T", s.T}, {"beta_min", s.beta_min}, {"beta_max", s.beta_max}};
}
inline void from_json(const nlohmann::json& j, ScheduleConfig& s) {
  s.T = j.at("T").get<int>();
  s.beta_min = j.at("beta_min").get<double>();
  s.beta_max = j.at("beta_max").get<double>();
}

struct Checkpoint {
  ArchConfig arch;
  ScheduleConfig schedule;
  int64_t train_step = 0;
  nn::ParamStore<float> params;
  std::optional<nn::ParamStore<float>> adam_m;
  std::optional<nn::ParamStore<float>> adam_v;
};

namespace detail {
inline void AppendTensor(std::vector<char>& payload, nlohmann::json& dir, const std::string& name,
                         const nn::ParamSpec& spec, const nn::Mat<float>& value) {
  const size_t bytes = static_cast<size_t>(value.size()) * sizeof(float);
  dir.push_back({{"name", name}, {"shape", spec.shape}, {"offset", payload.size()}, {"nbytes", bytes}});
  const size_t at = payload.size();
  payload.resize(at + bytes);
  std::memcpy(payload.data() + at, value.data(), bytes);
}
}  // namespace detail

inline std::vector<char> EncodeCheckpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["arch"] = ck.arch;
  header["schedule"] = ck.schedule;
  header["train_step"] = ck.train_step;
  nlohmann::json dir = nlohmann::json::array();
  std::vector<char> payload;
  for (const auto& e : ck.params) detail::AppendTensor(payload, dir, e.spec.name, e.spec, e.value);
  if (ck.adam_m && ck.adam_v) {
    for (const auto& e : *ck.adam_m) detail::AppendTensor(payload, dir, "adam.m/" + e.spec.name, e.spec, e.value);
    for (const auto& e : *ck.adam_v) detail::AppendTensor(payload, dir, "adam.v/" + e.spec.name, e.spec, e.value);
  }
  header["tensors"] = std::move(dir);
  const std::string text = header.dump();
  std::vector<char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::AppendU32(out, static_cast<uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Checkpoint DecodeCheckpoint(std::span<const char> bytes) {
  const size_t magic_len = kCheckpointMagic.size();
  if (bytes.size() < magic_len + 4 || std::string_view(bytes.data(), magic_len) != kCheckpointMagic)
    throw DataError("URCK1: bad magic or truncated file");
  const uint32_t header_len = detail::ReadU32(bytes.data() + magic_len);
  const size_t payload_at = magic_len + 4 + header_len;
  if (bytes.size() < payload_at) throw DataError("URCK1: header truncated");
  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + magic_len + 4, bytes.begin() + payload_at);
    ck.arch = header.at("arch").get<ArchConfig>();
    ck.schedule = header.at("schedule").get<ScheduleConfig>();
    ck.train_step = header.at("train_step").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("URCK1: invalid header: ") + e.what());
  }
  const DualNet<float> net(ck.arch);
  ck.params = nn::ParamStore<float>(net.specs());
  nn::ParamStore<float> m(net.specs()), v(net.specs());
  size_t loaded = 0, moments = 0;
  const size_t payload = bytes.size() - payload_at;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const size_t offset = t.at("offset").get<size_t>();
    const size_t nbytes = t.at("nbytes").get<size_t>();
    if (offset + nbytes > payload) throw DataError("URCK1: tensor " + name + " extends past end of file");
    nn::ParamStore<float>* store = &ck.params;
    std::string pname = name;
    if (name.starts_with("adam.m/")) {
      store = &m;
      pname = name.substr(7);
      ++moments;
    } else if (name.starts_with("adam.v/")) {
      store = &v;
      pname = name.substr(7);
      ++moments;
    } else {
      ++loaded;
    }
    if (!store->Contains(pname)) throw DataError("URCK1: tensor " + name + " does not belong to the architecture");
    nn::Mat<float>& dst = store->Value(pname);
    if (static_cast<size_t>(dst.size()) * sizeof(float) != nbytes) {
      throw DataError("URCK1: tensor " + name + " holds " + std::to_string(nbytes / sizeof(float)) +
                      " values, architecture expects " + std::to_string(dst.size()));
    }
    std::memcpy(dst.data(), bytes.data() + payload_at + offset, nbytes);
  }
  if (loaded != ck.params.size()) throw DataError("URCK1: missing parameter tensors");
  if (moments == 2 * ck.params.size()) {
    ck.adam_m = std::move(m);
    ck.adam_v = std::move(v);
  } else if (moments != 0) {
    throw DataError("URCK1: incomplete optimizer state");
  }
  return ck;
}

inline void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  detail::WriteFileAtomically(path, EncodeCheckpoint(ck));
}

inline Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::ReadFileBytes(path);
  return DecodeCheckpoint(bytes);
}

}  // namespace unirender
