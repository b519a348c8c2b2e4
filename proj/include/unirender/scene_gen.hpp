// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "unirender/common.hpp"
#include "unirender/parallel.hpp"
#include "unirender/pbr.hpp"
#include "unirender/png_io.hpp"
#include "unirender/rng.hpp"
#include "unirender/sample_io.hpp"

namespace unirender {

struct SceneSampling {
  int image_size = 32;
  int lights_per_scene = 2;
  double world_extent = 1.0;
};

inline constexpr double kAlbedoMin = 0.1;
inline constexpr double kAlbedoMax = 0.9;

/// Builds the scene for one (object, light rig, material) combination.
/// Geometry and albedo depend only on object_seed; lights and ambient only on
/// light_seed.
inline SceneSpec SampleScene(uint64_t object_seed, uint64_t light_seed, double metallic, double roughness,
                             const SceneSampling& sampling = {}) {
  const double extent = sampling.world_extent;
  Rng obj(object_seed);
  const Rgb albedo{obj.Uniform(kAlbedoMin, kAlbedoMax), obj.Uniform(kAlbedoMin, kAlbedoMax),
                   obj.Uniform(kAlbedoMin, kAlbedoMax)};
  const MaterialParams material(metallic, roughness, albedo);

  std::vector<Sphere> spheres;
  const int count = static_cast<int>(obj.UniformInt(1, 3));
  {
    const double r = obj.Uniform(0.45, 0.75) * extent;
    const double span = 0.2 * extent;
    spheres.push_back({{obj.Uniform(-span, span), obj.Uniform(-span, span), obj.Uniform(-0.2, 0.2) * extent}, r, material});
  }
  for (int k = 1; k < count; ++k) {
    const double r = obj.Uniform(0.2, 0.4) * extent;
    const double span = extent - r;
    spheres.push_back({{obj.Uniform(-span, span), obj.Uniform(-span, span), obj.Uniform(-0.3, 0.3) * extent}, r, material});
  }

  Rng lit(light_seed);
  std::vector<LightSpec> lights;
  const int k_lights = sampling.lights_per_scene;
  for (int k = 0; k < k_lights; ++k) {
    const double z = lit.Uniform(0.3, 1.0);
    const double phi = lit.Uniform(0.0, 2.0 * kPi);
    const double s = std::sqrt(1.0 - z * z);
    const double intensity = lit.Uniform(1.5, 3.5) / k_lights;
    const Rgb tint{lit.Uniform(0.8, 1.0), lit.Uniform(0.8, 1.0), lit.Uniform(0.8, 1.0)};
    lights.emplace_back(normalize(Vec3{s * std::cos(phi), s * std::sin(phi), z}), tint * intensity);
  }
  const Rgb ambient = Rgb{lit.Uniform(0.8, 1.0), lit.Uniform(0.8, 1.0), lit.Uniform(0.8, 1.0)} * lit.Uniform(0.03, 0.15);
  return SceneSpec(std::move(spheres), std::move(lights), ambient, OrthoCamera{sampling.image_size, extent});
}

struct LightRig {
  std::vector<LightSpec> lights;
  Rgb ambient;
};

/// The lights and ambient term dataset generation draws for `light_seed`.
inline LightRig SampleLightRig(uint64_t light_seed, int lights_per_scene) {
  const SceneSpec rig = SampleScene(0, light_seed, 0.0, 0.0, SceneSampling{16, lights_per_scene, 1.0});
  return {rig.lights(), rig.ambient()};
}

/// A fresh light rig for relighting, with the scene's light count.
inline SceneSpec Relit(const SceneSpec& scene, uint64_t light_seed) {
  LightRig rig = SampleLightRig(light_seed, static_cast<int>(scene.lights().size()));
  return scene.WithLights(std::move(rig.lights), rig.ambient);
}

struct DatasetConfig {
  int num_objects = 64;
  int num_heldout = 16;
  double grid_step = 0.1;
  int image_size = 32;
  uint64_t seed = 0;
  int lights_per_scene = 2;
  std::filesystem::path output_dir;
  bool previews = false;

  int GridPoints() const { return static_cast<int>(std::lround(1.0 / grid_step)) + 1; }
  double GridValue(int i) const { return static_cast<double>(i) / (GridPoints() - 1); }

  void Validate() const {
    if (num_objects < 1) throw UsageError("data.num_objects must be >= 1");
    if (num_heldout < 10) throw UsageError("data.num_heldout must be >= 10");
    if (!(grid_step > 0 && grid_step <= 1)) throw UsageError("data.grid_step must lie in (0, 1]");
    const double n = 1.0 / grid_step;
    if (std::abs(n - std::round(n)) > 1e-9 * n) throw UsageError("data.grid_step must divide 1.0");
    if (image_size < 16) throw UsageError("data.image_size must be >= 16");
    if (lights_per_scene < 1 || lights_per_scene > 4) throw UsageError("data.lights_per_scene must be in [1, 4]");
  }

  SceneSampling Sampling() const { return {image_size, lights_per_scene, 1.0}; }
};

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"num_objects", c.num_objects}, {"num_heldout", c.num_heldout},         {"grid_step", c.grid_step},
       {"image_size", c.image_size},   {"seed", c.seed},                       {"lights_per_scene", c.lights_per_scene},
       {"output_dir", c.output_dir.string()}, {"previews", c.previews}};
}

enum class Split { kTrain, kHeldout };

struct SampleRecord {
  std::string id;
  std::string file;  // relative to the dataset directory
  Split split = Split::kTrain;
  int object = 0;
  int metallic_index = 0;
  int roughness_index = 0;
  double metallic = 0;
  double roughness = 0;
  uint64_t object_seed = 0;
  uint64_t light_seed = 0;

  SampleMeta Meta() const { return {metallic, roughness, object_seed, light_seed}; }
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetIndex {
  DatasetConfig config;
  std::vector<SampleRecord> samples;  // training split
  std::vector<SampleRecord> heldout;  // objects never used for training
  std::filesystem::path root;         // directory the index was loaded from

  const std::vector<SampleRecord>& Records(Split s) const { return s == Split::kTrain ? samples : heldout; }
};

inline constexpr uint64_t kObjectSeedTag = 0x6F626A;
inline constexpr uint64_t kLightSeedTag = 0x6C6974;

inline uint64_t ObjectSeed(uint64_t dataset_seed, int object) {
  return DeriveSeed(dataset_seed, {kObjectSeedTag, static_cast<uint64_t>(object)});
}

inline uint64_t LightSeed(uint64_t dataset_seed, int object, int mi, int ri) {
  return DeriveSeed(dataset_seed, {kLightSeedTag, static_cast<uint64_t>(object), static_cast<uint64_t>(mi),
                                   static_cast<uint64_t>(ri)});
}

/// Enumerates every (object, metallic, roughness) record without rendering.
inline DatasetIndex PlanDataset(const DatasetConfig& config) {
  config.Validate();
  DatasetIndex index;
  index.config = config;
  index.root = config.output_dir;
  const int g = config.GridPoints();
  for (int o = 0; o < config.num_objects + config.num_heldout; ++o) {
    const bool train = o < config.num_objects;
    for (int mi = 0; mi < g; ++mi) {
      for (int ri = 0; ri < g; ++ri) {
        SampleRecord rec;
        rec.split = train ? Split::kTrain : Split::kHeldout;
        char name[64];
        std::snprintf(name, sizeof(name), "o%04d_m%02d_r%02d", o, mi, ri);
        rec.id = std::string(train ? "train/" : "heldout/") + name;
        rec.file = rec.id + ".urnd";
        rec.object = o;
        rec.metallic_index = mi;
        rec.roughness_index = ri;
        rec.metallic = config.GridValue(mi);
        rec.roughness = config.GridValue(ri);
        rec.object_seed = ObjectSeed(config.seed, o);
        rec.light_seed = LightSeed(config.seed, o, mi, ri);
        (train ? index.samples : index.heldout).push_back(std::move(rec));
      }
    }
  }
  return index;
}

inline SceneSpec SceneFor(const SampleRecord& rec, const DatasetConfig& config) {
  return SampleScene(rec.object_seed, rec.light_seed, rec.metallic, rec.roughness, config.Sampling());
}

inline FrameBundle RenderRecord(const SampleRecord& rec, const DatasetConfig& config) {
  return RenderScene(SceneFor(rec, config));
}

inline nlohmann::json RecordJson(const SampleRecord& r) {
  return {{"id", r.id},         {"file", r.file},
          {"object", r.object}, {"metallic_index", r.metallic_index},
          {"roughness_index", r.roughness_index}, {"metallic", r.metallic},
          {"roughness", r.roughness}, {"object_seed", r.object_seed},
          {"light_seed", r.light_seed}};
}

inline nlohmann::json IndexJson(const DatasetIndex& index) {
  nlohmann::json j;
  j["format"] = "URND1";
  j["config"] = index.config;
  j["samples"] = nlohmann::json::array();
  for (const auto& r : index.samples) j["samples"].push_back(RecordJson(r));
  j["heldout_samples"] = nlohmann::json::array();
  for (const auto& r : index.heldout) j["heldout_samples"].push_back(RecordJson(r));
  return j;
}

/// Renders and writes every sample, then the index. On failure every file
/// written by this call is removed before the error propagates.
inline DatasetIndex GenerateDataset(const DatasetConfig& config) {
  DatasetIndex index = PlanDataset(config);
  namespace fs = std::filesystem;
  const fs::path root = config.output_dir;
  std::error_code ec;
  fs::create_directories(root / "train", ec);
  fs::create_directories(root / "heldout", ec);
  if (ec) throw DataError("cannot create dataset directory " + root.string() + ": " + ec.message());

  std::vector<const SampleRecord*> all;
  for (const auto& r : index.samples) all.push_back(&r);
  for (const auto& r : index.heldout) all.push_back(&r);

  try {
    ParallelFor(all.size(), [&](size_t i) {
      const SampleRecord& rec = *all[i];
      WriteSample(root / rec.file, RenderRecord(rec, config), rec.Meta());
    });
    if (config.previews) {
      fs::create_directories(root / "previews");
      const int g = config.GridPoints();
      const size_t per_object = static_cast<size_t>(g) * g;
      for (size_t start = 0; start < all.size(); start += per_object) {
        std::vector<Image8> tiles;
        for (size_t k = start; k < start + per_object; ++k) tiles.push_back(PreviewImage(RenderRecord(*all[k], config).rgb));
        char name[32];
        std::snprintf(name, sizeof(name), "o%04d.png", all[start]->object);
        WritePng(root / "previews" / name, ContactSheet(tiles, g));
      }
    }
    std::ofstream os(root / "index.json", std::ios::trunc);
    os << IndexJson(index).dump(1) << "\n";
    if (!os) throw DataError("failed writing " + (root / "index.json").string());
  } catch (...) {
    for (const SampleRecord* rec : all) {
      fs::remove(root / rec->file, ec);
      fs::path tmp = root / rec->file;
      tmp += ".tmp";
      fs::remove(tmp, ec);
    }
    fs::remove(root / "index.json", ec);
    throw;
  }
  return index;
}

inline SampleRecord RecordFromJson(const nlohmann::json& j, Split split) {
  SampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.file = j.at("file").get<std::string>();
  r.split = split;
  r.object = j.at("object").get<int>();
  r.metallic_index = j.at("metallic_index").get<int>();
  r.roughness_index = j.at("roughness_index").get<int>();
  r.metallic = j.at("metallic").get<double>();
  r.roughness = j.at("roughness").get<double>();
  r.object_seed = j.at("object_seed").get<uint64_t>();
  r.light_seed = j.at("light_seed").get<uint64_t>();
  return r;
}

inline DatasetIndex LoadIndex(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.json");
  if (!is) throw DataError("cannot open " + (dir / "index.json").string());
  DatasetIndex index;
  try {
    const nlohmann::json j = nlohmann::json::parse(is);
    const auto& c = j.at("config");
    index.config.num_objects = c.at("num_objects").get<int>();
    index.config.num_heldout = c.at("num_heldout").get<int>();
    index.config.grid_step = c.at("grid_step").get<double>();
    index.config.image_size = c.at("image_size").get<int>();
    index.config.seed = c.at("seed").get<uint64_t>();
    index.config.lights_per_scene = c.at("lights_per_scene").get<int>();
    index.config.output_dir = c.at("output_dir").get<std::string>();
    index.config.previews = c.at("previews").get<bool>();
    for (const auto& r : j.at("samples")) index.samples.push_back(RecordFromJson(r, Split::kTrain));
    for (const auto& r : j.at("heldout_samples")) index.heldout.push_back(RecordFromJson(r, Split::kHeldout));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid index.json: ") + e.what());
  }
  index.root = dir;
  return index;
}

}  // namespace unirender
