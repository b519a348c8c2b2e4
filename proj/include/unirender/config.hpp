// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "unirender/checkpoint.hpp"
#include "unirender/dual_net.hpp"
#include "unirender/evalkit.hpp"
#include "unirender/scene_gen.hpp"
#include "unirender/trainer.hpp"

namespace unirender {

/// Whole-run configuration. Every field is optional in the JSON document and
/// falls back to the struct default; unknown keys are rejected by name.
///
///   {
///     "data":  {num_objects, num_heldout, grid_step, image_size, seed,
///               lights_per_scene, output_dir, previews},
///     "train": {steps, batch_size, learning_rate, adam_beta1, adam_beta2,
///               adam_eps, p_dir, p_t, lambda_cycle, cycle_detach,
///               selector ("conditional" | "algorithm1"), checkpoint_every,
///               seed, schedule: {T, beta_min, beta_max}},
///     "arch":  {image_size, base_width, levels, time_embed_dim},
///     "eval":  {sampler_steps, batch_size, per_object, num_relight_lights,
///               seed, split ("heldout" | "train")}
///   }
///
/// arch.image_size defaults to data.image_size and arch.max_timestep always
/// follows train.schedule.T.
struct EvalConfig {
  EvalOptions options;
  Split split = Split::kHeldout;
};

struct RunConfig {
  DatasetConfig data;
  TrainConfig train;
  ArchConfig arch;
  EvalConfig eval;

  void Validate() const {
    data.Validate();
    train.Validate();
    arch.Validate();
    if (arch.image_size != data.image_size)
      throw UsageError("arch.image_size (" + std::to_string(arch.image_size) + ") must equal data.image_size (" +
                       std::to_string(data.image_size) + ")");
    if (arch.max_timestep != train.schedule.T) throw UsageError("arch.max_timestep must equal train.schedule.T");
    if (eval.options.sampler_steps < 1) throw UsageError("eval.sampler_steps must be >= 1");
    if (eval.options.batch_size < 1) throw UsageError("eval.batch_size must be >= 1");
    if (eval.options.per_object < 0) throw UsageError("eval.per_object must be >= 0");
    if (eval.options.num_relight_lights < 1) throw UsageError("eval.num_relight_lights must be >= 1");
  }
};

namespace detail {

/// Reads optional fields from one JSON object and rejects the leftovers.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  bool Get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw UsageError("config: bad value for '" + Name(key) + "'");
    }
    return true;
  }

  Section Sub(const std::string& key) {
    seen_.insert(key);
    static const nlohmann::json kEmpty = nlohmann::json::object();
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, Name(key));
  }

  void Finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw UsageError("config: unknown key '" + Name(k) + "'");
  }

 private:
  std::string Name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig ParseRunConfig(const nlohmann::json& j) {
  RunConfig rc;
  detail::Section root(j, "");

  detail::Section d = root.Sub("data");
  d.Get("num_objects", rc.data.num_objects);
  d.Get("num_heldout", rc.data.num_heldout);
  d.Get("grid_step", rc.data.grid_step);
  d.Get("image_size", rc.data.image_size);
  d.Get("seed", rc.data.seed);
  d.Get("lights_per_scene", rc.data.lights_per_scene);
  std::string out_dir;
  if (d.Get("output_dir", out_dir)) rc.data.output_dir = out_dir;
  d.Get("previews", rc.data.previews);
  d.Finish();

  detail::Section t = root.Sub("train");
  t.Get("steps", rc.train.steps);
  t.Get("batch_size", rc.train.batch_size);
  t.Get("learning_rate", rc.train.learning_rate);
  t.Get("adam_beta1", rc.train.adam_beta1);
  t.Get("adam_beta2", rc.train.adam_beta2);
  t.Get("adam_eps", rc.train.adam_eps);
  t.Get("p_dir", rc.train.p_dir);
  t.Get("p_t", rc.train.p_t);
  t.Get("lambda_cycle", rc.train.lambda_cycle);
  t.Get("cycle_detach", rc.train.cycle_detach);
  std::string selector;
  if (t.Get("selector", selector)) {
    if (selector == "conditional") {
      rc.train.selector = SelectorMode::kConditional;
    } else if (selector == "algorithm1") {
      rc.train.selector = SelectorMode::kAlgorithm1;
    } else {
      throw UsageError("config: train.selector must be 'conditional' or 'algorithm1'");
    }
  }
  t.Get("checkpoint_every", rc.train.checkpoint_every);
  t.Get("seed", rc.train.seed);
  detail::Section s = t.Sub("schedule");
  s.Get("T", rc.train.schedule.T);
  s.Get("beta_min", rc.train.schedule.beta_min);
  s.Get("beta_max", rc.train.schedule.beta_max);
  s.Finish();
  t.Finish();

  detail::Section a = root.Sub("arch");
  rc.arch.image_size = rc.data.image_size;
  a.Get("image_size", rc.arch.image_size);
  a.Get("base_width", rc.arch.base_width);
  a.Get("levels", rc.arch.levels);
  a.Get("time_embed_dim", rc.arch.time_embed_dim);
  rc.arch.max_timestep = rc.train.schedule.T;
  a.Finish();

  detail::Section e = root.Sub("eval");
  e.Get("sampler_steps", rc.eval.options.sampler_steps);
  e.Get("batch_size", rc.eval.options.batch_size);
  e.Get("per_object", rc.eval.options.per_object);
  e.Get("num_relight_lights", rc.eval.options.num_relight_lights);
  e.Get("seed", rc.eval.options.seed);
  std::string split;
  if (e.Get("split", split)) {
    if (split == "heldout") {
      rc.eval.split = Split::kHeldout;
    } else if (split == "train") {
      rc.eval.split = Split::kTrain;
    } else {
      throw UsageError("config: eval.split must be 'heldout' or 'train'");
    }
  }
  e.Finish();

  root.Finish();
  rc.Validate();
  return rc;
}

inline RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return ParseRunConfig(j);
}

}  // namespace unirender
