// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// unirender: dataset generation, training, rendering, inverse rendering,
// relighting and evaluation from one binary.
//
// Exit codes: 0 success, 2 usage/config, 3 data/format, 4 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "unirender/checkpoint.hpp"
#include "unirender/config.hpp"
#include "unirender/evalkit.hpp"
#include "unirender/png_io.hpp"
#include "unirender/scene_gen.hpp"
#include "unirender/trainer.hpp"

namespace fs = std::filesystem;
using namespace unirender;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

uint64_t Fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ReadText(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteText(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DataError("cannot write " + p.string());
}

RunConfig ConfigOrDefault(const std::string& path) {
  if (path.empty()) return ParseRunConfig(nlohmann::json::object());
  return LoadRunConfig(path);
}

struct LoadedModel {
  Checkpoint ck;
  DualNet<float> net;
  NoiseSchedule sched;

  explicit LoadedModel(const fs::path& path)
      : ck(LoadCheckpoint(path)), net(ck.arch), sched(ck.schedule.Make()) {}
};

void CheckImageShape(const ArchConfig& arch, int width, int height, const std::string& what) {
  if (width != arch.image_size || height != arch.image_size) {
    throw DataError(what + " is " + std::to_string(width) + "x" + std::to_string(height) + " but the checkpoint expects " +
                    std::to_string(arch.image_size) + "x" + std::to_string(arch.image_size));
  }
}

/// Linear RGB from a PNG (display gamma) or from the rgb planes of a sample.
PlanarImage LoadRgb(const fs::path& path) {
  if (path.extension() == ".urnd") return ReadSample(path).first.rgb;
  return LinearFromPreview(ReadPngRgb(path));
}

DecodedIntrinsics RunInverse(const LoadedModel& m, const PlanarImage& rgb_linear, int steps, uint64_t seed) {
  CheckImageShape(m.ck.arch, rgb_linear.width, rgb_linear.height, "input image");
  const PlanarImage enc = EncodeRgb(rgb_linear);
  const DiffusionEvalModel model(m.net, m.ck.params, m.sched, steps, seed);
  const uint64_t key = 0;
  const std::vector<PlanarImage> out = model.Inverse({&enc}, std::span<const uint64_t>(&key, 1));
  return UnpackAttributes(AttributeStack(out[0]));
}

PlanarImage Reshade(const DecodedIntrinsics& d, uint64_t light_seed, int lights) {
  const LightRig rig = SampleLightRig(light_seed, lights);
  return ShadeGBuffer(d.ToGBuffer(), std::clamp(d.metallic, 0.0, 1.0), std::clamp(d.roughness, 0.0, 1.0), rig.lights,
                      rig.ambient)
      .rgb;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string config, out;
  std::optional<int> num, heldout, size, lights;
  std::optional<double> step;
  std::optional<uint64_t> seed;
  bool previews = false;
};

int GenData(const GenDataArgs& a) {
  RunConfig rc = ConfigOrDefault(a.config);
  DatasetConfig& d = rc.data;
  if (!a.out.empty()) d.output_dir = a.out;
  if (a.num) d.num_objects = *a.num;
  if (a.heldout) d.num_heldout = *a.heldout;
  if (a.size) d.image_size = *a.size;
  if (a.lights) d.lights_per_scene = *a.lights;
  if (a.step) d.grid_step = *a.step;
  if (a.seed) d.seed = *a.seed;
  if (a.previews) d.previews = true;
  if (d.output_dir.empty()) throw UsageError("gen-data: --out is required (or data.output_dir in --config)");
  d.Validate();

  const DatasetIndex index = GenerateDataset(d);
  const fs::path index_path = d.output_dir / "index.json";
  std::printf("index: %s\n", index_path.string().c_str());
  std::printf("%zu samples\n", index.samples.size());
  std::printf("%zu heldout samples\n", index.heldout.size());
  std::printf("checksum: %016llx\n", static_cast<unsigned long long>(Fnv1a64(ReadText(index_path))));
  return 0;
}

struct TrainArgs {
  std::string config, data, ckpt_out;
  bool resume = false;
  std::optional<int64_t> steps, stop_after;
  std::optional<uint64_t> seed;
  int64_t log_every = 100;
};

int TrainCmd(const TrainArgs& a) {
  RunConfig rc = ConfigOrDefault(a.config);
  if (a.steps) rc.train.steps = *a.steps;
  if (a.seed) rc.train.seed = *a.seed;
  rc.train.Validate();
  const DatasetIndex index = LoadIndex(a.data);
  if (index.config.image_size != rc.arch.image_size) {
    throw DataError("dataset images are " + std::to_string(index.config.image_size) + "x" +
                    std::to_string(index.config.image_size) + " but arch.image_size is " +
                    std::to_string(rc.arch.image_size));
  }
  const TrainingSet data = LoadTrainingSet(index, Split::kTrain);
  std::printf("training on %zu samples for %lld steps\n", data.size(), static_cast<long long>(rc.train.steps));
  const auto log = [&](int64_t step, const LossBreakdown& lb) {
    if (a.log_every > 0 && (step % a.log_every == 0 || step + 1 == rc.train.steps)) {
      std::printf("step %lld total %.6f main %.6f cycle %.6f\n", static_cast<long long>(step), lb.total, lb.main_loss,
                  lb.cycle_loss);
      std::fflush(stdout);
    }
  };
  const TrainResult r = Train(rc.train, rc.arch, data, a.ckpt_out, a.resume, log, a.stop_after.value_or(-1));
  std::printf("checkpoint: %s (step %lld)\n", r.checkpoint.string().c_str(), static_cast<long long>(r.final_step));
  return 0;
}

struct SampleArgs {
  std::string ckpt, input, out;
  int steps = 50;
  std::optional<uint64_t> seed;
  uint64_t light_seed = 0;
  int lights = 2;
};

int RenderCmd(const SampleArgs& a) {
  const LoadedModel m(a.ckpt);
  const auto [bundle, meta] = ReadSample(a.input);
  CheckImageShape(m.ck.arch, bundle.rgb.width, bundle.rgb.height, "attribute sample");
  const PlanarImage attrs = PackAttributes(bundle).data;
  const DiffusionEvalModel model(m.net, m.ck.params, m.sched, a.steps, a.seed.value_or(0));
  const uint64_t key = 0;
  const std::vector<PlanarImage> out = model.Render({&attrs}, std::span<const uint64_t>(&key, 1));
  WritePng(a.out, PreviewImage(DecodeRgb(out[0])));
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

int InverseCmd(const SampleArgs& a) {
  const LoadedModel m(a.ckpt);
  const DecodedIntrinsics d = RunInverse(m, LoadRgb(a.input), a.steps, a.seed.value_or(0));
  const fs::path dir = a.out;
  fs::create_directories(dir);
  WritePng(dir / "albedo.png", DataImage(d.albedo));
  WritePng(dir / "normal.png", DataImage(d.normal, 0.5, 0.5));
  WritePng(dir / "specular.png", PreviewImage(d.specular));
  WritePng(dir / "diffuse.png", PreviewImage(d.diffuse));
  WritePng(dir / "mask.png", DataImage(d.mask));
  const nlohmann::json scalars = {{"metallic", d.metallic},
                                  {"roughness", d.roughness},
                                  {"foreground_pixels", d.foreground_pixels}};
  WriteText(dir / "scalars.json", scalars.dump(2) + "\n");
  std::printf("metallic %.4f roughness %.4f\nwrote %s\n", d.metallic, d.roughness, dir.string().c_str());
  return 0;
}

int RelightCmd(const SampleArgs& a) {
  const LoadedModel m(a.ckpt);
  const DecodedIntrinsics d = RunInverse(m, LoadRgb(a.input), a.steps, a.seed.value_or(0));
  WritePng(a.out, PreviewImage(Reshade(d, a.light_seed, a.lights)));
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

struct EvalArgs {
  std::string config, ckpt, data, report, split;
  std::optional<int> steps, per_object, relights;
  std::optional<uint64_t> seed;
};

int EvalCmd(const EvalArgs& a) {
  RunConfig rc = ConfigOrDefault(a.config);
  EvalOptions& o = rc.eval.options;
  if (a.steps) o.sampler_steps = *a.steps;
  if (a.per_object) o.per_object = *a.per_object;
  if (a.relights) o.num_relight_lights = *a.relights;
  if (a.seed) o.seed = *a.seed;
  if (a.split == "train") rc.eval.split = Split::kTrain;
  if (a.split == "heldout") rc.eval.split = Split::kHeldout;
  rc.Validate();

  const LoadedModel m(a.ckpt);
  const DatasetIndex index = LoadIndex(a.data);
  CheckImageShape(m.ck.arch, index.config.image_size, index.config.image_size, "dataset images");
  const TrainingSet train = LoadTrainingSet(index, Split::kTrain);
  const ReportTable table = EvaluateCheckpoint(m.net, m.ck.params, m.sched, index, train, rc.eval.split, o);
  WriteText(a.report, ReportJson(table).dump(2) + "\n");
  std::cout << ReportText(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unirender: unified forward and inverse rendering with a dual-branch diffusion model"};
  app.require_subcommand(1);
  std::optional<uint64_t> global_seed;
  app.add_option("--seed", global_seed, "Seed for every random consumer of the subcommand");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render the synthetic dataset");
  gen_cmd->add_option("--config", gen.config, "RunConfig JSON")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out, "Output directory");
  gen_cmd->add_option("--num", gen.num, "Training objects");
  gen_cmd->add_option("--heldout", gen.heldout, "Held-out objects (>= 10)");
  gen_cmd->add_option("--size", gen.size, "Image size in pixels");
  gen_cmd->add_option("--step", gen.step, "Metallic/roughness grid step");
  gen_cmd->add_option("--lights", gen.lights, "Directional lights per scene");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_flag("--previews", gen.previews, "Write PNG contact sheets per object");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the dual-branch network");
  train_cmd->add_option("--config", tr.config, "RunConfig JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--ckpt-out", tr.ckpt_out, "Checkpoint directory")->required();
  train_cmd->add_flag("--resume", tr.resume, "Continue from <ckpt-out>/latest.urck");
  train_cmd->add_option("--steps", tr.steps, "Override train.steps");
  train_cmd->add_option("--seed", tr.seed, "Override train.seed");
  train_cmd->add_option("--log-every", tr.log_every, "Print losses every N steps");
  train_cmd->add_option("--stop-after", tr.stop_after, "Stop after N steps of this invocation")->group("");

  SampleArgs ren, inv, rel;
  auto* render_cmd = app.add_subcommand("render", "Sample RGB from an attribute sample");
  render_cmd->add_option("--ckpt", ren.ckpt, "Checkpoint")->required();
  render_cmd->add_option("--attrs", ren.input, "Attribute sample (.urnd)")->required();
  render_cmd->add_option("--out", ren.out, "Output PNG")->required();
  render_cmd->add_option("--sampler-steps", ren.steps, "Reverse diffusion steps");
  render_cmd->add_option("--seed", ren.seed, "Sampling seed");

  auto* inverse_cmd = app.add_subcommand("inverse", "Sample intrinsics from an RGB image");
  inverse_cmd->add_option("--ckpt", inv.ckpt, "Checkpoint")->required();
  inverse_cmd->add_option("--image", inv.input, "Input PNG (or .urnd sample)")->required();
  inverse_cmd->add_option("--out", inv.out, "Output directory")->required();
  inverse_cmd->add_option("--sampler-steps", inv.steps, "Reverse diffusion steps");
  inverse_cmd->add_option("--seed", inv.seed, "Sampling seed");

  auto* relight_cmd = app.add_subcommand("relight", "Inverse render, then re-shade under a new light rig");
  relight_cmd->add_option("--ckpt", rel.ckpt, "Checkpoint")->required();
  relight_cmd->add_option("--image", rel.input, "Input PNG (or .urnd sample)")->required();
  relight_cmd->add_option("--light-seed", rel.light_seed, "Light rig seed")->required();
  relight_cmd->add_option("--lights", rel.lights, "Lights in the rig");
  relight_cmd->add_option("--out", rel.out, "Output PNG")->required();
  relight_cmd->add_option("--sampler-steps", rel.steps, "Reverse diffusion steps");
  relight_cmd->add_option("--seed", rel.seed, "Sampling seed");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
  eval_cmd->add_option("--config", ev.config, "RunConfig JSON (eval section)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--report", ev.report, "Report JSON path")->required();
  eval_cmd->add_option("--split", ev.split, "heldout or train")->check(CLI::IsMember({"heldout", "train"}));
  eval_cmd->add_option("--sampler-steps", ev.steps, "Reverse diffusion steps");
  eval_cmd->add_option("--per-object", ev.per_object, "Records per object (0 = all)");
  eval_cmd->add_option("--relight-rigs", ev.relights, "Fresh light rigs per sample");
  eval_cmd->add_option("--seed", ev.seed, "Evaluation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (global_seed) {
    if (!gen.seed) gen.seed = global_seed;
    if (!tr.seed) tr.seed = global_seed;
    if (!ev.seed) ev.seed = global_seed;
    for (SampleArgs* s : {&ren, &inv, &rel})
      if (!s->seed) s->seed = global_seed;
  }

  try {
    if (*gen_cmd) return GenData(gen);
    if (*train_cmd) return TrainCmd(tr);
    if (*render_cmd) return RenderCmd(ren);
    if (*inverse_cmd) return InverseCmd(inv);
    if (*relight_cmd) return RelightCmd(rel);
    if (*eval_cmd) return EvalCmd(ev);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
