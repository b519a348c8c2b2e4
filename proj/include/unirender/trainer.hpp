// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// Joint training of both conditionals: x0-prediction MSE on the noised
// branch, plus a cycle term on inverse steps that re-renders from the
// predicted attributes.

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "unirender/attr_codec.hpp"
#include "unirender/checkpoint.hpp"
#include "unirender/diffusion.hpp"
#include "unirender/dual_net.hpp"
#include "unirender/rng.hpp"
#include "unirender/scene_gen.hpp"

namespace unirender {

struct TrainConfig {
  int64_t steps = 20000;
  int batch_size = 32;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double p_dir = 0.5;
  double p_t = 0.9;
  double lambda_cycle = 0.1;
  bool cycle_detach = false;
  SelectorMode selector = SelectorMode::kConditional;
  ScheduleConfig schedule;
  int64_t checkpoint_every = 1000;
  uint64_t seed = 0;

  void Validate() const {
    if (steps < 0) throw UsageError("train.steps must be >= 0");
    if (batch_size < 1) throw UsageError("train.batch_size must be >= 1");
    if (!(learning_rate >= 0)) throw UsageError("train.learning_rate must be >= 0");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
      throw UsageError("train.adam_beta1/adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0)) throw UsageError("train.adam_eps must be > 0");
    if (!(p_dir >= 0 && p_dir <= 1 && p_t >= 0 && p_t <= 1)) throw UsageError("train.p_dir/p_t must lie in [0, 1]");
    if (!(lambda_cycle >= 0)) throw UsageError("train.lambda_cycle must be >= 0");
    if (checkpoint_every < 1) throw UsageError("train.checkpoint_every must be >= 1");
    schedule.Make();
  }
};

struct LossBreakdown {
  double main_loss = 0;
  double cycle_loss = 0;
  double total = 0;
  Direction direction = Direction::kRendering;
  bool cycle_applied = false;
};

// ---------------------------------------------------------------------------
// Losses

/// Mean of squared differences over every element.
template <typename S>
double MeanSquaredError(const nn::Tensor<S>& pred, const nn::Tensor<S>& target) {
  if (!pred.SameShape(target)) throw DataError("MSE: shape " + pred.ShapeString() + " vs " + target.ShapeString());
  double acc = 0;
  for (Eigen::Index i = 0; i < pred.m.size(); ++i) {
    const double d = static_cast<double>(pred.m.data()[i]) - static_cast<double>(target.m.data()[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.m.size());
}

/// d MSE / d pred, scaled by `weight`.
template <typename S>
nn::Tensor<S> MeanSquaredErrorGrad(const nn::Tensor<S>& pred, const nn::Tensor<S>& target, double weight = 1.0) {
  nn::Tensor<S> g = pred;
  g.m = (pred.m - target.m) * static_cast<S>(2.0 * weight / static_cast<double>(pred.m.size()));
  return g;
}

/// Loss on the noised branch only; the clean condition branch contributes
/// nothing.
template <typename S>
double MainLoss(const typename DualNet<S>::Outputs& out, const nn::Tensor<S>& target_x0, Direction direction) {
  const auto& pred = direction == Direction::kRendering ? out.rgb : out.attr;
  if (!pred) throw UsageError("MainLoss: target head was not evaluated");
  return MeanSquaredError(*pred, target_x0);
}

// ---------------------------------------------------------------------------
// Adam

template <typename S>
struct AdamState {
  nn::ParamStore<S> m;
  nn::ParamStore<S> v;
  int64_t step = 0;

  static AdamState For(const nn::ParamStore<S>& params) { return {params.ZerosLike(), params.ZerosLike(), 0}; }
};

struct AdamHyper {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
bool AllFinite(const nn::ParamStore<S>& store, std::string* offender = nullptr) {
  for (const auto& e : store) {
    if (!e.value.allFinite()) {
      if (offender) *offender = e.spec.name;
      return false;
    }
  }
  return true;
}

/// Bias-corrected Adam. Non-finite gradients abort with params untouched.
template <typename S>
void AdamUpdate(nn::ParamStore<S>& params, const nn::ParamStore<S>& grads, AdamState<S>& state, const AdamHyper& h) {
  std::string bad;
  if (!AllFinite(grads, &bad)) throw NumericError("Adam: non-finite gradient in " + bad);
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<S>(h.beta1), b2 = static_cast<S>(h.beta2);
  const auto lr = static_cast<S>(h.learning_rate), eps = static_cast<S>(h.eps);
  const auto inv_c1 = static_cast<S>(1.0 / c1), inv_c2 = static_cast<S>(1.0 / c2);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m.Value(i);
    auto& v = state.v.Value(i);
    const auto& g = grads.Value(i);
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
    params.Value(i).array() -= lr * (m.array() * inv_c1) / ((v.array() * inv_c2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// One optimization step

/// Batch of packed attribute stacks and network-range RGB images.
template <typename S>
struct TrainBatch {
  nn::Tensor<S> attr;
  nn::Tensor<S> rgb;
};

/// All random draws of a step, fixed up front so the loss is a
/// deterministic function of the parameters.
template <typename S>
struct StepNoise {
  TimestepPlan plan;
  nn::Tensor<S> eps_attr;
  nn::Tensor<S> eps_rgb;
  std::vector<int> cycle_t;   // fresh timesteps for the cycle pass
  nn::Tensor<S> cycle_eps;    // noise for the cycle pass RGB
};

inline constexpr uint64_t kSelectorStream = 1;
inline constexpr uint64_t kNoiseStream = 2;
inline constexpr uint64_t kCycleStream = 3;
inline constexpr uint64_t kBatchStream = 4;
inline constexpr uint64_t kInitStream = 5;

template <typename S>
StepNoise<S> DrawStepNoise(uint64_t seed, int64_t step, const TrainBatch<S>& batch, const TrainConfig& cfg) {
  StepNoise<S> sn;
  Rng sel(DeriveSeed(seed, {kSelectorStream, static_cast<uint64_t>(step)}));
  sn.plan = SelectTimesteps(sel, batch.attr.n, cfg.schedule.T, cfg.p_dir, cfg.p_t, cfg.selector);
  Rng noise(DeriveSeed(seed, {kNoiseStream, static_cast<uint64_t>(step)}));
  sn.eps_attr = nn::Tensor<S>(batch.attr.channels(), batch.attr.n, batch.attr.h, batch.attr.w);
  sn.eps_rgb = nn::Tensor<S>(batch.rgb.channels(), batch.rgb.n, batch.rgb.h, batch.rgb.w);
  FillNormal(sn.eps_attr, noise);
  FillNormal(sn.eps_rgb, noise);
  // The cycle stream is separate so toggling the cycle never shifts other draws.
  Rng cyc(DeriveSeed(seed, {kCycleStream, static_cast<uint64_t>(step)}));
  sn.cycle_t.resize(batch.rgb.n);
  for (int& t : sn.cycle_t) t = static_cast<int>(cyc.UniformInt(1, cfg.schedule.T));
  sn.cycle_eps = nn::Tensor<S>(batch.rgb.channels(), batch.rgb.n, batch.rgb.h, batch.rgb.w);
  FillNormal(sn.cycle_eps, cyc);
  return sn;
}

struct LossOptions {
  double lambda_cycle = 0.1;
  bool cycle_detach = false;
};

/// Cycle term: noise the ground-truth RGB at t', condition on the predicted
/// attributes at t = 0, and compare the RGB x0 prediction with ground truth.
/// When `trace` is given it receives the forward trace for backprop.
template <typename S>
double CycleLoss(const DualNet<S>& net, const nn::ParamStore<S>& params, const nn::Tensor<S>& rgb_gt,
                 const nn::Tensor<S>& predicted_attr, std::span<const int> cycle_t, const nn::Tensor<S>& cycle_eps,
                 const NoiseSchedule& sched, typename DualNet<S>::Trace* trace = nullptr,
                 nn::Tensor<S>* rgb_pred = nullptr) {
  const nn::Tensor<S> noised = QSample(rgb_gt, cycle_t, cycle_eps, sched);
  const std::vector<int> zeros(rgb_gt.n, 0);
  auto out = net.Forward(params, predicted_attr, noised, zeros, cycle_t, Heads::Only(Branch::kRgb), trace);
  const double loss = MeanSquaredError(*out.rgb, rgb_gt);
  if (rgb_pred) *rgb_pred = std::move(*out.rgb);
  return loss;
}

/// Total loss and its parameter gradient for fixed noise. `grads` must be
/// zeroed by the caller (it is accumulated into).
template <typename S>
LossBreakdown LossAndGradient(const DualNet<S>& net, const nn::ParamStore<S>& params, const TrainBatch<S>& batch,
                              const StepNoise<S>& sn, const NoiseSchedule& sched, const LossOptions& opt,
                              std::type_identity_t<nn::ParamStore<S>>* grads) {
  const Direction dir = sn.plan.direction;
  const Branch target = TargetBranch(dir);
  const nn::Tensor<S>& target_x0 = target == Branch::kRgb ? batch.rgb : batch.attr;
  const std::vector<int> t_attr = sn.plan.AttrSteps();
  const std::vector<int> t_rgb = sn.plan.RgbSteps();
  const nn::Tensor<S> attr_in = QSample(batch.attr, t_attr, sn.eps_attr, sched);
  const nn::Tensor<S> rgb_in = QSample(batch.rgb, t_rgb, sn.eps_rgb, sched);

  typename DualNet<S>::Trace trace;
  auto out = net.Forward(params, attr_in, rgb_in, t_attr, t_rgb, Heads::Only(target), grads ? &trace : nullptr);
  const nn::Tensor<S>& pred = target == Branch::kRgb ? *out.rgb : *out.attr;

  LossBreakdown lb;
  lb.direction = dir;
  lb.main_loss = MeanSquaredError(pred, target_x0);
  nn::Tensor<S> dpred;
  if (grads) dpred = MeanSquaredErrorGrad(pred, target_x0);

  if (dir == Direction::kInverse && opt.lambda_cycle > 0) {
    lb.cycle_applied = true;
    typename DualNet<S>::Trace ctrace;
    nn::Tensor<S> rgb_pred;
    lb.cycle_loss = CycleLoss(net, params, batch.rgb, pred, sn.cycle_t, sn.cycle_eps, sched,
                              grads ? &ctrace : nullptr, &rgb_pred);
    if (grads) {
      const nn::Tensor<S> dcyc = MeanSquaredErrorGrad(rgb_pred, batch.rgb, opt.lambda_cycle);
      auto in_grads = net.Backward(params, ctrace, nullptr, &dcyc, *grads, !opt.cycle_detach);
      if (!opt.cycle_detach) dpred.m += in_grads.attr.m;
    }
  }
  lb.total = lb.main_loss + (lb.cycle_applied ? opt.lambda_cycle * lb.cycle_loss : 0.0);
  if (grads) {
    if (target == Branch::kRgb) {
      net.Backward(params, trace, nullptr, &dpred, *grads);
    } else {
      net.Backward(params, trace, &dpred, nullptr, *grads);
    }
  }
  return lb;
}

template <typename S>
LossBreakdown TrainStep(const DualNet<S>& net, nn::ParamStore<S>& params, AdamState<S>& adam,
                        const TrainBatch<S>& batch, int64_t step, const TrainConfig& cfg, const NoiseSchedule& sched) {
  const StepNoise<S> sn = DrawStepNoise(cfg.seed, step, batch, cfg);
  nn::ParamStore<S> grads = params.ZerosLike();
  const LossBreakdown lb =
      LossAndGradient(net, params, batch, sn, sched, LossOptions{cfg.lambda_cycle, cfg.cycle_detach}, &grads);
  if (!std::isfinite(lb.total)) throw NumericError("non-finite loss at step " + std::to_string(step));
  try {
    AdamUpdate(params, grads, adam, AdamHyper{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
  }
  return lb;
}

// ---------------------------------------------------------------------------
// Data and the training loop

/// Encoded training pairs held in memory.
struct TrainingSet {
  std::vector<PlanarImage> attrs;  // packed attribute stacks
  std::vector<PlanarImage> rgbs;   // network-range RGB
  size_t size() const { return attrs.size(); }

  void Add(const FrameBundle& bundle) {
    attrs.push_back(PackAttributes(bundle).data);
    rgbs.push_back(EncodeRgb(bundle.rgb));
  }
};

inline TrainingSet LoadTrainingSet(const DatasetIndex& index, Split split = Split::kTrain) {
  const auto& recs = index.Records(split);
  TrainingSet set;
  set.attrs.resize(recs.size());
  set.rgbs.resize(recs.size());
  ParallelFor(recs.size(), [&](size_t i) {
    const auto [bundle, meta] = ReadSample(index.root / recs[i].file);
    set.attrs[i] = PackAttributes(bundle).data;
    set.rgbs[i] = EncodeRgb(bundle.rgb);
  });
  return set;
}

/// Batch for a step: indices drawn with replacement from a per-step stream,
/// so any step can be reproduced without replaying earlier ones.
template <typename S>
TrainBatch<S> MakeBatch(const TrainingSet& data, int64_t step, const TrainConfig& cfg) {
  if (data.size() == 0) throw DataError("training set is empty");
  Rng rng(DeriveSeed(cfg.seed, {kBatchStream, static_cast<uint64_t>(step)}));
  std::vector<const PlanarImage*> a, r;
  for (int k = 0; k < cfg.batch_size; ++k) {
    const auto i = static_cast<size_t>(rng.UniformInt(0, static_cast<int64_t>(data.size()) - 1));
    a.push_back(&data.attrs[i]);
    r.push_back(&data.rgbs[i]);
  }
  return {nn::Batch<S>(a), nn::Batch<S>(r)};
}

inline nn::ParamStore<float> InitialParams(const DualNet<float>& net, uint64_t seed) {
  Rng rng(DeriveSeed(seed, {kInitStream}));
  return net.Init(rng);
}

inline constexpr const char* kMetricsHeader = "step,main_loss,cycle_loss,total,direction";

struct TrainResult {
  int64_t final_step = 0;
  std::filesystem::path checkpoint;
  std::vector<LossBreakdown> history;  // losses of the steps run in this call
};

/// Runs the loop from scratch or from `<ckpt_dir>/latest.urck` when resume
/// is set. Writes latest.urck every checkpoint_every steps and at the end, and
/// appends to metrics.csv. `stop_after` (if >= 0) interrupts the run after that
/// many steps as if the process had been killed right after a checkpoint.
inline TrainResult Train(const TrainConfig& cfg, const ArchConfig& arch, const TrainingSet& data,
                         const std::filesystem::path& ckpt_dir, bool resume,
                         const std::function<void(int64_t, const LossBreakdown&)>& on_step = {},
                         int64_t stop_after = -1) {
  cfg.Validate();
  namespace fs = std::filesystem;
  fs::create_directories(ckpt_dir);
  const fs::path latest = ckpt_dir / "latest.urck";
  const fs::path log_path = ckpt_dir / "metrics.csv";
  const DualNet<float> net(arch);
  const NoiseSchedule sched = cfg.schedule.Make();
  if (arch.max_timestep < sched.T()) throw UsageError("arch.max_timestep must be >= schedule T");

  nn::ParamStore<float> params;
  AdamState<float> adam;
  int64_t start = 0;
  if (resume && fs::exists(latest)) {
    Checkpoint ck = LoadCheckpoint(latest);
    if (!(ck.arch == arch)) throw UsageError("resume: checkpoint architecture differs from config");
    if (!(ck.schedule == cfg.schedule)) throw UsageError("resume: checkpoint schedule differs from config");
    if (!ck.adam_m) throw DataError("resume: checkpoint has no optimizer state");
    params = std::move(ck.params);
    adam = {std::move(*ck.adam_m), std::move(*ck.adam_v), ck.train_step};
    start = ck.train_step;
  } else {
    params = InitialParams(net, cfg.seed);
    adam = AdamState<float>::For(params);
  }

  // Keep log rows of steps before `start`, drop anything newer.
  std::vector<std::string> kept;
  if (start > 0 && fs::exists(log_path)) {
    std::ifstream is(log_path);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (!line.empty() && std::stoll(line.substr(0, line.find(','))) < start) kept.push_back(line);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  log << kMetricsHeader << "\n";
  for (const auto& l : kept) log << l << "\n";

  auto save = [&](int64_t step) {
    Checkpoint ck{arch, cfg.schedule, step, params, adam.m, adam.v};
    SaveCheckpoint(latest, ck);
    log.flush();
  };

  TrainResult result;
  if (start == 0) save(0);
  int64_t ran = 0;
  for (int64_t step = start; step < cfg.steps; ++step) {
    const TrainBatch<float> batch = MakeBatch<float>(data, step, cfg);
    const LossBreakdown lb = TrainStep(net, params, adam, batch, step, cfg, sched);
    result.history.push_back(lb);
    log << step << "," << lb.main_loss << "," << lb.cycle_loss << "," << lb.total << "," << DirectionName(lb.direction)
        << "\n";
    if (on_step) on_step(step, lb);
    const int64_t done = step + 1;
    if (done % cfg.checkpoint_every == 0 || done == cfg.steps) save(done);
    if (stop_after >= 0 && ++ran >= stop_after) {
      save(done);
      result.final_step = done;
      result.checkpoint = latest;
      return result;
    }
  }
  result.final_step = std::max<int64_t>(start, cfg.steps);
  result.checkpoint = latest;
  return result;
}

}  // namespace unirender
