// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "unirender/trainer.hpp"

namespace unirender::testing {

struct GradCheckOptions {
  Direction direction = Direction::kInverse;
  double lambda_cycle = 0.1;
  bool cycle_detach = false;
  int probes = 256;
  double step = 1e-5;
  // Denominator floor for the relative error, so gradients that are zero up
  // to rounding compare on an absolute scale.
  double floor = 1e-6;
  uint64_t seed = 7;
};

struct GradCheckResult {
  int probed = 0;
  int tensors_covered = 0;
  double max_rel_error = 0;
  std::string worst;
  double loss = 0;
};

inline ArchConfig TinyArch() {
  ArchConfig a;
  a.image_size = 8;
  a.base_width = 8;
  a.levels = 2;
  a.time_embed_dim = 16;
  return a;
}

/// Analytic total-loss gradients against central differences of the same
/// loss, in double precision. Every parameter (links included) is perturbed
/// away from its initial value so no path is trivially zero.
inline GradCheckResult RunGradCheck(const GradCheckOptions& o) {
  const ArchConfig arch = TinyArch();
  const DualNet<double> net(arch);
  Rng rng(o.seed);
  nn::ParamStore<double> params = net.Init(rng);
  for (auto& e : params)
    for (Eigen::Index k = 0; k < e.value.size(); ++k) e.value.data()[k] += 0.1 * rng.Normal();

  const int n = 2;
  TrainBatch<double> batch{nn::Tensor<double>(arch.attr_channels, n, arch.image_size, arch.image_size),
                           nn::Tensor<double>(arch.rgb_channels, n, arch.image_size, arch.image_size)};
  for (Eigen::Index k = 0; k < batch.attr.m.size(); ++k) batch.attr.m.data()[k] = rng.Uniform(-1, 1);
  for (Eigen::Index k = 0; k < batch.rgb.m.size(); ++k) batch.rgb.m.data()[k] = rng.Uniform(-1, 1);

  TrainConfig cfg;
  cfg.p_dir = o.direction == Direction::kRendering ? 1.0 : 0.0;
  cfg.p_t = 1.0;
  const StepNoise<double> sn = DrawStepNoise(o.seed, 0, batch, cfg);
  const NoiseSchedule sched = cfg.schedule.Make();
  const LossOptions lo{o.lambda_cycle, o.cycle_detach};

  nn::ParamStore<double> grads = params.ZerosLike();
  GradCheckResult res;
  res.loss = LossAndGradient(net, params, batch, sn, sched, lo, &grads).total;

  // Round-robin over tensors first so every tensor is probed, then random.
  std::vector<std::pair<size_t, Eigen::Index>> picks;
  for (int p = 0; p < o.probes; ++p) {
    const size_t ti = p < static_cast<int>(params.size()) ? static_cast<size_t>(p)
                                                          : static_cast<size_t>(rng.UniformInt(0, params.size() - 1));
    picks.emplace_back(ti, rng.UniformInt(0, params.Value(ti).size() - 1));
  }
  std::vector<bool> covered(params.size(), false);
  for (const auto& [ti, k] : picks) {
    double& w = params.Value(ti).data()[k];
    const double w0 = w;
    w = w0 + o.step;
    const double lp = LossAndGradient<double>(net, params, batch, sn, sched, lo, nullptr).total;
    w = w0 - o.step;
    const double lm = LossAndGradient<double>(net, params, batch, sn, sched, lo, nullptr).total;
    w = w0;
    const double numeric = (lp - lm) / (2 * o.step);
    const double analytic = grads.Value(ti).data()[k];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), o.floor});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst = params[ti].spec.name + "[" + std::to_string(k) + "] analytic " + std::to_string(analytic) +
                  " numeric " + std::to_string(numeric);
    }
    ++res.probed;
    covered[ti] = true;
  }
  res.tensors_covered = static_cast<int>(std::count(covered.begin(), covered.end(), true));
  return res;
}

}  // namespace unirender::testing
