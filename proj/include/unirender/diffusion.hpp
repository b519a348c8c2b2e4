// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "unirender/dual_net.hpp"
#include "unirender/nn/tensor.hpp"
#include "unirender/rng.hpp"

namespace unirender {

/// Linear-beta DDPM schedule. Index 0 is the clean signal: alpha_bar[0] = 1
/// and beta[0] is unused (stored as 0).
class NoiseSchedule {
 public:
  NoiseSchedule(int steps, double beta_min, double beta_max) : steps_(steps), beta_min_(beta_min), beta_max_(beta_max) {
    if (steps < 1) throw UsageError("schedule: T must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
      throw UsageError("schedule: require 0 < beta_min <= beta_max < 1");
    beta_.assign(steps + 1, 0.0);
    alpha_bar_.assign(steps + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
      beta_[t] = beta_min + (beta_max - beta_min) * frac;
      alpha_bar_[t] = alpha_bar_[t - 1] * (1.0 - beta_[t]);
    }
  }

  int T() const { return steps_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  double beta(int t) const { return beta_.at(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t); }
  double Snr(int t) const { return alpha_bar_.at(t) / (1.0 - alpha_bar_.at(t)); }

 private:
  int steps_;
  double beta_min_, beta_max_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

inline NoiseSchedule MakeSchedule(int steps = 200, double beta_min = 1e-4, double beta_max = 0.02) {
  return NoiseSchedule(steps, beta_min, beta_max);
}

template <typename S>
void FillNormal(nn::Tensor<S>& t, Rng& rng) {
  for (Eigen::Index i = 0; i < t.m.size(); ++i) t.m.data()[i] = static_cast<S>(rng.Normal());
}

/// Per-sample standard normal noise; sample k draws only from rngs[k], so the
/// result does not depend on how samples are grouped into batches.
template <typename S>
nn::Tensor<S> NormalLike(const nn::Tensor<S>& like, std::span<Rng> rngs) {
  if (rngs.size() != static_cast<size_t>(like.n)) throw UsageError("NormalLike: one generator per sample required");
  nn::Tensor<S> t(like.channels(), like.n, like.h, like.w);
  for (int s = 0; s < like.n; ++s)
    for (int c = 0; c < like.channels(); ++c)
      for (Eigen::Index p = 0; p < like.pixels(); ++p) t.at(c, s, p) = static_cast<S>(rngs[s].Normal());
  return t;
}

/// sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps.
template <typename S>
nn::Tensor<S> QSample(const nn::Tensor<S>& x0, int t, const nn::Tensor<S>& eps, const NoiseSchedule& sched) {
  if (!x0.SameShape(eps)) throw DataError("QSample: eps shape " + eps.ShapeString() + " != x0 shape " + x0.ShapeString());
  if (t < 0 || t > sched.T()) throw UsageError("QSample: t out of range");
  nn::Tensor<S> out = x0;
  if (t == 0) return out;
  const auto a = static_cast<S>(std::sqrt(sched.alpha_bar(t)));
  const auto b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar(t)));
  out.m = a * x0.m + b * eps.m;
  return out;
}

/// Batched variant with one timestep per sample.
template <typename S>
nn::Tensor<S> QSample(const nn::Tensor<S>& x0, std::span<const int> ts, const nn::Tensor<S>& eps,
                      const NoiseSchedule& sched) {
  if (!x0.SameShape(eps)) throw DataError("QSample: eps shape " + eps.ShapeString() + " != x0 shape " + x0.ShapeString());
  if (ts.size() != static_cast<size_t>(x0.n)) throw DataError("QSample: one timestep per sample required");
  nn::Tensor<S> out = x0;
  const Eigen::Index px = x0.pixels();
  for (int s = 0; s < x0.n; ++s) {
    const int t = ts[s];
    if (t < 0 || t > sched.T()) throw UsageError("QSample: t out of range");
    if (t == 0) continue;
    const auto a = static_cast<S>(std::sqrt(sched.alpha_bar(t)));
    const auto b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar(t)));
    for (int c = 0; c < x0.channels(); ++c)
      out.m.row(c).segment(s * px, px) = a * x0.m.row(c).segment(s * px, px) + b * eps.m.row(c).segment(s * px, px);
  }
  return out;
}

template <typename S>
struct DiffusionState {
  nn::Tensor<S> x0;
  nn::Tensor<S> x_t;
  nn::Tensor<S> eps;
  int t = 0;
};

template <typename S>
DiffusionState<S> MakeState(nn::Tensor<S> x0, int t, nn::Tensor<S> eps, const NoiseSchedule& sched) {
  DiffusionState<S> st{std::move(x0), {}, std::move(eps), t};
  st.x_t = QSample(st.x0, t, st.eps, sched);
  return st;
}

enum class Direction { kRendering, kInverse };

inline const char* DirectionName(Direction d) { return d == Direction::kRendering ? "rendering" : "inverse"; }

/// The branch that is denoised in a direction (the other one is the clean
/// condition at t = 0).
inline Branch TargetBranch(Direction d) { return d == Direction::kRendering ? Branch::kRgb : Branch::kAttr; }

struct TimestepPair {
  int t_attr = 0;
  int t_rgb = 0;

  bool ExactlyOneClean() const { return (t_attr == 0) != (t_rgb == 0); }
  friend bool operator==(const TimestepPair&, const TimestepPair&) = default;
};

enum class SelectorMode {
  kConditional,  // one branch always at t = 0
  kAlgorithm1,   // literal timestep-matrix pseudo-code; may break the invariant
};

struct TimestepPlan {
  Direction direction = Direction::kRendering;
  std::vector<TimestepPair> pairs;

  std::vector<int> AttrSteps() const {
    std::vector<int> v;
    for (const auto& p : pairs) v.push_back(p.t_attr);
    return v;
  }
  std::vector<int> RgbSteps() const {
    std::vector<int> v;
    for (const auto& p : pairs) v.push_back(p.t_rgb);
    return v;
  }
  std::vector<int> TargetSteps() const { return direction == Direction::kRendering ? RgbSteps() : AttrSteps(); }
};

/// Draws one direction per batch (rendering with probability p_dir). The
/// noised branch gets t~ = U{1..T} with probability p_t, otherwise T.
inline TimestepPlan SelectTimesteps(Rng& rng, int batch_size, int T, double p_dir, double p_t,
                                    SelectorMode mode = SelectorMode::kConditional) {
  if (!(p_dir >= 0 && p_dir <= 1 && p_t >= 0 && p_t <= 1)) throw UsageError("SelectTimesteps: probabilities must lie in [0,1]");
  TimestepPlan plan;
  plan.pairs.resize(batch_size);
  if (mode == SelectorMode::kAlgorithm1) {
    const auto noised_row = rng.UniformInt(0, 1);  // 0 = attributes, 1 = RGB
    plan.direction = noised_row == 1 ? Direction::kRendering : Direction::kInverse;
    for (auto& pair : plan.pairs) {
      const int drawn = static_cast<int>(rng.UniformInt(0, T));
      const int other = rng.Bernoulli(0.5) ? 0 : T;
      pair = noised_row == 1 ? TimestepPair{other, drawn} : TimestepPair{drawn, other};
    }
    return plan;
  }
  plan.direction = rng.Bernoulli(p_dir) ? Direction::kRendering : Direction::kInverse;
  for (auto& pair : plan.pairs) {
    const int t = rng.Bernoulli(p_t) ? static_cast<int>(rng.UniformInt(1, T)) : T;
    pair = plan.direction == Direction::kRendering ? TimestepPair{0, t} : TimestepPair{t, 0};
  }
  return plan;
}

/// Posterior q(x_s | x_t, x0_hat) mean and standard deviation coefficients
/// for s < t. With s = t - 1 these are the standard DDPM ancestral values.
struct PosteriorCoefficients {
  double x0_coef = 0;
  double xt_coef = 0;
  double sigma = 0;
};

inline PosteriorCoefficients Posterior(const NoiseSchedule& sched, int t, int s) {
  if (t < 1 || t > sched.T()) throw UsageError("posterior step requires 1 <= t <= T");
  if (s < 0 || s >= t) throw UsageError("posterior step requires 0 <= s < t");
  const double ab_t = sched.alpha_bar(t);
  const double ab_s = sched.alpha_bar(s);
  const double beta = s == t - 1 ? sched.beta(t) : 1.0 - ab_t / ab_s;
  PosteriorCoefficients c;
  c.x0_coef = std::sqrt(ab_s) * beta / (1.0 - ab_t);
  c.xt_coef = std::sqrt(1.0 - beta) * (1.0 - ab_s) / (1.0 - ab_t);
  c.sigma = s == 0 ? 0.0 : std::sqrt(beta * (1.0 - ab_s) / (1.0 - ab_t));
  return c;
}

/// One reverse step t -> s (default s = t - 1) driven by an x0 prediction.
template <typename S>
nn::Tensor<S> PosteriorStep(const nn::Tensor<S>& x_t, const nn::Tensor<S>& x0_hat, int t, const NoiseSchedule& sched,
                            std::span<Rng> rngs, int s = -1) {
  if (t == 0) throw UsageError("PosteriorStep: t = 0 has no reverse step");
  if (!x_t.SameShape(x0_hat)) throw DataError("PosteriorStep: shape mismatch");
  const PosteriorCoefficients c = Posterior(sched, t, s < 0 ? t - 1 : s);
  nn::Tensor<S> out = x_t;
  out.m = static_cast<S>(c.x0_coef) * x0_hat.m + static_cast<S>(c.xt_coef) * x_t.m;
  if (c.sigma > 0.0) out.m += static_cast<S>(c.sigma) * NormalLike(x_t, rngs).m;
  return out;
}

/// Descending timestep sequence for a sampler with `steps` network calls,
/// ending at 0. steps = T visits every timestep.
inline std::vector<int> SamplerTimesteps(int T, int steps) {
  if (steps < 1 || steps > T) throw UsageError("sampler steps must lie in [1, T]");
  std::vector<int> ts;
  for (int i = steps; i >= 0; --i) {
    const int t = static_cast<int>(std::lround(static_cast<double>(i) * T / steps));
    if (ts.empty() || ts.back() != t) ts.push_back(t);
  }
  return ts;
}

/// Anything that maps (attr_in, rgb_in, t_attr, t_rgb) to the x0 prediction
/// of one branch.
template <typename D, typename S>
concept Denoiser = requires(const D& d, const nn::Tensor<S>& a, const nn::Tensor<S>& r, std::span<const int> t,
                            Branch b) {
  { d.Predict(a, r, t, t, b) } -> std::convertible_to<nn::Tensor<S>>;
};

/// Adapts a DualNet and its parameters to the Denoiser interface.
template <typename S>
struct NetDenoiser {
  const DualNet<S>& net;
  const nn::ParamStore<S>& params;

  nn::Tensor<S> Predict(const nn::Tensor<S>& attr, const nn::Tensor<S>& rgb, std::span<const int> t_attr,
                        std::span<const int> t_rgb, Branch target) const {
    auto out = net.Forward(params, attr, rgb, t_attr, t_rgb, Heads::Only(target));
    return target == Branch::kAttr ? std::move(*out.attr) : std::move(*out.rgb);
  }
};

/// Ancestral sampling of the target branch with the condition branch held
/// clean at t = 0. `target_channels` selects the target tensor width. x0
/// predictions are clipped to the data range [-1, 1] before each step.
template <typename S, Denoiser<S> D>
nn::Tensor<S> SampleLoop(const D& net, const nn::Tensor<S>& condition, Direction direction, int target_channels,
                         const NoiseSchedule& sched, std::span<Rng> rngs, int steps) {
  const int n = condition.n;
  nn::Tensor<S> x(target_channels, n, condition.h, condition.w);
  x = NormalLike(x, rngs);
  const std::vector<int> ts = SamplerTimesteps(sched.T(), steps);
  const std::vector<int> zeros(n, 0);
  for (size_t i = 0; i + 1 < ts.size(); ++i) {
    const int t = ts[i];
    const std::vector<int> tv(n, t);
    nn::Tensor<S> x0_hat = direction == Direction::kRendering
                               ? net.Predict(condition, x, zeros, tv, Branch::kRgb)
                               : net.Predict(x, condition, tv, zeros, Branch::kAttr);
    x0_hat.m = x0_hat.m.cwiseMax(S(-1)).cwiseMin(S(1));
    x = PosteriorStep(x, x0_hat, t, sched, rngs, ts[i + 1]);
  }
  return x;
}

/// Per-sample generators forked from one seed.
inline std::vector<Rng> SampleRngs(uint64_t seed, std::span<const uint64_t> sample_keys) {
  std::vector<Rng> out;
  out.reserve(sample_keys.size());
  for (uint64_t k : sample_keys) out.emplace_back(DeriveSeed(seed, {k}));
  return out;
}

}  // namespace unirender
