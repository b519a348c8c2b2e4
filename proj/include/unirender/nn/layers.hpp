// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// Forward/backward kernels for the handful of layers the denoiser needs.
// Backward functions accumulate (+=) into parameter gradients and return the
// input gradient.

#pragma once

#include <cmath>
#include <numeric>

#include "unirender/nn/tensor.hpp"

namespace unirender::nn {

inline constexpr double kGroupNormEps = 1e-5;

/// Group count used for a channel width: gcd(C, 8).
inline int GroupsFor(int channels) { return std::gcd(channels, 8); }

// ---------------------------------------------------------------------------
// Convolution (kernel 3 with zero padding 1 and stride 1 or 2; kernel 1 with stride 1)

template <typename S>
Mat<S> Im2Col(const Tensor<S>& x, int stride, int ho, int wo) {
  const int cin = x.channels();
  const Eigen::Index out_px = static_cast<Eigen::Index>(ho) * wo;
  Mat<S> cols = Mat<S>::Zero(cin * 9, x.n * out_px);
  for (int c = 0; c < cin; ++c) {
    const S* src = x.m.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        S* dst = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int s = 0; s < x.n; ++s) {
          const S* img = src + s * x.pixels();
          S* out = dst + s * out_px;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= x.h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride + kx - 1;
              if (ix >= 0 && ix < x.w) out[oy * wo + ox] = img[iy * x.w + ix];
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename S>
void Col2ImAdd(const Mat<S>& cols, int stride, int ho, int wo, Tensor<S>& dx) {
  const Eigen::Index out_px = static_cast<Eigen::Index>(ho) * wo;
  for (int c = 0; c < dx.channels(); ++c) {
    S* dst = dx.m.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const S* src = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int s = 0; s < dx.n; ++s) {
          S* img = dst + s * dx.pixels();
          const S* in = src + s * out_px;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= dx.h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride + kx - 1;
              if (ix >= 0 && ix < dx.w) img[iy * dx.w + ix] += in[oy * wo + ox];
            }
          }
        }
      }
    }
  }
}

template <typename S>
Tensor<S> ConvForward(const Mat<S>& weight, const Mat<S>& bias, const Tensor<S>& x, int kernel, int stride) {
  const int ho = kernel == 3 ? (x.h - 1) / stride + 1 : x.h;
  const int wo = kernel == 3 ? (x.w - 1) / stride + 1 : x.w;
  Tensor<S> y;
  y.n = x.n;
  y.h = ho;
  y.w = wo;
  if (kernel == 1) {
    y.m.noalias() = weight * x.m;
  } else {
    y.m.noalias() = weight * Im2Col(x, stride, ho, wo);
  }
  y.m.colwise() += bias.col(0);
  return y;
}

/// Returns dx when need_dx, otherwise an empty tensor.
template <typename S>
Tensor<S> ConvBackward(const Mat<S>& weight, const Tensor<S>& x, const Tensor<S>& dy, int kernel, int stride,
                       Mat<S>& dweight, Mat<S>& dbias, bool need_dx) {
  dbias.col(0) += dy.m.rowwise().sum();
  Tensor<S> dx;
  if (kernel == 1) {
    dweight.noalias() += dy.m * x.m.transpose();
    if (need_dx) {
      dx.n = x.n;
      dx.h = x.h;
      dx.w = x.w;
      dx.m.noalias() = weight.transpose() * dy.m;
    }
    return dx;
  }
  dweight.noalias() += dy.m * Im2Col(x, stride, dy.h, dy.w).transpose();
  if (need_dx) {
    dx = Tensor<S>(x.channels(), x.n, x.h, x.w);
    const Mat<S> dcols = weight.transpose() * dy.m;
    Col2ImAdd(dcols, stride, dy.h, dy.w, dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Group normalization

template <typename S>
struct GroupNormTrace {
  Mat<S> xhat;
  Mat<S> rstd;  // n x groups
};

template <typename S>
Tensor<S> GroupNormForward(const Mat<S>& gamma, const Mat<S>& beta, const Tensor<S>& x, GroupNormTrace<S>* trace) {
  const int channels = x.channels();
  const int groups = GroupsFor(channels);
  const int per_group = channels / groups;
  const Eigen::Index px = x.pixels();
  const double count = static_cast<double>(per_group) * static_cast<double>(px);
  Tensor<S> y(channels, x.n, x.h, x.w);
  Mat<S> xhat(channels, x.cols());
  Mat<S> rstd(x.n, groups);
  for (int s = 0; s < x.n; ++s) {
    for (int g = 0; g < groups; ++g) {
      double sum = 0, sq = 0;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        const auto seg = x.m.row(c).segment(s * px, px);
        sum += static_cast<double>(seg.sum());
        sq += static_cast<double>(seg.squaredNorm());
      }
      const double mean = sum / count;
      const double var = std::max(sq / count - mean * mean, 0.0);
      const auto r = static_cast<S>(1.0 / std::sqrt(var + kGroupNormEps));
      rstd(s, g) = r;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        auto xh = xhat.row(c).segment(s * px, px);
        xh = (x.m.row(c).segment(s * px, px).array() - static_cast<S>(mean)) * r;
        y.m.row(c).segment(s * px, px) = (xh.array() * gamma(c, 0) + beta(c, 0)).matrix();
      }
    }
  }
  if (trace) {
    trace->xhat = std::move(xhat);
    trace->rstd = std::move(rstd);
  }
  return y;
}

template <typename S>
Tensor<S> GroupNormBackward(const Mat<S>& gamma, const GroupNormTrace<S>& trace, const Tensor<S>& dy, Mat<S>& dgamma,
                            Mat<S>& dbeta) {
  const int channels = dy.channels();
  const int groups = GroupsFor(channels);
  const int per_group = channels / groups;
  const Eigen::Index px = dy.pixels();
  const S count = static_cast<S>(per_group * px);
  Tensor<S> dx(channels, dy.n, dy.h, dy.w);
  for (int c = 0; c < channels; ++c) {
    dgamma(c, 0) += dy.m.row(c).cwiseProduct(trace.xhat.row(c)).sum();
    dbeta(c, 0) += dy.m.row(c).sum();
  }
  for (int s = 0; s < dy.n; ++s) {
    for (int g = 0; g < groups; ++g) {
      S sum_d = 0, sum_dx = 0;
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        const auto d = dy.m.row(c).segment(s * px, px);
        const auto xh = trace.xhat.row(c).segment(s * px, px);
        sum_d += gamma(c, 0) * d.sum();
        sum_dx += gamma(c, 0) * d.dot(xh);
      }
      const S r = trace.rstd(s, g);
      for (int c = g * per_group; c < (g + 1) * per_group; ++c) {
        const auto d = dy.m.row(c).segment(s * px, px).array();
        const auto xh = trace.xhat.row(c).segment(s * px, px).array();
        dx.m.row(c).segment(s * px, px) = ((d * gamma(c, 0) * count - sum_d - xh * sum_dx) * (r / count)).matrix();
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// SiLU  x * sigmoid(x)

template <typename S>
Mat<S> Silu(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return v / (S(1) + std::exp(-v)); });
}

template <typename S>
Mat<S> SiluBackward(const Mat<S>& pre, const Mat<S>& dy) {
  return dy.binaryExpr(pre, [](S d, S v) {
    const S sig = S(1) / (S(1) + std::exp(-v));
    return d * sig * (S(1) + v * (S(1) - sig));
  });
}

template <typename S>
Tensor<S> Silu(const Tensor<S>& x) {
  Tensor<S> y;
  y.n = x.n;
  y.h = x.h;
  y.w = x.w;
  y.m = Silu(x.m);
  return y;
}

template <typename S>
Tensor<S> SiluBackward(const Tensor<S>& pre, const Tensor<S>& dy) {
  Tensor<S> dx;
  dx.n = dy.n;
  dx.h = dy.h;
  dx.w = dy.w;
  dx.m = SiluBackward(pre.m, dy.m);
  return dx;
}

// ---------------------------------------------------------------------------
// Nearest 2x upsampling and channel concatenation

template <typename S>
Tensor<S> Upsample2x(const Tensor<S>& x) {
  Tensor<S> y(x.channels(), x.n, x.h * 2, x.w * 2);
  for (int c = 0; c < x.channels(); ++c)
    for (int s = 0; s < x.n; ++s)
      for (int iy = 0; iy < y.h; ++iy)
        for (int ix = 0; ix < y.w; ++ix) y.at(c, s, iy * y.w + ix) = x.at(c, s, (iy / 2) * x.w + ix / 2);
  return y;
}

template <typename S>
Tensor<S> Upsample2xBackward(const Tensor<S>& dy) {
  Tensor<S> dx(dy.channels(), dy.n, dy.h / 2, dy.w / 2);
  for (int c = 0; c < dy.channels(); ++c)
    for (int s = 0; s < dy.n; ++s)
      for (int iy = 0; iy < dy.h; ++iy)
        for (int ix = 0; ix < dy.w; ++ix) dx.at(c, s, (iy / 2) * dx.w + ix / 2) += dy.at(c, s, iy * dy.w + ix);
  return dx;
}

template <typename S>
Tensor<S> Concat(const Tensor<S>& a, const Tensor<S>& b) {
  Tensor<S> y;
  y.n = a.n;
  y.h = a.h;
  y.w = a.w;
  y.m.resize(a.m.rows() + b.m.rows(), a.m.cols());
  y.m << a.m, b.m;
  return y;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> SplitChannels(const Tensor<S>& x, int first) {
  Tensor<S> a, b;
  a.n = b.n = x.n;
  a.h = b.h = x.h;
  a.w = b.w = x.w;
  a.m = x.m.topRows(first);
  b.m = x.m.bottomRows(x.m.rows() - first);
  return {std::move(a), std::move(b)};
}

/// Adds a per-sample, per-channel vector (C x N) to every pixel.
template <typename S>
void AddPerSample(Tensor<S>& x, const Mat<S>& v) {
  const Eigen::Index px = x.pixels();
  for (int c = 0; c < x.channels(); ++c)
    for (int s = 0; s < x.n; ++s) x.m.row(c).segment(s * px, px).array() += v(c, s);
}

template <typename S>
Mat<S> SumPerSample(const Tensor<S>& dx) {
  Mat<S> v(dx.channels(), dx.n);
  const Eigen::Index px = dx.pixels();
  for (int c = 0; c < dx.channels(); ++c)
    for (int s = 0; s < dx.n; ++s) v(c, s) = dx.m.row(c).segment(s * px, px).sum();
  return v;
}

}  // namespace unirender::nn
