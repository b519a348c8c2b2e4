// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "unirender/common.hpp"
#include "unirender/pbr.hpp"

namespace unirender::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batched feature map stored channel-major as [C][N][H][W]: row c holds
/// channel c of every sample, so convolutions over the whole batch are a
/// single GEMM.
template <typename S>
struct Tensor {
  int n = 0, h = 0, w = 0;
  Mat<S> m;

  Tensor() = default;
  Tensor(int channels, int n_, int h_, int w_) : n(n_), h(h_), w(w_), m(Mat<S>::Zero(channels, Index(n_, h_, w_))) {}

  static Eigen::Index Index(int n, int h, int w) { return static_cast<Eigen::Index>(n) * h * w; }

  int channels() const { return static_cast<int>(m.rows()); }
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(h) * w; }
  Eigen::Index cols() const { return m.cols(); }
  bool SameShape(const Tensor& o) const { return n == o.n && h == o.h && w == o.w && m.rows() == o.m.rows(); }
  std::string ShapeString() const {
    return "(" + std::to_string(n) + "," + std::to_string(channels()) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }

  S& at(int c, int sample, Eigen::Index p) { return m(c, sample * pixels() + p); }
  S at(int c, int sample, Eigen::Index p) const { return m(c, sample * pixels() + p); }
};

/// Stacks planar images (all the same shape) into a batch tensor.
template <typename S>
Tensor<S> Batch(const std::vector<const PlanarImage*>& images) {
  if (images.empty()) throw DataError("Batch: empty image list");
  const PlanarImage& first = *images.front();
  Tensor<S> t(first.channels, static_cast<int>(images.size()), first.height, first.width);
  for (size_t k = 0; k < images.size(); ++k) {
    const PlanarImage& img = *images[k];
    if (img.channels != first.channels || img.width != first.width || img.height != first.height)
      throw DataError("Batch: images differ in shape");
    for (int c = 0; c < img.channels; ++c)
      for (size_t p = 0; p < img.pixels(); ++p) t.at(c, static_cast<int>(k), static_cast<Eigen::Index>(p)) = img.at(c, p);
  }
  return t;
}

template <typename S>
PlanarImage Unbatch(const Tensor<S>& t, int sample) {
  PlanarImage img(t.w, t.h, t.channels());
  for (int c = 0; c < t.channels(); ++c)
    for (size_t p = 0; p < img.pixels(); ++p) img.at(c, p) = static_cast<float>(t.at(c, sample, static_cast<Eigen::Index>(p)));
  return img;
}

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 1;
  std::vector<int> shape;  // logical shape, e.g. {out, in, 3, 3}
};

/// Named parameter tensors in a fixed order. Gradients and optimizer moments
/// use the same structure.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    ParamSpec spec;
    Mat<S> value;
  };

  ParamStore() = default;
  explicit ParamStore(const std::vector<ParamSpec>& specs) {
    for (const auto& s : specs) Add(s);
  }

  size_t Add(const ParamSpec& spec) {
    if (lookup_.count(spec.name)) throw UsageError("duplicate parameter " + spec.name);
    lookup_[spec.name] = entries_.size();
    entries_.push_back({spec, Mat<S>::Zero(spec.rows, spec.cols)});
    return entries_.size() - 1;
  }

  size_t size() const { return entries_.size(); }
  Entry& operator[](size_t i) { return entries_[i]; }
  const Entry& operator[](size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool Contains(const std::string& name) const { return lookup_.count(name) != 0; }
  size_t IndexOf(const std::string& name) const {
    auto it = lookup_.find(name);
    if (it == lookup_.end()) throw DataError("unknown parameter " + name);
    return it->second;
  }
  Mat<S>& Value(const std::string& name) { return entries_[IndexOf(name)].value; }
  const Mat<S>& Value(const std::string& name) const { return entries_[IndexOf(name)].value; }
  Mat<S>& Value(size_t i) { return entries_[i].value; }
  const Mat<S>& Value(size_t i) const { return entries_[i].value; }

  size_t ScalarCount() const {
    size_t n = 0;
    for (const auto& e : entries_) n += static_cast<size_t>(e.value.size());
    return n;
  }

  ParamStore ZerosLike() const {
    ParamStore z = *this;
    for (auto& e : z.entries_) e.value.setZero();
    return z;
  }

  template <typename T>
  ParamStore<T> Cast() const {
    ParamStore<T> out;
    for (const auto& e : entries_) {
      const size_t i = out.Add(e.spec);
      out.Value(i) = e.value.template cast<T>();
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> lookup_;
};

}  // namespace unirender::nn
