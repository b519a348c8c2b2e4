// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// Two-branch x0-predicting denoiser.
//
// Each branch (attributes, RGB) is a small encoder-decoder with skip
// connections and its own timestep embedding. The bottleneck feature of each
// encoder is projected by a 1x1 "cross link" and added to the other branch's
// decoder input. Both cross links start at exactly zero, so a freshly
// initialized network is two independent denoisers.

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unirender/attr_codec.hpp"
#include "unirender/nn/layers.hpp"
#include "unirender/nn/tensor.hpp"
#include "unirender/rng.hpp"

namespace unirender {

struct ArchConfig {
  int image_size = 32;
  int attr_channels = kAttrChannels;
  int rgb_channels = kRgbChannels;
  int base_width = 32;
  int levels = 2;
  int time_embed_dim = 64;
  int max_timestep = 200;

  void Validate() const {
    if (levels < 1) throw UsageError("arch.levels must be >= 1");
    if (image_size <= 0 || image_size % (1 << levels) != 0)
      throw UsageError("arch.image_size must be divisible by 2^levels");
    if (base_width < 1) throw UsageError("arch.base_width must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw UsageError("arch.time_embed_dim must be even and >= 2");
    if (attr_channels < 1 || rgb_channels < 1) throw UsageError("arch channel counts must be >= 1");
    if (max_timestep < 1) throw UsageError("arch.max_timestep must be >= 1");
  }

  /// Feature width at a resolution level (0 = full resolution).
  int Width(int level) const { return level == 0 ? base_width : 2 * base_width; }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ArchConfig& a) {
  j = {{"image_size", a.image_size},         {"attr_channels", a.attr_channels}, {"rgb_channels", a.rgb_channels},
       {"base_width", a.base_width},         {"levels", a.levels},               {"time_embed_dim", a.time_embed_dim},
       {"max_timestep", a.max_timestep}};
}

inline void from_json(const nlohmann::json& j, ArchConfig& a) {
  a.image_size = j.at("image_size").get<int>();
  a.attr_channels = j.at("attr_channels").get<int>();
  a.rgb_channels = j.at("rgb_channels").get<int>();
  a.base_width = j.at("base_width").get<int>();
  a.levels = j.at("levels").get<int>();
  a.time_embed_dim = j.at("time_embed_dim").get<int>();
  a.max_timestep = j.at("max_timestep").get<int>();
}

/// Sinusoidal embedding with interleaved (sin, cos) pairs at frequencies
/// 10000^(-k / (dim/2)).
inline std::vector<double> TimestepEmbedding(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw UsageError("TimestepEmbedding: dim must be even and positive");
  const int half = dim / 2;
  std::vector<double> out(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
    out[2 * k] = std::sin(t * freq);
    out[2 * k + 1] = std::cos(t * freq);
  }
  return out;
}

enum class Branch { kAttr = 0, kRgb = 1 };

/// Which decoder heads a forward pass evaluates. Training only needs the
/// noised branch's head; the clean branch still runs its encoder.
struct Heads {
  bool attr = true;
  bool rgb = true;

  static Heads Both() { return {true, true}; }
  static Heads Only(Branch b) { return {b == Branch::kAttr, b == Branch::kRgb}; }
  bool Has(Branch b) const { return b == Branch::kAttr ? attr : rgb; }
};

template <typename S>
class DualNet {
 public:
  using Tensor = nn::Tensor<S>;
  using Mat = nn::Mat<S>;
  using Params = nn::ParamStore<S>;

  explicit DualNet(ArchConfig arch) : arch_(arch) {
    arch_.Validate();
    BuildLayout();
  }

  const ArchConfig& arch() const { return arch_; }
  const std::vector<nn::ParamSpec>& specs() const { return specs_; }

  /// Fan-in scaled normal init; cross links and biases zero, norm gains one.
  Params Init(Rng& rng) const {
    Params p(specs_);
    for (size_t i = 0; i < p.size(); ++i) {
      auto& e = p[i];
      const std::string& name = e.spec.name;
      if (name.starts_with("cross_link_")) continue;
      if (name.ends_with(".gamma")) {
        e.value.setOnes();
      } else if (name.ends_with(".w")) {
        const double scale = std::sqrt(1.0 / e.spec.cols);
        for (Eigen::Index k = 0; k < e.value.size(); ++k) e.value.data()[k] = static_cast<S>(rng.Normal() * scale);
      }
    }
    return p;
  }

  struct Outputs {
    std::optional<Tensor> attr;
    std::optional<Tensor> rgb;
  };

  struct Trace;

  Outputs Forward(const Params& p, const Tensor& attr_in, const Tensor& rgb_in, std::span<const int> t_attr,
                  std::span<const int> t_rgb, Heads heads = Heads::Both(), Trace* trace = nullptr) const {
    CheckInputs(attr_in, rgb_in, t_attr, t_rgb);
    Trace local;
    Trace& tr = trace ? *trace : local;
    tr = Trace{};
    tr.heads = heads;
    std::array<const Tensor*, 2> inputs{&attr_in, &rgb_in};
    std::array<std::span<const int>, 2> ts{t_attr, t_rgb};
    for (int b = 0; b < 2; ++b) {
      tr.branch[b].input = *inputs[b];
      TimeForward(p, branches_[b], ts[b], tr.branch[b]);
      EncoderForward(p, branches_[b], tr.branch[b]);
    }
    Outputs out;
    for (int b = 0; b < 2; ++b) {
      if (!heads.Has(static_cast<Branch>(b))) continue;
      const int other = 1 - b;
      // links_[b] carries the other branch's bottleneck into branch b.
      const Link& link = links_[b];
      Tensor injected = nn::ConvForward(p.Value(link.w), p.Value(link.b), tr.branch[other].mid, 1, 1);
      Tensor u = tr.branch[b].mid;
      u.m += injected.m;
      Tensor y = DecoderForward(p, branches_[b], std::move(u), tr.branch[b]);
      (b == 0 ? out.attr : out.rgb) = std::move(y);
    }
    return out;
  }

  struct InputGrads {
    Tensor attr;
    Tensor rgb;
  };

  /// Backpropagates output gradients (one per evaluated head) into `grads`
  /// and returns input gradients when requested.
  InputGrads Backward(const Params& p, const Trace& tr, const Tensor* d_attr, const Tensor* d_rgb, Params& grads,
                      bool need_input_grads = false) const {
    std::array<const Tensor*, 2> douts{d_attr, d_rgb};
    std::array<Tensor, 2> dmid;
    std::array<bool, 2> have_dmid{false, false};
    auto add_dmid = [&](int b, Tensor&& g) {
      if (!have_dmid[b]) {
        dmid[b] = std::move(g);
        have_dmid[b] = true;
      } else {
        dmid[b].m += g.m;
      }
    };
    std::array<Mat, 2> demb;
    std::array<std::vector<Tensor>, 2> dskips;
    for (int b = 0; b < 2; ++b) demb[b] = Mat::Zero(arch_.time_embed_dim, tr.branch[b].input.n);

    for (int b = 0; b < 2; ++b) {
      if (!douts[b]) continue;
      if (!tr.heads.Has(static_cast<Branch>(b))) throw UsageError("Backward: head was not evaluated in forward");
      Tensor du = DecoderBackward(p, branches_[b], *douts[b], tr.branch[b], grads, demb[b], dskips[b]);
      const int other = 1 - b;
      const Link& link = links_[b];
      Tensor dother = nn::ConvBackward(p.Value(link.w), tr.branch[other].mid, du, 1, 1, grads.Value(link.w),
                                       grads.Value(link.b), true);
      add_dmid(other, std::move(dother));
      add_dmid(b, std::move(du));
    }
    InputGrads in;
    for (int b = 0; b < 2; ++b) {
      if (!have_dmid[b]) {
        // Branch contributes nothing to the loss; input gradient is zero.
        if (need_input_grads) {
          const Tensor& x = tr.branch[b].input;
          (b == 0 ? in.attr : in.rgb) = Tensor(x.channels(), x.n, x.h, x.w);
        }
        continue;
      }
      Tensor dx =
          EncoderBackward(p, branches_[b], dmid[b], dskips[b], tr.branch[b], grads, demb[b], need_input_grads);
      TimeBackward(p, branches_[b], tr.branch[b], demb[b], grads);
      if (need_input_grads) (b == 0 ? in.attr : in.rgb) = std::move(dx);
    }
    return in;
  }

 private:
  struct ResBlockLayout {
    int cin = 0, cout = 0;
    size_t gn1_g, gn1_b, conv1_w, conv1_b, proj_w, proj_b, gn2_g, gn2_b, conv2_w, conv2_b;
    std::optional<size_t> skip_w, skip_b;
  };

  struct BranchLayout {
    std::string prefix;
    int channels = 0;
    size_t time_w, time_b, conv_in_w, conv_in_b;
    std::vector<ResBlockLayout> enc;
    std::vector<std::pair<size_t, size_t>> down;
    ResBlockLayout mid_enc, mid_dec;
    std::vector<ResBlockLayout> dec;
    size_t out_g, out_b, conv_out_w, conv_out_b;
  };

  struct Link {
    size_t w, b;
  };

  struct ResBlockTrace {
    Tensor x;
    nn::GroupNormTrace<S> gn1;
    Tensor n1, a1, h1, n2, a2;
    nn::GroupNormTrace<S> gn2;
  };

  struct BranchTrace {
    Tensor input;
    Mat time_in, time_pre, emb;
    Tensor h0;
    std::vector<ResBlockTrace> enc;
    std::vector<Tensor> skips;
    std::vector<Tensor> down_in;
    ResBlockTrace mid_enc_t;
    Tensor mid;
    ResBlockTrace mid_dec_t;
    std::vector<Tensor> up_in;
    std::vector<ResBlockTrace> dec;
    nn::GroupNormTrace<S> out_gn;
    Tensor out_n, out_a;
  };

 public:
  struct Trace {
    Heads heads;
    std::array<BranchTrace, 2> branch;
  };

 private:
  size_t AddParam(const std::string& name, int rows, int cols, std::vector<int> shape) {
    specs_.push_back({name, rows, cols, std::move(shape)});
    return specs_.size() - 1;
  }

  size_t AddConv(const std::string& name, int cin, int cout, int k, size_t* bias) {
    const size_t w = AddParam(name + ".w", cout, cin * k * k, {cout, cin, k, k});
    *bias = AddParam(name + ".b", cout, 1, {cout});
    return w;
  }

  ResBlockLayout AddResBlock(const std::string& name, int cin, int cout) {
    ResBlockLayout r;
    r.cin = cin;
    r.cout = cout;
    r.gn1_g = AddParam(name + ".norm1.gamma", cin, 1, {cin});
    r.gn1_b = AddParam(name + ".norm1.beta", cin, 1, {cin});
    r.conv1_w = AddConv(name + ".conv1", cin, cout, 3, &r.conv1_b);
    r.proj_w = AddParam(name + ".time_proj.w", cout, arch_.time_embed_dim, {cout, arch_.time_embed_dim});
    r.proj_b = AddParam(name + ".time_proj.b", cout, 1, {cout});
    r.gn2_g = AddParam(name + ".norm2.gamma", cout, 1, {cout});
    r.gn2_b = AddParam(name + ".norm2.beta", cout, 1, {cout});
    r.conv2_w = AddConv(name + ".conv2", cout, cout, 3, &r.conv2_b);
    if (cin != cout) {
      size_t b;
      r.skip_w = AddConv(name + ".skip", cin, cout, 1, &b);
      r.skip_b = b;
    }
    return r;
  }

  void BuildLayout() {
    const int d = arch_.time_embed_dim;
    const int levels = arch_.levels;
    for (int b = 0; b < 2; ++b) {
      BranchLayout& L = branches_[b];
      L.prefix = b == 0 ? "attr" : "rgb";
      L.channels = b == 0 ? arch_.attr_channels : arch_.rgb_channels;
      const std::string& pre = L.prefix;
      L.time_w = AddParam(pre + ".time_mlp.w", d, d, {d, d});
      L.time_b = AddParam(pre + ".time_mlp.b", d, 1, {d});
      L.conv_in_w = AddConv(pre + ".conv_in", L.channels, arch_.Width(0), 3, &L.conv_in_b);
      for (int l = 0; l < levels; ++l) {
        L.enc.push_back(AddResBlock(pre + ".enc" + std::to_string(l), arch_.Width(l), arch_.Width(l)));
        size_t db;
        const size_t dw = AddConv(pre + ".down" + std::to_string(l), arch_.Width(l), arch_.Width(l + 1), 3, &db);
        L.down.emplace_back(dw, db);
      }
      L.mid_enc = AddResBlock(pre + ".mid_enc", arch_.Width(levels), arch_.Width(levels));
      L.mid_dec = AddResBlock(pre + ".mid_dec", arch_.Width(levels), arch_.Width(levels));
      L.dec.resize(levels);
      for (int l = levels - 1; l >= 0; --l)
        L.dec[l] = AddResBlock(pre + ".dec" + std::to_string(l), arch_.Width(l + 1) + arch_.Width(l), arch_.Width(l));
      L.out_g = AddParam(pre + ".norm_out.gamma", arch_.Width(0), 1, {arch_.Width(0)});
      L.out_b = AddParam(pre + ".norm_out.beta", arch_.Width(0), 1, {arch_.Width(0)});
      L.conv_out_w = AddConv(pre + ".conv_out", arch_.Width(0), L.channels, 3, &L.conv_out_b);
    }
    const int cm = arch_.Width(levels);
    // links_[0] feeds the attribute decoder from the RGB encoder and vice versa.
    links_[1].w = AddParam("cross_link_attr_to_rgb.w", cm, cm, {cm, cm, 1, 1});
    links_[1].b = AddParam("cross_link_attr_to_rgb.b", cm, 1, {cm});
    links_[0].w = AddParam("cross_link_rgb_to_attr.w", cm, cm, {cm, cm, 1, 1});
    links_[0].b = AddParam("cross_link_rgb_to_attr.b", cm, 1, {cm});
  }

  void CheckInputs(const Tensor& attr_in, const Tensor& rgb_in, std::span<const int> t_attr,
                   std::span<const int> t_rgb) const {
    const int s = arch_.image_size;
    auto bad = [&](const Tensor& x, int c) { return x.channels() != c || x.h != s || x.w != s; };
    if (bad(attr_in, arch_.attr_channels) || bad(rgb_in, arch_.rgb_channels) || attr_in.n != rgb_in.n) {
      throw DataError("DualNet: input shapes attr" + attr_in.ShapeString() + " rgb" + rgb_in.ShapeString() +
                      " do not match arch (N," + std::to_string(arch_.attr_channels) + "|" +
                      std::to_string(arch_.rgb_channels) + "," + std::to_string(s) + "," + std::to_string(s) + ")");
    }
    if (t_attr.size() != static_cast<size_t>(attr_in.n) || t_rgb.size() != static_cast<size_t>(rgb_in.n))
      throw DataError("DualNet: one timestep per sample is required");
    for (auto span : {t_attr, t_rgb})
      for (int t : span)
        if (t < 0 || t > arch_.max_timestep) throw UsageError("DualNet: timestep out of range");
  }

  void TimeForward(const Params& p, const BranchLayout& L, std::span<const int> ts, BranchTrace& tr) const {
    const int d = arch_.time_embed_dim;
    tr.time_in.resize(d, static_cast<Eigen::Index>(ts.size()));
    for (size_t k = 0; k < ts.size(); ++k) {
      const auto e = TimestepEmbedding(ts[k], d);
      for (int i = 0; i < d; ++i) tr.time_in(i, static_cast<Eigen::Index>(k)) = static_cast<S>(e[i]);
    }
    tr.time_pre = p.Value(L.time_w) * tr.time_in;
    tr.time_pre.colwise() += p.Value(L.time_b).col(0);
    tr.emb = nn::Silu(tr.time_pre);
  }

  void TimeBackward(const Params& p, const BranchLayout& L, const BranchTrace& tr, const Mat& demb,
                    Params& grads) const {
    (void)p;
    const Mat dpre = nn::SiluBackward(tr.time_pre, demb);
    grads.Value(L.time_w).noalias() += dpre * tr.time_in.transpose();
    grads.Value(L.time_b).col(0) += dpre.rowwise().sum();
  }

  Tensor ResBlockForward(const Params& p, const ResBlockLayout& r, const Tensor& x, const Mat& emb,
                         ResBlockTrace& t) const {
    t.x = x;
    t.n1 = nn::GroupNormForward(p.Value(r.gn1_g), p.Value(r.gn1_b), x, &t.gn1);
    t.a1 = nn::Silu(t.n1);
    t.h1 = nn::ConvForward(p.Value(r.conv1_w), p.Value(r.conv1_b), t.a1, 3, 1);
    Mat proj = p.Value(r.proj_w) * emb;
    proj.colwise() += p.Value(r.proj_b).col(0);
    nn::AddPerSample(t.h1, proj);
    t.n2 = nn::GroupNormForward(p.Value(r.gn2_g), p.Value(r.gn2_b), t.h1, &t.gn2);
    t.a2 = nn::Silu(t.n2);
    Tensor y = nn::ConvForward(p.Value(r.conv2_w), p.Value(r.conv2_b), t.a2, 3, 1);
    if (r.skip_w) {
      y.m += nn::ConvForward(p.Value(*r.skip_w), p.Value(*r.skip_b), x, 1, 1).m;
    } else {
      y.m += x.m;
    }
    return y;
  }

  Tensor ResBlockBackward(const Params& p, const ResBlockLayout& r, const Tensor& dy, const ResBlockTrace& t,
                          const Mat& emb, Params& g, Mat& demb) const {
    Tensor dx;
    if (r.skip_w) {
      dx = nn::ConvBackward(p.Value(*r.skip_w), t.x, dy, 1, 1, g.Value(*r.skip_w), g.Value(*r.skip_b), true);
    } else {
      dx = dy;
    }
    Tensor da2 = nn::ConvBackward(p.Value(r.conv2_w), t.a2, dy, 3, 1, g.Value(r.conv2_w), g.Value(r.conv2_b), true);
    Tensor dn2 = nn::SiluBackward(t.n2, da2);
    Tensor dh1 = nn::GroupNormBackward(p.Value(r.gn2_g), t.gn2, dn2, g.Value(r.gn2_g), g.Value(r.gn2_b));
    const Mat dproj = nn::SumPerSample(dh1);
    g.Value(r.proj_w).noalias() += dproj * emb.transpose();
    g.Value(r.proj_b).col(0) += dproj.rowwise().sum();
    demb.noalias() += p.Value(r.proj_w).transpose() * dproj;
    Tensor da1 = nn::ConvBackward(p.Value(r.conv1_w), t.a1, dh1, 3, 1, g.Value(r.conv1_w), g.Value(r.conv1_b), true);
    Tensor dn1 = nn::SiluBackward(t.n1, da1);
    dx.m += nn::GroupNormBackward(p.Value(r.gn1_g), t.gn1, dn1, g.Value(r.gn1_g), g.Value(r.gn1_b)).m;
    return dx;
  }

  void EncoderForward(const Params& p, const BranchLayout& L, BranchTrace& tr) const {
    const int levels = arch_.levels;
    tr.h0 = nn::ConvForward(p.Value(L.conv_in_w), p.Value(L.conv_in_b), tr.input, 3, 1);
    tr.enc.resize(levels);
    tr.skips.resize(levels);
    tr.down_in.resize(levels);
    Tensor h = tr.h0;
    for (int l = 0; l < levels; ++l) {
      h = ResBlockForward(p, L.enc[l], h, tr.emb, tr.enc[l]);
      tr.skips[l] = h;
      tr.down_in[l] = h;
      h = nn::ConvForward(p.Value(L.down[l].first), p.Value(L.down[l].second), h, 3, 2);
    }
    tr.mid = ResBlockForward(p, L.mid_enc, h, tr.emb, tr.mid_enc_t);
  }

  Tensor EncoderBackward(const Params& p, const BranchLayout& L, const Tensor& dmid, const std::vector<Tensor>& dskips,
                         const BranchTrace& tr, Params& g, Mat& demb, bool need_input_grad) const {
    const int levels = arch_.levels;
    Tensor dh = ResBlockBackward(p, L.mid_enc, dmid, tr.mid_enc_t, tr.emb, g, demb);
    for (int l = levels - 1; l >= 0; --l) {
      dh = nn::ConvBackward(p.Value(L.down[l].first), tr.down_in[l], dh, 3, 2, g.Value(L.down[l].first),
                            g.Value(L.down[l].second), true);
      if (!dskips.empty()) dh.m += dskips[l].m;
      dh = ResBlockBackward(p, L.enc[l], dh, tr.enc[l], tr.emb, g, demb);
    }
    return nn::ConvBackward(p.Value(L.conv_in_w), tr.input, dh, 3, 1, g.Value(L.conv_in_w), g.Value(L.conv_in_b),
                            need_input_grad);
  }

  Tensor DecoderForward(const Params& p, const BranchLayout& L, Tensor u, BranchTrace& tr) const {
    const int levels = arch_.levels;
    u = ResBlockForward(p, L.mid_dec, u, tr.emb, tr.mid_dec_t);
    tr.up_in.resize(levels);
    tr.dec.resize(levels);
    for (int l = levels - 1; l >= 0; --l) {
      Tensor cat = nn::Concat(nn::Upsample2x(u), tr.skips[l]);
      u = ResBlockForward(p, L.dec[l], cat, tr.emb, tr.dec[l]);
    }
    tr.out_n = nn::GroupNormForward(p.Value(L.out_g), p.Value(L.out_b), u, &tr.out_gn);
    tr.out_a = nn::Silu(tr.out_n);
    return nn::ConvForward(p.Value(L.conv_out_w), p.Value(L.conv_out_b), tr.out_a, 3, 1);
  }

  /// Returns the gradient at the decoder input; skip-connection gradients go
  /// to `dskips` for the encoder pass.
  Tensor DecoderBackward(const Params& p, const BranchLayout& L, const Tensor& dy, const BranchTrace& tr, Params& g,
                         Mat& demb, std::vector<Tensor>& dskips) const {
    const int levels = arch_.levels;
    Tensor da = nn::ConvBackward(p.Value(L.conv_out_w), tr.out_a, dy, 3, 1, g.Value(L.conv_out_w),
                                 g.Value(L.conv_out_b), true);
    Tensor dn = nn::SiluBackward(tr.out_n, da);
    Tensor du = nn::GroupNormBackward(p.Value(L.out_g), tr.out_gn, dn, g.Value(L.out_g), g.Value(L.out_b));
    dskips.assign(levels, Tensor{});
    for (int l = 0; l < levels; ++l) {
      Tensor dcat = ResBlockBackward(p, L.dec[l], du, tr.dec[l], tr.emb, g, demb);
      auto [dup, dskip] = nn::SplitChannels(dcat, arch_.Width(l + 1));
      dskips[l] = std::move(dskip);
      du = nn::Upsample2xBackward(dup);
    }
    return ResBlockBackward(p, L.mid_dec, du, tr.mid_dec_t, tr.emb, g, demb);
  }

  ArchConfig arch_;
  std::vector<nn::ParamSpec> specs_;
  std::array<BranchLayout, 2> branches_;
  std::array<Link, 2> links_;
};

}  // namespace unirender
