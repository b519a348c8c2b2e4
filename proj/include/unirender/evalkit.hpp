// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "unirender/attr_codec.hpp"
#include "unirender/diffusion.hpp"
#include "unirender/dual_net.hpp"
#include "unirender/parallel.hpp"
#include "unirender/pbr.hpp"
#include "unirender/scene_gen.hpp"
#include "unirender/trainer.hpp"

namespace unirender {

// ---------------------------------------------------------------------------
// Metrics

/// Value reported for identical images.
inline constexpr double kPsnrCap = 99.0;

inline double Psnr(std::span<const float> a, std::span<const float> b, double max_value = 1.0) {
  if (a.size() != b.size() || a.empty()) throw DataError("psnr: images differ in shape");
  if (!(max_value > 0)) throw UsageError("psnr: max_value must be > 0");
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

inline double Psnr(const PlanarImage& a, const PlanarImage& b, double max_value = 1.0) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) throw DataError("psnr: images differ in shape");
  return Psnr(std::span<const float>(a.data), std::span<const float>(b.data), max_value);
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

namespace detail {

inline std::array<double, kSsimWindow> GaussianWindow() {
  std::array<double, kSsimWindow> w{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    w[i] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Separable "valid" Gaussian filter of a row-major w x h image.
inline std::vector<double> FilterValid(const std::vector<double>& img, int w, int h) {
  static const auto g = GaussianWindow();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h), out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * img[static_cast<size_t>(y) * w + x + k];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * tmp[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  return out;
}

inline std::vector<double> Grayscale(const PlanarImage& img) {
  std::vector<double> g(img.pixels(), 0.0);
  for (int c = 0; c < img.channels; ++c)
    for (size_t p = 0; p < img.pixels(); ++p) g[p] += img.at(c, p);
  for (double& v : g) v /= img.channels;
  return g;
}

}  // namespace detail

/// Mean SSIM of the channel-mean grayscale images, 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.
inline double Ssim(const PlanarImage& a, const PlanarImage& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) throw DataError("ssim: images differ in shape");
  if (a.width < kSsimWindow || a.height < kSsimWindow) throw DataError("ssim: image smaller than the 11x11 window");
  const int w = a.width, h = a.height;
  const std::vector<double> x = detail::Grayscale(a), y = detail::Grayscale(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = detail::FilterValid(x, w, h), my = detail::FilterValid(y, w, h);
  const auto exx = detail::FilterValid(xx, w, h), eyy = detail::FilterValid(yy, w, h), exy = detail::FilterValid(xy, w, h);
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  double sum = 0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double sxx = exx[i] - mx[i] * mx[i];
    const double syy = eyy[i] - my[i] * my[i];
    const double sxy = exy[i] - mx[i] * my[i];
    sum += ((2 * mx[i] * my[i] + c1) * (2 * sxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2));
  }
  return sum / static_cast<double>(mx.size());
}

/// Masked mean of per-pixel dot products between two normal maps.
inline double NormalCosine(const PlanarImage& pred, const PlanarImage& gt, const PlanarImage& mask) {
  if (pred.pixels() != gt.pixels() || pred.pixels() != mask.pixels() || pred.channels != 3 || gt.channels != 3)
    throw DataError("normal_cosine: shape mismatch");
  double sum = 0;
  size_t n = 0;
  for (size_t p = 0; p < mask.pixels(); ++p) {
    if (mask.at(0, p) == 0.0f) continue;
    double d = 0;
    for (int c = 0; c < 3; ++c) d += static_cast<double>(pred.at(c, p)) * gt.at(c, p);
    sum += d;
    ++n;
  }
  if (n == 0) throw DataError("normal_cosine: empty mask");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Report table

struct ImageScore {
  std::optional<double> psnr, ssim, lpips;
  friend bool operator==(const ImageScore&, const ImageScore&) = default;
};

struct ReportRow {
  ImageScore albedo;
  std::optional<double> metallic_mse;
  std::optional<double> roughness_mse;
  std::optional<double> normal_cosine;
  ImageScore specular;
  ImageScore diffuse;
  ImageScore relight;    // analytic re-render of decoded intrinsics under a new rig
  ImageScore rerender;   // same, under the source rig
  ImageScore rendering;  // forward-sampled RGB vs the analytic render
  int64_t samples = 0;
  int64_t failures = 0;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportTable {
  std::map<std::string, ReportRow> rows;
  friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

namespace detail {
inline nlohmann::json Cell(const std::optional<double>& v) {
  if (v && !std::isfinite(*v)) throw NumericError("report cell is not finite");
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> FromCell(const nlohmann::json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}
inline nlohmann::json ScoreJson(const ImageScore& s, bool with_lpips) {
  nlohmann::json j{{"psnr", Cell(s.psnr)}, {"ssim", Cell(s.ssim)}};
  if (with_lpips) j["lpips"] = Cell(s.lpips);
  return j;
}
inline ImageScore ScoreFromJson(const nlohmann::json& j) {
  return {FromCell(j.at("psnr")), FromCell(j.at("ssim")), j.contains("lpips") ? FromCell(j.at("lpips")) : std::nullopt};
}
}  // namespace detail

inline nlohmann::json ReportJson(const ReportTable& t) {
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& [name, r] : t.rows) {
    rows[name] = {{"albedo", detail::ScoreJson(r.albedo, true)},
                  {"metallic_mse", detail::Cell(r.metallic_mse)},
                  {"roughness_mse", detail::Cell(r.roughness_mse)},
                  {"normal_cosine", detail::Cell(r.normal_cosine)},
                  {"specular", detail::ScoreJson(r.specular, true)},
                  {"diffuse", detail::ScoreJson(r.diffuse, true)},
                  {"relight", detail::ScoreJson(r.relight, false)},
                  {"rerender", detail::ScoreJson(r.rerender, false)},
                  {"rendering", detail::ScoreJson(r.rendering, false)},
                  {"samples", r.samples},
                  {"failures", r.failures}};
  }
  return {{"rows", rows}};
}

inline ReportTable ReportFromJson(const nlohmann::json& j) {
  ReportTable t;
  for (const auto& [name, r] : j.at("rows").items()) {
    ReportRow row;
    row.albedo = detail::ScoreFromJson(r.at("albedo"));
    row.metallic_mse = detail::FromCell(r.at("metallic_mse"));
    row.roughness_mse = detail::FromCell(r.at("roughness_mse"));
    row.normal_cosine = detail::FromCell(r.at("normal_cosine"));
    row.specular = detail::ScoreFromJson(r.at("specular"));
    row.diffuse = detail::ScoreFromJson(r.at("diffuse"));
    row.relight = detail::ScoreFromJson(r.at("relight"));
    row.rerender = detail::ScoreFromJson(r.at("rerender"));
    row.rendering = detail::ScoreFromJson(r.at("rendering"));
    row.samples = r.at("samples").get<int64_t>();
    row.failures = r.at("failures").get<int64_t>();
    t.rows[name] = row;
  }
  return t;
}

inline std::string ReportText(const ReportTable& t) {
  auto cell = [](const std::optional<double>& v, int prec) {
    std::ostringstream os;
    if (v) {
      os << std::fixed << std::setprecision(prec) << *v;
    } else {
      os << "-";
    }
    return os.str();
  };
  std::ostringstream os;
  const std::vector<std::string> head = {"method",    "alb.PSNR", "alb.SSIM", "alb.LPIPS", "metal.MSE", "rough.MSE",
                                         "normal.cos", "spec.PSNR", "diff.PSNR", "relit.PSNR", "relit.SSIM",
                                         "rerend.PSNR", "render.PSNR", "n", "fail"};
  for (size_t i = 0; i < head.size(); ++i) os << std::setw(i == 0 ? 16 : 12) << head[i];
  os << "\n";
  for (const auto& [name, r] : t.rows) {
    os << std::setw(16) << name << std::setw(12) << cell(r.albedo.psnr, 2) << std::setw(12) << cell(r.albedo.ssim, 4)
       << std::setw(12) << cell(r.albedo.lpips, 4) << std::setw(12) << cell(r.metallic_mse, 4) << std::setw(12)
       << cell(r.roughness_mse, 4) << std::setw(12) << cell(r.normal_cosine, 3) << std::setw(12)
       << cell(r.specular.psnr, 2) << std::setw(12) << cell(r.diffuse.psnr, 2) << std::setw(12)
       << cell(r.relight.psnr, 2) << std::setw(12) << cell(r.relight.ssim, 4) << std::setw(12)
       << cell(r.rerender.psnr, 2) << std::setw(12) << cell(r.rendering.psnr, 2) << std::setw(12) << r.samples
       << std::setw(12) << r.failures << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Models under evaluation

/// A renderer / inverse renderer evaluated on dataset records. Inputs and
/// outputs are in network range; `keys` identify samples for per-sample
/// randomness.
class EvalModel {
 public:
  virtual ~EvalModel() = default;
  virtual std::vector<PlanarImage> Inverse(const std::vector<const PlanarImage*>& rgb,
                                           std::span<const uint64_t> keys) const = 0;
  virtual std::vector<PlanarImage> Render(const std::vector<const PlanarImage*>& attrs,
                                          std::span<const uint64_t> keys) const = 0;
};

class DiffusionEvalModel : public EvalModel {
 public:
  DiffusionEvalModel(const DualNet<float>& net, const nn::ParamStore<float>& params, const NoiseSchedule& sched,
                     int sampler_steps, uint64_t seed)
      : net_(net), params_(params), sched_(sched), steps_(sampler_steps), seed_(seed) {}

  std::vector<PlanarImage> Inverse(const std::vector<const PlanarImage*>& rgb,
                                   std::span<const uint64_t> keys) const override {
    return Run(rgb, keys, Direction::kInverse, net_.arch().attr_channels);
  }
  std::vector<PlanarImage> Render(const std::vector<const PlanarImage*>& attrs,
                                  std::span<const uint64_t> keys) const override {
    return Run(attrs, keys, Direction::kRendering, net_.arch().rgb_channels);
  }

 private:
  std::vector<PlanarImage> Run(const std::vector<const PlanarImage*>& cond, std::span<const uint64_t> keys,
                               Direction dir, int channels) const {
    std::vector<uint64_t> salted(keys.begin(), keys.end());
    for (auto& k : salted) k = DeriveSeed(k, {static_cast<uint64_t>(dir)});
    std::vector<Rng> rngs = SampleRngs(seed_, salted);
    const nn::Tensor<float> c = nn::Batch<float>(cond);
    const NetDenoiser<float> den{net_, params_};
    const nn::Tensor<float> out = SampleLoop<float>(den, c, dir, channels, sched_, rngs, steps_);
    std::vector<PlanarImage> res;
    for (int s = 0; s < out.n; ++s) res.push_back(nn::Unbatch(out, s));
    return res;
  }

  const DualNet<float>& net_;
  const nn::ParamStore<float>& params_;
  const NoiseSchedule& sched_;
  int steps_;
  uint64_t seed_;
};

/// Dataset-mean predictor: every prediction is the training-set mean stack
/// (with constant metallic/roughness fills at the mean scalar) or mean RGB.
class MeanEvalModel : public EvalModel {
 public:
  explicit MeanEvalModel(const TrainingSet& data) {
    if (data.size() == 0) throw DataError("MeanEvalModel: empty training set");
    mean_attr_ = PlanarImage(data.attrs[0].width, data.attrs[0].height, kAttrChannels);
    mean_rgb_ = PlanarImage(data.rgbs[0].width, data.rgbs[0].height, kRgbChannels);
    std::vector<double> acc_a(mean_attr_.data.size(), 0.0), acc_r(mean_rgb_.data.size(), 0.0);
    double m_sum = 0, r_sum = 0;
    for (size_t i = 0; i < data.size(); ++i) {
      for (size_t k = 0; k < acc_a.size(); ++k) acc_a[k] += data.attrs[i].data[k];
      for (size_t k = 0; k < acc_r.size(); ++k) acc_r[k] += data.rgbs[i].data[k];
      // Scalars read back from the (constant) fills of each stack.
      const DecodedIntrinsics d = UnpackAttributes(AttributeStack(data.attrs[i]));
      m_sum += d.metallic;
      r_sum += d.roughness;
    }
    const double n = static_cast<double>(data.size());
    for (size_t k = 0; k < acc_a.size(); ++k) mean_attr_.data[k] = static_cast<float>(acc_a[k] / n);
    for (size_t k = 0; k < acc_r.size(); ++k) mean_rgb_.data[k] = static_cast<float>(acc_r[k] / n);
    mean_metallic_ = m_sum / n;
    mean_roughness_ = r_sum / n;
    for (size_t p = 0; p < mean_attr_.pixels(); ++p) {
      mean_attr_.at(attr::kMetallic, p) = static_cast<float>(ToSigned(mean_metallic_));
      mean_attr_.at(attr::kRoughness, p) = static_cast<float>(ToSigned(mean_roughness_));
    }
  }

  std::vector<PlanarImage> Inverse(const std::vector<const PlanarImage*>& rgb, std::span<const uint64_t>) const override {
    return std::vector<PlanarImage>(rgb.size(), mean_attr_);
  }
  std::vector<PlanarImage> Render(const std::vector<const PlanarImage*>& attrs, std::span<const uint64_t>) const override {
    return std::vector<PlanarImage>(attrs.size(), mean_rgb_);
  }

  double mean_metallic() const { return mean_metallic_; }
  double mean_roughness() const { return mean_roughness_; }

 private:
  PlanarImage mean_attr_, mean_rgb_;
  double mean_metallic_ = 0, mean_roughness_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation protocol

struct EvalOptions {
  int sampler_steps = 50;
  int batch_size = 16;
  int per_object = 0;  // 0: every record; else a Latin-square subset per object
  int num_relight_lights = 1;
  uint64_t seed = 0;
};

/// Chooses records for evaluation. With per_object = k > 0, each object
/// contributes k records whose metallic indices are spread evenly and whose
/// roughness index is rotated by the object id, so both scalars stay
/// uniformly covered.
inline std::vector<SampleRecord> SelectEvalRecords(const DatasetIndex& index, Split split, int per_object) {
  const auto& recs = index.Records(split);
  if (per_object <= 0) return recs;
  const int g = index.config.GridPoints();
  std::map<std::tuple<int, int, int>, const SampleRecord*> by_key;
  for (const auto& r : recs) by_key[{r.object, r.metallic_index, r.roughness_index}] = &r;
  std::vector<int> objects;
  for (const auto& r : recs)
    if (objects.empty() || objects.back() != r.object) objects.push_back(r.object);
  std::vector<SampleRecord> out;
  const int k = std::min(per_object, g);
  for (int o : objects) {
    for (int i = 0; i < k; ++i) {
      const int mi = static_cast<int>(static_cast<int64_t>(i) * g / k);
      const int ri = (mi + o) % g;
      auto it = by_key.find({o, mi, ri});
      if (it != by_key.end()) out.push_back(*it->second);
    }
  }
  return out;
}

inline uint64_t RecordKey(const SampleRecord& r) {
  return DeriveSeed(r.object_seed, {r.light_seed, static_cast<uint64_t>(r.metallic_index),
                                    static_cast<uint64_t>(r.roughness_index)});
}

namespace detail {

struct SampleScores {
  bool inverse_ok = false;
  double albedo_psnr = 0, albedo_ssim = 0, metallic_se = 0, roughness_se = 0, normal_cos = 0;
  double spec_psnr = 0, spec_ssim = 0, diff_psnr = 0, diff_ssim = 0;
  double relight_psnr = 0, relight_ssim = 0, rerender_psnr = 0, rerender_ssim = 0;
  double render_psnr = 0, render_ssim = 0;
  bool render_ok = false;
};

struct Mean {
  double sum = 0;
  int64_t n = 0;
  void Add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> Get() const { return n ? std::optional<double>(sum / n) : std::nullopt; }
};

}  // namespace detail

/// Scores one model on a split: inverse (albedo, scalars, normals, shading
/// maps), analytic re-render of the decoded intrinsics under the source rig
/// and under fresh rigs, and forward rendering from ground-truth attributes.
/// Per-sample failures are counted, not fatal. Results are merged in record
/// order, so the row does not depend on batching or threading.
inline ReportRow EvaluateModel(const EvalModel& model, const DatasetIndex& index, const std::vector<SampleRecord>& records,
                               const EvalOptions& opt) {
  const DatasetConfig& cfg = index.config;
  std::vector<detail::SampleScores> scores(records.size());
  const size_t bs = static_cast<size_t>(std::max(1, opt.batch_size));
  const size_t batches = (records.size() + bs - 1) / bs;

  ParallelFor(batches, [&](size_t b) {
    const size_t lo = b * bs, hi = std::min(records.size(), lo + bs);
    std::vector<FrameBundle> gt;
    std::vector<PlanarImage> attrs, rgbs;
    std::vector<uint64_t> keys;
    std::vector<size_t> ids;
    for (size_t i = lo; i < hi; ++i) {
      try {
        auto [bundle, meta] = ReadSample(index.root / records[i].file);
        attrs.push_back(PackAttributes(bundle).data);
        rgbs.push_back(EncodeRgb(bundle.rgb));
        gt.push_back(std::move(bundle));
        keys.push_back(RecordKey(records[i]));
        ids.push_back(i);
      } catch (const Error&) {
        // Unreadable sample: counted as a failure below.
      }
    }
    if (ids.empty()) return;
    std::vector<const PlanarImage*> rgb_ptrs, attr_ptrs;
    for (auto& r : rgbs) rgb_ptrs.push_back(&r);
    for (auto& a : attrs) attr_ptrs.push_back(&a);
    const std::vector<PlanarImage> inv = model.Inverse(rgb_ptrs, keys);
    const std::vector<PlanarImage> ren = model.Render(attr_ptrs, keys);

    for (size_t k = 0; k < ids.size(); ++k) {
      detail::SampleScores& sc = scores[ids[k]];
      const SampleRecord& rec = records[ids[k]];
      const FrameBundle& g = gt[k];
      const SceneSpec scene = SceneFor(rec, cfg);
      const PlanarImage gt_rgb = CompressedRgb(g.rgb);

      const PlanarImage rendered = CompressedRgb(DecodeRgb(ren[k]));
      sc.render_psnr = Psnr(rendered, gt_rgb);
      sc.render_ssim = Ssim(rendered, gt_rgb);
      sc.render_ok = true;

      DecodedIntrinsics d;
      try {
        d = UnpackAttributes(AttributeStack(inv[k]));
      } catch (const NoForegroundError&) {
        continue;
      }
      sc.inverse_ok = true;
      sc.albedo_psnr = Psnr(d.albedo, g.albedo);
      sc.albedo_ssim = Ssim(d.albedo, g.albedo);
      sc.metallic_se = std::pow(d.metallic - rec.metallic, 2);
      sc.roughness_se = std::pow(d.roughness - rec.roughness, 2);
      sc.normal_cos = NormalCosine(d.normal, g.normal, g.mask);
      const PlanarImage spec_p = CompressedRgb(d.specular), spec_g = CompressedRgb(g.specular);
      const PlanarImage diff_p = CompressedRgb(d.diffuse), diff_g = CompressedRgb(g.diffuse);
      sc.spec_psnr = Psnr(spec_p, spec_g);
      sc.spec_ssim = Ssim(spec_p, spec_g);
      sc.diff_psnr = Psnr(diff_p, diff_g);
      sc.diff_ssim = Ssim(diff_p, diff_g);

      const GBuffer gb = d.ToGBuffer();
      const double m = std::clamp(d.metallic, 0.0, 1.0), r = std::clamp(d.roughness, 0.0, 1.0);
      const PlanarImage rerendered = CompressedRgb(ShadeGBuffer(gb, m, r, scene.lights(), scene.ambient()).rgb);
      sc.rerender_psnr = Psnr(rerendered, gt_rgb);
      sc.rerender_ssim = Ssim(rerendered, gt_rgb);

      double rp = 0, rs = 0;
      for (int j = 0; j < opt.num_relight_lights; ++j) {
        const SceneSpec relit = Relit(scene, DeriveSeed(opt.seed, {rec.light_seed, static_cast<uint64_t>(j)}));
        const PlanarImage truth = CompressedRgb(RenderScene(relit).rgb);
        const PlanarImage pred = CompressedRgb(ShadeGBuffer(gb, m, r, relit.lights(), relit.ambient()).rgb);
        rp += Psnr(pred, truth);
        rs += Ssim(pred, truth);
      }
      sc.relight_psnr = rp / opt.num_relight_lights;
      sc.relight_ssim = rs / opt.num_relight_lights;
    }
  });

  ReportRow row;
  row.samples = static_cast<int64_t>(records.size());
  detail::Mean ap, as, mse_m, mse_r, nc, sp, ss, dp, ds, lp, ls, rp, rs, xp, xs;
  for (const auto& sc : scores) {
    if (!sc.inverse_ok || !sc.render_ok) ++row.failures;
    if (sc.render_ok) {
      xp.Add(sc.render_psnr);
      xs.Add(sc.render_ssim);
    }
    if (!sc.inverse_ok) continue;
    ap.Add(sc.albedo_psnr);
    as.Add(sc.albedo_ssim);
    mse_m.Add(sc.metallic_se);
    mse_r.Add(sc.roughness_se);
    nc.Add(sc.normal_cos);
    sp.Add(sc.spec_psnr);
    ss.Add(sc.spec_ssim);
    dp.Add(sc.diff_psnr);
    ds.Add(sc.diff_ssim);
    lp.Add(sc.relight_psnr);
    ls.Add(sc.relight_ssim);
    rp.Add(sc.rerender_psnr);
    rs.Add(sc.rerender_ssim);
  }
  row.albedo = {ap.Get(), as.Get(), std::nullopt};
  row.metallic_mse = mse_m.Get();
  row.roughness_mse = mse_r.Get();
  row.normal_cosine = nc.Get();
  row.specular = {sp.Get(), ss.Get(), std::nullopt};
  row.diffuse = {dp.Get(), ds.Get(), std::nullopt};
  row.relight = {lp.Get(), ls.Get(), std::nullopt};
  row.rerender = {rp.Get(), rs.Get(), std::nullopt};
  row.rendering = {xp.Get(), xs.Get(), std::nullopt};
  return row;
}

/// Full report for a trained network: the model row plus the dataset-mean
/// baseline row computed from the training split.
inline ReportTable EvaluateCheckpoint(const DualNet<float>& net, const nn::ParamStore<float>& params,
                                      const NoiseSchedule& sched, const DatasetIndex& index, const TrainingSet& train,
                                      Split split, const EvalOptions& opt) {
  const std::vector<SampleRecord> records = SelectEvalRecords(index, split, opt.per_object);
  ReportTable table;
  table.rows["model"] = EvaluateModel(DiffusionEvalModel(net, params, sched, opt.sampler_steps, opt.seed), index, records, opt);
  table.rows["mean_predictor"] = EvaluateModel(MeanEvalModel(train), index, records, opt);
  return table;
}

}  // namespace unirender
