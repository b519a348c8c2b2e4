// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion. The scaled
// end-to-end runs (8, 9) train into a resumable cache directory and reuse
// finished checkpoints and reports on later invocations.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"
#include "unirender/config.hpp"
#include "unirender/evalkit.hpp"

namespace fs = std::filesystem;
using namespace unirender;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. BRDF correctness.
Outcome BrdfSuite() {
  double worst_norm = 0;
  for (double r : {0.3, 0.6, 1.0}) {
    Rng rng(DeriveSeed(1, {static_cast<uint64_t>(r * 10)}));
    worst_norm = std::max(worst_norm, std::abs(testing::ProjectedNdfIntegral(r, 1000000, rng) - 1.0));
  }
  Rng rng(13);
  double worst_recip = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto cfg = testing::RandomShadingConfig(rng);
    const Vec3 l = cfg.lights.front().direction;
    const Rgb a = SpecularBrdf(cfg.mat, cfg.n, cfg.v, l), b = SpecularBrdf(cfg.mat, cfg.n, l, cfg.v);
    for (int c = 0; c < 3; ++c) worst_recip = std::max(worst_recip, std::abs(a[c] - b[c]) / std::max(std::abs(a[c]), 1e-300));
  }
  bool fresnel = FresnelSchlick(1.0, Rgb::Gray(0.04)).g == 0.04;
  for (Rgb f0 : {Rgb::Gray(0.04), Rgb{0.9, 0.2, 0.55}, Rgb::Gray(1.0), Rgb::Gray(0.0)}) {
    const Rgb g = FresnelSchlick(0.0, f0);
    fresnel = fresnel && g.r == 1.0 && g.g == 1.0 && g.b == 1.0;
  }
  return {worst_norm <= 0.02 && worst_recip <= 1e-6 && fresnel,
          Fmt("GGX normalization max |err| %.4f (<= 0.02), reciprocity max rel %.2e (<= 1e-6), Fresnel endpoints %s",
              worst_norm, worst_recip, fresnel ? "exact" : "inexact")};
}

// 2. rgb = diffuse + specular on foreground pixels.
Outcome EnergySplit() {
  DatasetConfig cfg;
  cfg.seed = 2026;
  int64_t pixels = 0, violations = 0;
  for (int i = 0; i < 100; ++i) {
    const int obj = i % 10, mi = (i * 7) % 11, ri = (i * 3) % 11;
    const SceneSpec s = SampleScene(ObjectSeed(cfg.seed, obj), LightSeed(cfg.seed, obj, mi, ri), mi / 10.0, ri / 10.0,
                                    SceneSampling{cfg.image_size, cfg.lights_per_scene, 1.0});
    const FrameBundle b = RenderScene(s);
    for (size_t p = 0; p < b.pixels(); ++p) {
      if (!b.foreground(p)) continue;
      ++pixels;
      for (int c = 0; c < 3; ++c) violations += b.rgb.at(c, p) != b.diffuse.at(c, p) + b.specular.at(c, p);
    }
  }
  return {violations == 0 && pixels > 0, Fmt("%lld foreground pixels over 100 samples, %lld mismatches",
                                             static_cast<long long>(pixels), static_cast<long long>(violations))};
}

struct OracleDenoiser {
  nn::Tensor<double> truth;
  nn::Tensor<double> Predict(const nn::Tensor<double>&, const nn::Tensor<double>&, std::span<const int>,
                             std::span<const int>, Branch) const {
    return truth;
  }
};

// 3. Schedule and sampler identities.
Outcome ScheduleSampler(const ScheduleConfig& trained) {
  bool ok = true;
  std::string notes;
  double worst_oracle = 0, worst_z = 0;
  for (const NoiseSchedule& s : {MakeSchedule(), trained.Make()}) {
    Rng rng(3);
    nn::Tensor<double> x0(3, 2, 8, 8), eps(3, 2, 8, 8);
    FillNormal(x0, rng);
    FillNormal(eps, rng);
    ok = ok && QSample(x0, 0, eps, s).m == x0.m;
    for (int t = 2; t <= s.T(); ++t) ok = ok && s.Snr(t) < s.Snr(t - 1);

    const int n = 100000;
    for (int t : {1, 50, 120, s.T()}) {
      nn::Tensor<double> a(1, 1, 1, n), e(1, 1, 1, n);
      FillNormal(a, rng);
      FillNormal(e, rng);
      const nn::Tensor<double> xt = QSample(a, t, e, s);
      const double mean = xt.m.mean();
      const double var = (xt.m.array() - mean).square().sum() / (n - 1);
      const double want = 1.0, se = want * std::sqrt(2.0 / (n - 1));
      worst_z = std::max(worst_z, std::abs(var - want) / se);
    }

    nn::Tensor<double> truth(15, 2, 8, 8), cond(3, 2, 8, 8);
    for (Eigen::Index i = 0; i < truth.m.size(); ++i) truth.m.data()[i] = rng.Uniform(-1, 1);
    const OracleDenoiser oracle{truth};
    for (int steps : {s.T(), 50}) {
      std::vector<Rng> rngs{Rng(1), Rng(2)};
      const auto out = SampleLoop<double>(oracle, cond, Direction::kInverse, 15, s, std::span(rngs), steps);
      worst_oracle = std::max(worst_oracle, (out.m - truth.m).cwiseAbs().maxCoeff());
    }
  }
  ok = ok && worst_oracle < 1e-3 && worst_z < 3.0;
  return {ok, Fmt("q_sample(t=0) exact and SNR decreasing: %s; oracle sampler max err %.1e (< 1e-3); variance law max "
                  "%.2f SE (< 3), both schedules",
                  ok ? "yes" : "see details", worst_oracle, worst_z)};
}

// 4. Timestep selector.
Outcome Selector() {
  Rng rng(10);
  const int draws = 1000000, T = 200;
  const double p_dir = 0.5, p_t = 0.9;
  int64_t rendering = 0, at_max = 0, bad = 0;
  for (int i = 0; i < draws; ++i) {
    const TimestepPlan plan = SelectTimesteps(rng, 1, T, p_dir, p_t);
    const TimestepPair p = plan.pairs[0];
    bad += (p.t_attr == 0) == (p.t_rgb == 0);
    rendering += plan.direction == Direction::kRendering;
    at_max += plan.TargetSteps()[0] == T;
  }
  const double f_max = static_cast<double>(at_max) / draws, f_dir = static_cast<double>(rendering) / draws;
  const double sigma = std::sqrt(p_dir * (1 - p_dir) / draws);
  const bool ok = bad == 0 && std::abs(f_max - 0.10) <= 0.01 && std::abs(f_dir - p_dir) <= 3 * sigma;
  return {ok, Fmt("pairs without exactly one zero: %lld; t=T frequency %.4f (0.10 +- 0.01); rendering frequency %.5f "
                  "(0.5 +- %.5f)",
                  static_cast<long long>(bad), f_max, f_dir, 3 * sigma)};
}

// 5. Zero-link independence at initialization.
Outcome ZeroLink() {
  const ArchConfig arch;
  const DualNet<float> net(arch);
  Rng init(1);
  const auto params = net.Init(init);
  Rng rng(2);
  auto random = [&](int c) {
    nn::Tensor<float> t(c, 2, arch.image_size, arch.image_size);
    for (Eigen::Index i = 0; i < t.m.size(); ++i) t.m.data()[i] = static_cast<float>(rng.Uniform(-1, 1));
    return t;
  };
  const std::vector<int> t{17, 150};
  const nn::Tensor<float> attr = random(15), rgb = random(3);
  nn::Tensor<float> attr0 = attr, rgb0 = rgb;
  attr0.m.setZero();
  rgb0.m.setZero();
  const auto base = net.Forward(params, attr, rgb, t, t);
  const bool rgb_same = net.Forward(params, attr0, rgb, t, t).rgb->m == base.rgb->m;
  const bool attr_same = net.Forward(params, attr, rgb0, t, t).attr->m == base.attr->m;
  return {rgb_same && attr_same, Fmt("RGB head unchanged with attributes zeroed: %s; attribute head unchanged with RGB "
                                     "zeroed: %s",
                                     rgb_same ? "bit-identical" : "differs", attr_same ? "bit-identical" : "differs")};
}

// 6. Gradient fidelity.
Outcome GradientFidelity() {
  double worst = 0;
  int probes = 0;
  std::string where;
  for (Direction dir : {Direction::kInverse, Direction::kRendering}) {
    testing::GradCheckOptions o;
    o.direction = dir;
    o.probes = 256;
    const auto r = testing::RunGradCheck(o);
    probes += r.probed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = std::string(DirectionName(dir)) + ":" + r.worst;
    }
  }
  return {worst < 1e-4 && probes >= 200,
          Fmt("%d probes (inverse steps include the cycle path into the predicted stack), max rel err %.2e (< 1e-4) at %s",
              probes, worst, where.c_str())};
}

// 7. Overfit smoke test.
Outcome Overfit() {
  testing::TempDir dir("overfit");
  TrainingSet data;
  for (int i = 0; i < 4; ++i) {
    const SceneSpec s = SampleScene(ObjectSeed(7, i), LightSeed(7, i, i, 3 - i), i / 3.0, 1.0 - i / 3.0,
                                    SceneSampling{16, 2, 1.0});
    data.Add(RenderScene(s));
  }
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.batch_size = 4;
  cfg.checkpoint_every = 2000;
  cfg.seed = 1;
  ArchConfig arch;
  arch.image_size = 16;
  arch.base_width = 16;
  const TrainResult r = Train(cfg, arch, data, dir.path(), false);
  auto mean = [&](size_t from, size_t to) {
    double s = 0;
    for (size_t i = from; i < to; ++i) s += r.history[i].total;
    return s / static_cast<double>(to - from);
  };
  const double initial = mean(0, 10), final_loss = mean(1800, 2000);
  return {initial >= 5 * final_loss,
          Fmt("mean total loss of steps 0-9 %.4f, of steps 1800-1999 %.4f, ratio %.1fx (>= 5x)", initial, final_loss,
              initial / final_loss)};
}

// 10. Metric correctness and round trips.
Outcome Metrics() {
  bool ok = true;
  std::vector<std::string> notes;
  Rng rng(5);
  PlanarImage x(32, 32, 3);
  for (float& v : x.data) v = static_cast<float>(rng.Uniform());
  const bool ssim_one = Ssim(x, x) == 1.0;
  ok = ok && ssim_one;

  PlanarImage a(32, 32, 3), b(32, 32, 3);
  for (size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = static_cast<float>(0.25 + 0.5 * rng.Uniform());
    b.data[i] = a.data[i] + (i % 2 ? 0.1f : -0.1f);
  }
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) mse += std::pow(static_cast<double>(a.data[i]) - b.data[i], 2);
  mse /= static_cast<double>(a.data.size());
  const double psnr_err = std::abs(Psnr(a, b) - 10 * std::log10(1 / mse));
  ok = ok && psnr_err <= 1e-9 && std::abs(Psnr(a, b) - 20.0) < 1e-5;

  PlanarImage gt(16, 16, 3), pred(16, 16, 3), mask(16, 16, 1);
  std::fill(mask.data.begin(), mask.data.end(), 1.0f);
  const Vec3 axis = normalize(Vec3{1, 2, 2});
  for (size_t p = 0; p < gt.pixels(); ++p) {
    Vec3 n = normalize(Vec3{rng.Normal(), rng.Normal(), rng.Normal()});
    n = normalize(n - dot(n, axis) * axis);
    const double th = kPi / 3;
    const Vec3 r = std::cos(th) * n + std::sin(th) * cross(axis, n) + (1 - std::cos(th)) * dot(axis, n) * axis;
    for (int c = 0; c < 3; ++c) {
      gt.at(c, p) = static_cast<float>(n[c]);
      pred.at(c, p) = static_cast<float>(r[c]);
    }
  }
  const double cos_err = std::abs(NormalCosine(pred, gt, mask) - 0.5);
  ok = ok && cos_err <= 1e-6;

  // Dataset: every stored sample equals a fresh render and re-encodes to the same bytes.
  testing::TempDir dir("roundtrip");
  DatasetConfig dc;
  dc.num_objects = 2;
  dc.num_heldout = 10;
  dc.grid_step = 0.5;
  dc.seed = 2026;
  dc.output_dir = dir.path();
  const DatasetIndex idx = GenerateDataset(dc);
  size_t checked = 0, data_bad = 0;
  for (Split s : {Split::kTrain, Split::kHeldout})
    for (const auto& rec : idx.Records(s)) {
      const std::vector<char> bytes = detail::ReadFileBytes(dir.path() / rec.file);
      const auto [bundle, meta] = DecodeSample(bytes);
      const FrameBundle fresh = RenderRecord(rec, dc);
      bool same = EncodeSample(bundle, meta) == bytes && meta == rec.Meta();
      const auto got = detail::BundlePlanes(bundle), want = detail::BundlePlanes(fresh);
      for (size_t k = 0; k < got.size(); ++k) same = same && *got[k] == *want[k];
      data_bad += !same;
      ++checked;
    }
  ok = ok && data_bad == 0;

  // Checkpoint: save, load, identical bytes and forward outputs.
  const ArchConfig arch = testing::TinyArch();
  const DualNet<float> net(arch);
  Checkpoint ck{arch, ScheduleConfig{}, 3, InitialParams(net, 4), std::nullopt, std::nullopt};
  for (auto& e : ck.params)
    for (Eigen::Index k = 0; k < e.value.size(); ++k) e.value.data()[k] += static_cast<float>(0.05 * rng.Normal());
  SaveCheckpoint(dir.path() / "c.urck", ck);
  const Checkpoint back = LoadCheckpoint(dir.path() / "c.urck");
  nn::Tensor<float> ai(15, 1, 8, 8), ri(3, 1, 8, 8);
  ai.m.setConstant(0.3f);
  ri.m.setConstant(-0.2f);
  const std::vector<int> t0{0}, t1{90};
  const auto o1 = net.Forward(ck.params, ai, ri, t0, t1), o2 = net.Forward(back.params, ai, ri, t0, t1);
  const bool ck_ok = o1.rgb->m == o2.rgb->m && o1.attr->m == o2.attr->m &&
                     EncodeCheckpoint(back) == detail::ReadFileBytes(dir.path() / "c.urck");
  ok = ok && ck_ok;
  return {ok, Fmt("ssim(x,x) %s; psnr 20 dB case err %.1e (<= 1e-9); 60 deg cosine err %.1e (<= 1e-6); %zu dataset "
                  "samples, %zu mismatches; checkpoint round trip %s",
                  ssim_one ? "= 1" : "!= 1", psnr_err, cos_err, checked, data_bad, ck_ok ? "bit-exact" : "differs")};
}

// ---------------------------------------------------------------------------
// Scaled end-to-end runs (8, 9)

uint64_t Fnv1a64(const std::vector<char>& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ScaledRuns {
 public:
  ScaledRuns(RunConfig rc, fs::path cache) : rc_(std::move(rc)), cache_(std::move(cache)) {}

  /// Generates the dataset and trains both runs (resuming if interrupted).
  void Prepare() {
    Data();
    for (const char* run : {"cycle", "nocycle"}) TrainRun(run);
  }

  const ReportTable& Report(const std::string& run) {
    auto it = reports_.find(run);
    if (it != reports_.end()) return it->second;
    const fs::path ckpt = TrainRun(run);
    const fs::path report = cache_ / run / "report.json";
    const std::vector<char> ck_bytes = detail::ReadFileBytes(ckpt);
    const nlohmann::json key = {{"checkpoint_fnv", Fnv1a64(ck_bytes)},
                                {"sampler_steps", rc_.eval.options.sampler_steps},
                                {"per_object", rc_.eval.options.per_object},
                                {"num_relight_lights", rc_.eval.options.num_relight_lights},
                                {"seed", rc_.eval.options.seed}};
    if (fs::exists(report)) {
      const auto j = nlohmann::json::parse(std::ifstream(report));
      if (j.contains("key") && j["key"] == key) return reports_[run] = ReportFromJson(j);
    }
    std::printf("  evaluating %s run ...\n", run.c_str());
    std::fflush(stdout);
    const Checkpoint ck = DecodeCheckpoint(ck_bytes);
    const DualNet<float> net(ck.arch);
    const NoiseSchedule sched = ck.schedule.Make();
    const ReportTable table =
        EvaluateCheckpoint(net, ck.params, sched, Data(), Train(), rc_.eval.split, rc_.eval.options);
    nlohmann::json j = ReportJson(table);
    j["key"] = key;
    std::ofstream(report) << j.dump(2) << "\n";
    std::ofstream(cache_ / run / "report.txt") << ReportText(table);
    return reports_[run] = table;
  }

 private:
  const DatasetIndex& Data() {
    if (index_) return *index_;
    const fs::path dir = cache_ / "data";
    if (!fs::exists(dir / "index.json")) {
      std::printf("  generating dataset in %s ...\n", dir.string().c_str());
      std::fflush(stdout);
      DatasetConfig dc = rc_.data;
      dc.output_dir = dir;
      GenerateDataset(dc);
    }
    index_ = LoadIndex(dir);
    DatasetConfig want = rc_.data, have = index_->config;
    want.output_dir = have.output_dir = fs::path();
    want.previews = have.previews = false;
    if (nlohmann::json(want) != nlohmann::json(have))
      throw UsageError("cached dataset in " + dir.string() + " was generated with a different data config");
    return *index_;
  }

  const TrainingSet& Train() {
    if (!train_) train_ = LoadTrainingSet(Data(), Split::kTrain);
    return *train_;
  }

  fs::path TrainRun(const std::string& run) {
    TrainConfig tc = rc_.train;
    if (run == "nocycle") tc.lambda_cycle = 0.0;
    const fs::path dir = cache_ / run;
    const fs::path latest = dir / "latest.urck";
    if (fs::exists(latest)) {
      const Checkpoint ck = LoadCheckpoint(latest);
      if (ck.train_step >= tc.steps && ck.arch == rc_.arch && ck.schedule == tc.schedule) return latest;
    }
    std::printf("  training %s run (lambda_cycle %g, %lld steps) in %s ...\n", run.c_str(), tc.lambda_cycle,
                static_cast<long long>(tc.steps), dir.string().c_str());
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    unirender::Train(tc, rc_.arch, Train(), dir, true, [&](int64_t step, const LossBreakdown& lb) {
      if ((step + 1) % 1000 == 0) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("    %s step %lld total %.5f (%.0f s)\n", run.c_str(), static_cast<long long>(step + 1), lb.total, s);
        std::fflush(stdout);
      }
    });
    return latest;
  }

  RunConfig rc_;
  fs::path cache_;
  std::optional<DatasetIndex> index_;
  std::optional<TrainingSet> train_;
  std::map<std::string, ReportTable> reports_;
};

// 8. Scaled end-to-end against the dataset-mean baseline.
Outcome EndToEnd(ScaledRuns& runs) {
  const ReportTable& t = runs.Report("cycle");
  const ReportRow& m = t.rows.at("model");
  const ReportRow& b = t.rows.at("mean_predictor");
  const double mm = m.metallic_mse.value_or(INFINITY), rm = m.roughness_mse.value_or(INFINITY);
  const double bm = b.metallic_mse.value_or(0), br = b.roughness_mse.value_or(0);
  const double nc = m.normal_cosine.value_or(-1);
  const double rp = m.rendering.psnr.value_or(0), bp = b.rendering.psnr.value_or(0);
  const bool ok = mm < 0.5 * bm && rm < 0.5 * br && nc > 0.85 && rp >= bp + 3.0;
  return {ok, Fmt("metallic MSE %.4f vs 0.5 x baseline %.4f; roughness MSE %.4f vs %.4f; normal cosine %.3f (> 0.85); "
                  "render PSNR %.2f vs mean image %.2f + 3 dB; %lld samples, %lld failures",
                  mm, 0.5 * bm, rm, 0.5 * br, nc, rp, bp, static_cast<long long>(m.samples),
                  static_cast<long long>(m.failures))};
}

// 9. Cycle-constraint ablation direction.
Outcome CycleAblation(ScaledRuns& runs) {
  const ReportRow& on = runs.Report("cycle").rows.at("model");
  const ReportRow& off = runs.Report("nocycle").rows.at("model");
  const double a = on.rerender.psnr.value_or(0), b = off.rerender.psnr.value_or(0);
  return {a >= b, Fmt("inverse -> analytic re-render PSNR: lambda_cycle 0.1 %.2f dB, lambda_cycle 0 %.2f dB "
                      "(relight %.2f vs %.2f)",
                      a, b, on.relight.psnr.value_or(0), off.relight.psnr.value_or(0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria runner");
  std::string config = UNIRENDER_SOURCE_DIR "/configs/acceptance.json";
  std::string cache = UNIRENDER_BINARY_DIR "/acceptance_cache";
  std::vector<int> only;
  bool prepare = false;
  bool report = false;
  app.add_option("--config", config, "RunConfig for the scaled runs")->check(CLI::ExistingFile);
  app.add_option("--cache", cache, "Directory for the dataset, checkpoints and reports of the scaled runs");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_flag("--prepare", prepare, "Only generate data and train the scaled runs");
  app.add_flag("--report", report,
               "Exit 0 when every criterion reaches a verdict, PASS or FAIL; nonzero only if the runner errors");
  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig rc = LoadRunConfig(config);
    ScaledRuns runs(rc, cache);
    if (prepare) {
      runs.Prepare();
      return 0;
    }
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
        {1, BrdfSuite},
        {2, EnergySplit},
        {3, [&] { return ScheduleSampler(rc.train.schedule); }},
        {4, Selector},
        {5, ZeroLink},
        {6, GradientFidelity},
        {7, Overfit},
        {8, [&] { return EndToEnd(runs); }},
        {9, [&] { return CycleAblation(runs); }},
        {10, Metrics},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failed = 0, errored = 0;
    for (const auto& [id, fn] : criteria) {
      if (!selected.empty() && !selected.count(id)) continue;
      const auto t0 = std::chrono::steady_clock::now();
      Outcome o;
      try {
        o = fn();
      } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
        ++errored;
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("criterion %2d: %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
      std::fflush(stdout);
      failed += !o.pass;
    }
    std::printf("%d of %zu criteria failed\n", failed, selected.empty() ? criteria.size() : selected.size());
    if (report) return errored == 0 ? 0 : 1;
    return failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
