// Copyright 2026 The unirender Authors
// SPDX-License-Identifier: Apache-2.0

// Analytic metallic/roughness shading for sphere scenes under directional
// lights. Produces the RGB image together with the intrinsic channels it was
// computed from, so that rgb == diffuse + specular holds per pixel.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "unirender/common.hpp"

namespace unirender {

inline constexpr double kRoughnessFloor = 0.02;
inline constexpr double kDielectricF0 = 0.04;
inline constexpr double kUnitTolerance = 1e-5;

namespace detail {
inline bool InUnit(double v) { return v >= 0.0 && v <= 1.0; }
}  // namespace detail

class MaterialParams {
 public:
  MaterialParams() = default;
  MaterialParams(double metallic, double roughness, Rgb albedo)
      : metallic_(metallic), roughness_(roughness), albedo_(albedo) {
    if (!detail::InUnit(metallic) || !detail::InUnit(roughness) || !detail::InUnit(albedo.r) ||
        !detail::InUnit(albedo.g) || !detail::InUnit(albedo.b)) {
      throw UsageError("MaterialParams: metallic, roughness and albedo must lie in [0,1]");
    }
  }

  double metallic() const { return metallic_; }
  double roughness() const { return roughness_; }
  Rgb albedo() const { return albedo_; }

  /// Normal-incidence reflectance of the metallic workflow.
  Rgb F0() const { return Rgb::Gray(kDielectricF0 * (1.0 - metallic_)) + albedo_ * metallic_; }

  friend bool operator==(const MaterialParams&, const MaterialParams&) = default;

 private:
  double metallic_ = 0.0;
  double roughness_ = 0.5;
  Rgb albedo_ = Rgb::Gray(0.5);
};

/// Directional light; `direction` points from the surface toward the light.
struct LightSpec {
  Vec3 direction{0, 0, 1};
  Rgb radiance = Rgb::Gray(1.0);

  LightSpec() = default;
  LightSpec(Vec3 dir, Rgb rad) : direction(dir), radiance(rad) {
    if (std::abs(length(dir) - 1.0) > 1e-6) throw UsageError("LightSpec: direction must be unit length");
    if (rad.r < 0 || rad.g < 0 || rad.b < 0) throw UsageError("LightSpec: radiance must be >= 0");
  }
};

struct Sphere {
  Vec3 center;
  double radius = 0.5;
  MaterialParams material;
};

/// Fixed front-facing orthographic camera looking down -z. The image covers
/// [-world_extent, world_extent] in x and y.
struct OrthoCamera {
  int image_size = 32;
  double world_extent = 1.0;

  friend bool operator==(const OrthoCamera&, const OrthoCamera&) = default;
};

inline constexpr Vec3 kViewDirection{0.0, 0.0, 1.0};

class SceneSpec {
 public:
  SceneSpec(std::vector<Sphere> spheres, std::vector<LightSpec> lights, Rgb ambient, OrthoCamera camera)
      : spheres_(std::move(spheres)), lights_(std::move(lights)), ambient_(ambient), camera_(camera) {
    if (spheres_.empty()) throw UsageError("SceneSpec: at least one sphere is required");
    if (lights_.empty() || lights_.size() > 4) throw UsageError("SceneSpec: between 1 and 4 lights are required");
    if (ambient_.r < 0 || ambient_.g < 0 || ambient_.b < 0) throw UsageError("SceneSpec: ambient must be >= 0");
    if (camera_.image_size <= 0 || !(camera_.world_extent > 0)) throw UsageError("SceneSpec: invalid camera");
    for (const Sphere& s : spheres_) {
      if (!(s.radius > 0)) throw UsageError("SceneSpec: sphere radius must be > 0");
      if (std::abs(s.center.x) + s.radius > camera_.world_extent ||
          std::abs(s.center.y) + s.radius > camera_.world_extent) {
        throw UsageError("SceneSpec: sphere does not fit inside the camera extent");
      }
    }
  }

  const std::vector<Sphere>& spheres() const { return spheres_; }
  const std::vector<LightSpec>& lights() const { return lights_; }
  Rgb ambient() const { return ambient_; }
  const OrthoCamera& camera() const { return camera_; }

  SceneSpec WithLights(std::vector<LightSpec> lights, Rgb ambient) const {
    return SceneSpec(spheres_, std::move(lights), ambient, camera_);
  }

 private:
  std::vector<Sphere> spheres_;
  std::vector<LightSpec> lights_;
  Rgb ambient_;
  OrthoCamera camera_;
};

/// Planar float image: channel c of pixel p lives at data[c * H * W + p].
struct PlanarImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  PlanarImage() = default;
  PlanarImage(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.0f) {}

  size_t pixels() const { return static_cast<size_t>(width) * height; }
  float& at(int c, size_t p) { return data[c * pixels() + p]; }
  float at(int c, size_t p) const { return data[c * pixels() + p]; }
  std::span<float> plane(int c) { return {data.data() + c * pixels(), pixels()}; }
  std::span<const float> plane(int c) const { return {data.data() + c * pixels(), pixels()}; }

  friend bool operator==(const PlanarImage&, const PlanarImage&) = default;
};

/// One rendered sample with its intrinsic decomposition.
struct FrameBundle {
  PlanarImage rgb, albedo, normal, specular, diffuse;
  PlanarImage mask;  // single channel, 0 or 1
  MaterialParams material;

  FrameBundle() = default;
  FrameBundle(int w, int h)
      : rgb(w, h, 3), albedo(w, h, 3), normal(w, h, 3), specular(w, h, 3), diffuse(w, h, 3), mask(w, h, 1) {}

  int width() const { return rgb.width; }
  int height() const { return rgb.height; }
  size_t pixels() const { return rgb.pixels(); }
  bool foreground(size_t p) const { return mask.data[p] != 0.0f; }

  friend bool operator==(const FrameBundle&, const FrameBundle&) = default;
};

/// GGX / Trowbridge-Reitz normal distribution with alpha = roughness^2.
inline double GgxNdf(double n_dot_h, double roughness) {
  const double r = std::max(roughness, kRoughnessFloor);
  const double alpha = r * r;
  const double a2 = alpha * alpha;
  const double d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

inline Rgb FresnelSchlick(double h_dot_v, Rgb f0) {
  const double w = std::pow(1.0 - h_dot_v, 5.0);
  // f0 (1 - w) + w: exact at both endpoints (w = 0 and w = 1).
  return {f0.r * (1.0 - w) + w, f0.g * (1.0 - w) + w, f0.b * (1.0 - w) + w};
}

/// Schlick-GGX masking term for one direction, k = alpha / 2.
inline double SmithG1(double n_dot_x, double roughness) {
  const double r = std::max(roughness, kRoughnessFloor);
  const double k = r * r / 2.0;
  return n_dot_x / (n_dot_x * (1.0 - k) + k);
}

inline double SmithG(double n_dot_l, double n_dot_v, double roughness) {
  return SmithG1(n_dot_l, roughness) * SmithG1(n_dot_v, roughness);
}

/// Cook-Torrance specular BRDF value D*G*F / (4 (n.l)(n.v)); zero below the horizon.
inline Rgb SpecularBrdf(const MaterialParams& mat, Vec3 n, Vec3 v, Vec3 l) {
  const double nl = dot(n, l);
  const double nv = dot(n, v);
  if (nl <= 0.0 || nv <= 0.0) return {};
  const Vec3 h = normalize(l + v);
  const double nh = std::max(dot(n, h), 0.0);
  const double hv = std::clamp(dot(h, v), 0.0, 1.0);
  const double dg = GgxNdf(nh, mat.roughness()) * SmithG(nl, nv, mat.roughness());
  return FresnelSchlick(hv, mat.F0()) * (dg / (4.0 * nl * nv));
}

struct ShadingSplit {
  Rgb diffuse;
  Rgb specular;
};

inline ShadingSplit ShadePixel(const MaterialParams& mat, Vec3 normal, Vec3 view, std::span<const LightSpec> lights,
                               Rgb ambient) {
  if (std::abs(length(normal) - 1.0) > kUnitTolerance || std::abs(length(view) - 1.0) > kUnitTolerance) {
    throw UsageError("ShadePixel: normal and view must be unit vectors");
  }
  if (dot(normal, view) <= 0.0) throw UsageError("ShadePixel: surface is back-facing");

  const double kd = 1.0 - mat.metallic();
  const Rgb albedo = mat.albedo();
  ShadingSplit out;
  for (const LightSpec& light : lights) {
    const double nl = dot(normal, light.direction);
    if (nl <= 0.0) continue;
    out.diffuse += albedo * (kd / kPi * nl) * light.radiance;
    out.specular += SpecularBrdf(mat, normal, view, light.direction) * nl * light.radiance;
  }
  out.diffuse += albedo * ambient * kd;
  return out;
}

/// Per-pixel geometry and albedo; the input to the shading pass.
struct GBuffer {
  PlanarImage albedo;  // 3 channels
  PlanarImage normal;  // 3 channels, unit on foreground
  PlanarImage mask;    // 1 channel

  GBuffer() = default;
  GBuffer(int w, int h) : albedo(w, h, 3), normal(w, h, 3), mask(w, h, 1) {}
};

/// Ray casts the spheres through the orthographic camera.
inline GBuffer RasterizeScene(const SceneSpec& scene) {
  const OrthoCamera& cam = scene.camera();
  const int n = cam.image_size;
  GBuffer gb(n, n);
  const double pixel = 2.0 * cam.world_extent / n;
  for (int i = 0; i < n; ++i) {
    const double y = cam.world_extent - (i + 0.5) * pixel;
    for (int j = 0; j < n; ++j) {
      const double x = -cam.world_extent + (j + 0.5) * pixel;
      const Sphere* best = nullptr;
      double best_z = -INFINITY;
      for (const Sphere& s : scene.spheres()) {
        const double dx = x - s.center.x, dy = y - s.center.y;
        const double d2 = dx * dx + dy * dy;
        const double r2 = s.radius * s.radius;
        if (d2 >= r2) continue;
        const double z = s.center.z + std::sqrt(r2 - d2);
        if (z > best_z) {
          best_z = z;
          best = &s;
        }
      }
      if (best == nullptr) continue;
      const Vec3 nrm = normalize(Vec3{x, y, best_z} - best->center);
      const auto nz = static_cast<float>(nrm.z);
      if (!(nz > 0.0f)) continue;  // silhouette pixel that rounds to grazing
      const size_t p = static_cast<size_t>(i) * n + j;
      gb.mask.at(0, p) = 1.0f;
      for (int c = 0; c < 3; ++c) {
        gb.normal.at(c, p) = static_cast<float>(nrm[c]);
        gb.albedo.at(c, p) = static_cast<float>(best->material.albedo()[c]);
      }
    }
  }
  return gb;
}

/// Shades a G-buffer with one metallic/roughness pair. Normals are
/// renormalized in double precision; normals that face away from the camera
/// (possible for decoded predictions, never for rasterized geometry) are
/// tilted to just above grazing.
inline FrameBundle ShadeGBuffer(const GBuffer& gb, double metallic, double roughness,
                                std::span<const LightSpec> lights, Rgb ambient) {
  const int w = gb.mask.width, h = gb.mask.height;
  FrameBundle out(w, h);
  out.material = MaterialParams(metallic, roughness, Rgb{});
  bool have_albedo = false;
  for (size_t p = 0; p < out.pixels(); ++p) {
    if (gb.mask.at(0, p) == 0.0f) continue;
    Vec3 n{gb.normal.at(0, p), gb.normal.at(1, p), gb.normal.at(2, p)};
    if (!(length(n) > 0.0)) n = kViewDirection;
    n = normalize(n);
    if (n.z <= 1e-4) {
      const double t = std::hypot(n.x, n.y);
      n = t > 0.0 ? normalize(Vec3{n.x / t, n.y / t, 1e-3}) : kViewDirection;
    }
    const Rgb albedo{std::clamp<double>(gb.albedo.at(0, p), 0.0, 1.0), std::clamp<double>(gb.albedo.at(1, p), 0.0, 1.0),
                     std::clamp<double>(gb.albedo.at(2, p), 0.0, 1.0)};
    if (!have_albedo) {
      out.material = MaterialParams(metallic, roughness, albedo);
      have_albedo = true;
    }
    const ShadingSplit s = ShadePixel(MaterialParams(metallic, roughness, albedo), n, kViewDirection, lights, ambient);
    out.mask.at(0, p) = 1.0f;
    for (int c = 0; c < 3; ++c) {
      const auto d = static_cast<float>(s.diffuse[c]);
      const auto sp = static_cast<float>(s.specular[c]);
      out.diffuse.at(c, p) = d;
      out.specular.at(c, p) = sp;
      out.rgb.at(c, p) = d + sp;
      out.albedo.at(c, p) = static_cast<float>(albedo[c]);
      out.normal.at(c, p) = static_cast<float>(n[c]);
    }
  }
  return out;
}

/// Renders a scene. All spheres share the first sphere's metallic and
/// roughness; albedo is taken per sphere.
inline FrameBundle RenderScene(const SceneSpec& scene) {
  const MaterialParams& mat = scene.spheres().front().material;
  FrameBundle out = ShadeGBuffer(RasterizeScene(scene), mat.metallic(), mat.roughness(), scene.lights(), scene.ambient());
  out.material = mat;
  return out;
}

/// Maps unbounded non-negative radiance into [0, 1).
inline double CompressRadiance(double x) { return x / (1.0 + x); }
inline double ExpandRadiance(double u) { return u / (1.0 - u); }

/// Display transform for previews: clamp to [0,1], then gamma 2.2.
inline double ToDisplay(double linear) { return std::pow(std::clamp(linear, 0.0, 1.0), 1.0 / 2.2); }

}  // namespace unirender
