#pragma once

// A desk-scale stand-in for images and trained detectors. Every category
// (and the background) owns a random texture at pooled resolution; scenes
// render by tiling textures over their boxes, and surrogate detectors are
// nearest-prototype classifiers whose context stage is read off a
// co-occurrence matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxattack/annotations.hpp"
#include "ctxattack/context.hpp"
#include "ctxattack/detector.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/rng.hpp"

namespace ctxattack {

struct WorldSpec {
  int k = 10;
  Geometry geometry{64, 64, 8, 4};
  double texture_mean = 128.0;
  double texture_spread = 12.0;  // per-feature std of the category textures
  double pixel_noise = 3.0;      // per-pixel std of rendering noise
  /// Softmax temperature of the template detector, in units of the expected
  /// squared distance between two textures; 8 puts clean margins near 8 nats.
  double margin = 8.0;
  /// Logit shift per unit of co-occurrence excess and per unit of image
  /// fraction covered by the co-occurring class.
  double context_gain = 40.0;
};

class SyntheticWorld {
 public:
  SyntheticWorld(WorldSpec spec, std::uint64_t seed) : spec_(spec) {
    spec_.geometry.validate();
    if (spec_.k < 2) throw Error(ErrorKind::Usage, "a synthetic world needs k >= 2");
    Rng rng(derive_seed(seed, "world_textures"));
    const int F = spec_.geometry.features();
    textures_.resize(static_cast<std::size_t>(spec_.k + 1));
    for (auto& t : textures_) {
      t.resize(static_cast<std::size_t>(F));
      for (double& v : t) v = std::clamp(spec_.texture_mean + spec_.texture_spread * rng.normal(), 0.0, kPixelMax);
    }
  }

  const WorldSpec& spec() const { return spec_; }
  const Geometry& geometry() const { return spec_.geometry; }
  int k() const { return spec_.k; }
  const std::vector<double>& texture(int c) const { return textures_.at(static_cast<std::size_t>(c)); }

  /// Render a scene given in canvas coordinates. Later objects paint over
  /// earlier ones; pixel noise is drawn from `noise_seed`.
  Image render(const SceneAnnotation& scene, std::uint64_t noise_seed) const {
    const Geometry& geo = spec_.geometry;
    Image img = Image::filled(geo.height, geo.width, 0.0);
    const int P = geo.patch, bh = geo.cell_h() / P, bw = geo.cell_w() / P;
    Rng rng(noise_seed);
    for (int y = 0; y < geo.height; ++y) {
      for (int x = 0; x < geo.width; ++x) {
        int owner = spec_.k;
        const double px = x + 0.5, py = y + 0.5;
        for (const auto& o : scene.objects) {
          const auto c = o.box.corners();
          if (px >= c.x0 && px < c.x1 && py >= c.y0 && py < c.y1) owner = o.category;
        }
        const auto& tex = textures_[static_cast<std::size_t>(owner)];
        const int f = (((y % geo.cell_h()) / bh) * P + (x % geo.cell_w()) / bw) * 3;
        for (int ch = 0; ch < 3; ++ch)
          img.at(y, x, ch) = std::clamp(tex[static_cast<std::size_t>(f + ch)] + spec_.pixel_noise * rng.normal(),
                                        0.0, kPixelMax);
      }
    }
    return img;
  }

  /// Nearest-texture classifier over pooled cells. Texture estimates are
  /// perturbed by `jitter` (per-feature std) so distinct seeds give distinct
  /// but similar surrogates. With a co-occurrence matrix, the context stage
  /// adds gain * (p(j | c) - 1/k) * (fraction of cells showing j) to class c.
  ToyDetector surrogate(std::string id, std::uint64_t seed, double jitter,
                        const CooccurrenceMatrix* cooccur = nullptr) const {
    const Geometry& geo = spec_.geometry;
    const int F = geo.features(), C = spec_.k + 1;
    ToyDetector d = ToyDetector::zeros(std::move(id), geo, spec_.k);
    const double temperature = 2.0 * F * spec_.texture_spread * spec_.texture_spread / (2.0 * spec_.margin);
    Rng rng(derive_seed(seed, "surrogate_jitter"));
    for (int c = 0; c < C; ++c) {
      double sq = 0;
      for (int f = 0; f < F; ++f) {
        const double t = textures_[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)] + jitter * rng.normal();
        d.weights[static_cast<std::size_t>(c * F + f)] = t / temperature;
        sq += t * t;
      }
      d.bias[static_cast<std::size_t>(c)] = -sq / (2.0 * temperature);
    }
    if (cooccur) {
      if (cooccur->k != spec_.k) throw Error(ErrorKind::Usage, "co-occurrence size does not match the world");
      d.context.assign(static_cast<std::size_t>(C * C), 0.0);
      for (int c = 0; c < spec_.k; ++c)
        for (int j = 0; j < spec_.k; ++j)
          d.context[static_cast<std::size_t>(c * C + j)] = spec_.context_gain * ((*cooccur)(c, j) - 1.0 / spec_.k);
    }
    return d;
  }

 private:
  WorldSpec spec_;
  std::vector<std::vector<double>> textures_;
};

/// Rescale a scene into the canvas of `geo`.
inline SceneAnnotation fit_to_canvas(const SceneAnnotation& scene, const Geometry& geo) {
  SceneAnnotation out = scene;
  const double sx = geo.width / scene.width, sy = geo.height / scene.height;
  out.width = geo.width;
  out.height = geo.height;
  for (auto& o : out.objects) {
    o.box.cx *= sx;
    o.box.w *= sx;
    o.box.cy *= sy;
    o.box.h *= sy;
  }
  return out;
}

}  // namespace ctxattack
