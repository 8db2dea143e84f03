#pragma once

// Grid-cell toy detector with closed-form image gradients.
//
// Each cell of a G x G grid is average-pooled to a P x P x 3 patch and mapped
// linearly to k+1 local logits (k categories, background last). A context
// stage then adds C * g to every cell, where g is the mean over cells of the
// local softmax: a cell's final score for class c depends on which classes
// the detector sees elsewhere in the image. With C = 0 the detector is purely
// local.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxattack/annotations.hpp"
#include "ctxattack/error.hpp"

namespace ctxattack {

inline constexpr double kDefaultScoreThreshold = 0.2;

struct Geometry {
  int height = 64;
  int width = 64;
  int grid = 8;
  int patch = 4;

  int cell_h() const { return height / grid; }
  int cell_w() const { return width / grid; }
  int cells() const { return grid * grid; }
  int features() const { return patch * patch * 3; }
  int pixels() const { return height * width * 3; }

  void validate() const {
    if (height <= 0 || width <= 0 || grid <= 0 || patch <= 0)
      throw Error(ErrorKind::Usage, "detector geometry must be positive");
    if (height % grid != 0 || width % grid != 0)
      throw Error(ErrorKind::Usage, "image dimensions must be divisible by the grid");
    if (cell_h() % patch != 0 || cell_w() % patch != 0)
      throw Error(ErrorKind::Usage, "cell dimensions must be divisible by the patch size");
  }

  bool operator==(const Geometry&) const = default;
};

/// H x W x 3 image, interleaved channels, values nominally in [0, 255].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  static Image filled(int h, int w, double v) {
    return {h, w, std::vector<double>(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, v)};
  }
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }
  double& at(int y, int x, int c) { return values[index(y, x, c)]; }
  double at(int y, int x, int c) const { return values[index(y, x, c)]; }
  std::size_t size() const { return values.size(); }

  bool operator==(const Image&) const = default;
};

struct ToyDetector {
  std::string id;
  Geometry geometry;
  int k = 1;                     // object categories; background is class k
  std::vector<double> weights;   // (k+1) x features, row-major
  std::vector<double> bias;      // k+1
  std::vector<double> context;   // (k+1) x (k+1); empty disables the context stage

  int classes() const { return k + 1; }
  int background() const { return k; }
  bool has_context() const { return !context.empty(); }

  static ToyDetector zeros(std::string id, Geometry geo, int k) {
    geo.validate();
    const auto c = static_cast<std::size_t>(k + 1);
    return {std::move(id), geo, k, std::vector<double>(c * static_cast<std::size_t>(geo.features()), 0.0),
            std::vector<double>(c, 0.0), {}};
  }

  void validate() const {
    geometry.validate();
    const auto c = static_cast<std::size_t>(classes());
    if (k < 1) throw Error(ErrorKind::Usage, "detector needs at least one category");
    if (weights.size() != c * static_cast<std::size_t>(geometry.features()) || bias.size() != c)
      throw Error(ErrorKind::Data, "detector weight dimensions inconsistent with geometry");
    if (!context.empty() && context.size() != c * c)
      throw Error(ErrorKind::Data, "detector context matrix must be (k+1) x (k+1)");
  }
};

struct ForwardPass {
  int cells = 0;
  int classes = 0;
  std::vector<double> pooled;        // cells x features
  std::vector<double> local_probs;   // cells x classes (only with context)
  std::vector<double> context_in;    // classes: mean local softmax
  std::vector<double> logits;        // cells x classes
  std::vector<double> probs;         // cells x classes
};

namespace detail {

inline void check_image(const ToyDetector& det, const Image& img) {
  if (img.height != det.geometry.height || img.width != det.geometry.width ||
      img.values.size() != static_cast<std::size_t>(det.geometry.pixels()))
    throw Error(ErrorKind::Usage, "image dimensions do not match detector '" + det.id + "'");
}

inline void softmax(const double* z, double* p, int n) {
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double s = 0;
  for (int i = 0; i < n; ++i) s += (p[i] = std::exp(z[i] - mx));
  for (int i = 0; i < n; ++i) p[i] /= s;
}

inline double log_sum_exp(const double* z, int n) {
  double mx = z[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
  double s = 0;
  for (int i = 0; i < n; ++i) s += std::exp(z[i] - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Average-pool every cell to patch x patch x 3.
inline std::vector<double> pool(const Geometry& geo, const Image& img) {
  const int P = geo.patch, F = geo.features();
  const int bh = geo.cell_h() / P, bw = geo.cell_w() / P;
  const double inv = 1.0 / (bh * bw);
  std::vector<double> out(static_cast<std::size_t>(geo.cells()) * static_cast<std::size_t>(F), 0.0);
  for (int y = 0; y < geo.height; ++y) {
    const int gy = y / geo.cell_h(), py = (y % geo.cell_h()) / bh;
    for (int x = 0; x < geo.width; ++x) {
      const int gx = x / geo.cell_w(), px = (x % geo.cell_w()) / bw;
      double* dst = out.data() + static_cast<std::size_t>(gy * geo.grid + gx) * static_cast<std::size_t>(F) +
                    static_cast<std::size_t>((py * P + px) * 3);
      const double* src = img.values.data() + img.index(y, x, 0);
      dst[0] += src[0] * inv;
      dst[1] += src[1] * inv;
      dst[2] += src[2] * inv;
    }
  }
  return out;
}

inline ForwardPass forward(const ToyDetector& det, const Image& img) {
  detail::check_image(det, img);
  const int N = det.geometry.cells(), C = det.classes(), F = det.geometry.features();
  ForwardPass fp;
  fp.cells = N;
  fp.classes = C;
  fp.pooled = pool(det.geometry, img);
  fp.logits.assign(static_cast<std::size_t>(N * C), 0.0);
  fp.probs.assign(static_cast<std::size_t>(N * C), 0.0);
  for (int n = 0; n < N; ++n) {
    const double* x = fp.pooled.data() + static_cast<std::size_t>(n * F);
    for (int c = 0; c < C; ++c) {
      const double* w = det.weights.data() + static_cast<std::size_t>(c * F);
      double z = det.bias[static_cast<std::size_t>(c)];
      for (int f = 0; f < F; ++f) z += w[f] * x[f];
      fp.logits[static_cast<std::size_t>(n * C + c)] = z;
    }
  }
  if (det.has_context()) {
    fp.local_probs.assign(static_cast<std::size_t>(N * C), 0.0);
    fp.context_in.assign(static_cast<std::size_t>(C), 0.0);
    for (int n = 0; n < N; ++n) {
      double* p1 = fp.local_probs.data() + static_cast<std::size_t>(n * C);
      detail::softmax(fp.logits.data() + static_cast<std::size_t>(n * C), p1, C);
      for (int c = 0; c < C; ++c) fp.context_in[static_cast<std::size_t>(c)] += p1[c] / N;
    }
    std::vector<double> shift(static_cast<std::size_t>(C), 0.0);
    for (int c = 0; c < C; ++c)
      for (int j = 0; j < C; ++j)
        shift[static_cast<std::size_t>(c)] +=
            det.context[static_cast<std::size_t>(c * C + j)] * fp.context_in[static_cast<std::size_t>(j)];
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) fp.logits[static_cast<std::size_t>(n * C + c)] += shift[static_cast<std::size_t>(c)];
  }
  for (int n = 0; n < N; ++n)
    detail::softmax(fp.logits.data() + static_cast<std::size_t>(n * C), fp.probs.data() + static_cast<std::size_t>(n * C), C);
  return fp;
}

/// Per-cell predicted class; ties resolve to background.
inline std::vector<int> cell_labels(const ForwardPass& fp, int background) {
  std::vector<int> out(static_cast<std::size_t>(fp.cells));
  for (int n = 0; n < fp.cells; ++n) {
    const double* p = fp.probs.data() + static_cast<std::size_t>(n * fp.classes);
    int best = background;
    for (int c = 0; c < fp.classes; ++c)
      if (p[c] > p[best]) best = c;
    out[static_cast<std::size_t>(n)] = best;
  }
  return out;
}

struct ScoredDetection {
  int label = 0;
  BBox box;
  double score = 0;
};

/// Non-background cells scoring at least `threshold`, merged into one box per
/// 4-connected component of equal label.
inline std::vector<ScoredDetection> detect(const ToyDetector& det, const Image& img,
                                           double threshold = kDefaultScoreThreshold) {
  const auto fp = forward(det, img);
  const auto labels = cell_labels(fp, det.background());
  const int G = det.geometry.grid;
  std::vector<char> keep(labels.size(), 0), seen(labels.size(), 0);
  for (int n = 0; n < fp.cells; ++n) {
    const int l = labels[static_cast<std::size_t>(n)];
    keep[static_cast<std::size_t>(n)] =
        l != det.background() && fp.probs[static_cast<std::size_t>(n * fp.classes + l)] >= threshold;
  }
  std::vector<ScoredDetection> out;
  const double ch = det.geometry.cell_h(), cw = det.geometry.cell_w();
  for (int start = 0; start < fp.cells; ++start) {
    if (!keep[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
    const int label = labels[static_cast<std::size_t>(start)];
    int x0 = G, y0 = G, x1 = -1, y1 = -1;
    double score = 0;
    std::vector<int> stack{start};
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      const int gy = n / G, gx = n % G;
      x0 = std::min(x0, gx), x1 = std::max(x1, gx), y0 = std::min(y0, gy), y1 = std::max(y1, gy);
      score = std::max(score, fp.probs[static_cast<std::size_t>(n * fp.classes + label)]);
      const int nbrs[4][2] = {{gy - 1, gx}, {gy + 1, gx}, {gy, gx - 1}, {gy, gx + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= G || nb[1] < 0 || nb[1] >= G) continue;
        const int m = nb[0] * G + nb[1];
        if (keep[static_cast<std::size_t>(m)] && !seen[static_cast<std::size_t>(m)] &&
            labels[static_cast<std::size_t>(m)] == label) {
          seen[static_cast<std::size_t>(m)] = 1;
          stack.push_back(m);
        }
      }
    }
    out.push_back({label, BBox::from_corners({x0 * cw, y0 * ch, (x1 + 1) * cw, (y1 + 1) * ch}), score});
  }
  return out;
}

/// Per-cell target class and confidence. The target distribution of a cell
/// puts `confidence` on its label and spreads the rest evenly.
struct DesiredOutput {
  int classes = 0;
  std::vector<int> label;
  std::vector<double> confidence;

  int cells() const { return static_cast<int>(label.size()); }
  double target(int cell, int c) const {
    const double conf = confidence[static_cast<std::size_t>(cell)];
    return c == label[static_cast<std::size_t>(cell)] ? conf : (1.0 - conf) / (classes - 1);
  }
};

namespace detail {

inline void check_desired(const ToyDetector& det, const DesiredOutput& d) {
  if (d.cells() != det.geometry.cells() || d.classes != det.classes() ||
      d.confidence.size() != d.label.size())
    throw Error(ErrorKind::Usage, "desired output does not match detector '" + det.id + "'");
}

}  // namespace detail

/// Mean cross-entropy between per-cell softmax and the desired targets.
inline double loss(const ToyDetector& det, const Image& img, const DesiredOutput& desired) {
  detail::check_desired(det, desired);
  const auto fp = forward(det, img);
  const int C = fp.classes;
  double total = 0;
  for (int n = 0; n < fp.cells; ++n) {
    const double* z = fp.logits.data() + static_cast<std::size_t>(n * C);
    const double lse = detail::log_sum_exp(z, C);
    for (int c = 0; c < C; ++c) {
      const double y = desired.target(n, c);
      if (y != 0) total -= y * (z[c] - lse);
    }
  }
  return total / fp.cells;
}

struct LossAndGrad {
  double loss = 0;
  std::vector<double> grad;  // same layout as Image::values
};

/// Loss and its exact gradient with respect to every pixel. Pixels with a zero
/// entry in `mask` (when given) get a zero gradient.
inline LossAndGrad loss_and_grad(const ToyDetector& det, const Image& img, const DesiredOutput& desired,
                                 std::span<const std::uint8_t> mask = {}) {
  detail::check_desired(det, desired);
  const auto fp = forward(det, img);
  const Geometry& geo = det.geometry;
  const int N = fp.cells, C = fp.classes, F = geo.features();

  LossAndGrad out;
  std::vector<double> dz(static_cast<std::size_t>(N * C));
  for (int n = 0; n < N; ++n) {
    const double* z = fp.logits.data() + static_cast<std::size_t>(n * C);
    const double lse = detail::log_sum_exp(z, C);
    for (int c = 0; c < C; ++c) {
      const double y = desired.target(n, c);
      if (y != 0) out.loss -= y * (z[c] - lse);
      dz[static_cast<std::size_t>(n * C + c)] = (fp.probs[static_cast<std::size_t>(n * C + c)] - y) / N;
    }
  }
  out.loss /= N;

  // Back through the context stage: dL/dg = C^T sum_n dz_n, and the local
  // softmax Jacobian J v = p1 * (v - <p1, v>).
  std::vector<double> dz1 = dz;
  if (det.has_context()) {
    std::vector<double> sum_dz(static_cast<std::size_t>(C), 0.0), dg(static_cast<std::size_t>(C), 0.0);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) sum_dz[static_cast<std::size_t>(c)] += dz[static_cast<std::size_t>(n * C + c)];
    for (int j = 0; j < C; ++j)
      for (int c = 0; c < C; ++c)
        dg[static_cast<std::size_t>(j)] +=
            det.context[static_cast<std::size_t>(c * C + j)] * sum_dz[static_cast<std::size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const double* p1 = fp.local_probs.data() + static_cast<std::size_t>(n * C);
      double dot = 0;
      for (int c = 0; c < C; ++c) dot += p1[c] * dg[static_cast<std::size_t>(c)];
      for (int c = 0; c < C; ++c)
        dz1[static_cast<std::size_t>(n * C + c)] += p1[c] * (dg[static_cast<std::size_t>(c)] - dot) / N;
    }
  }

  std::vector<double> dpool(static_cast<std::size_t>(N * F), 0.0);
  for (int n = 0; n < N; ++n) {
    double* dp = dpool.data() + static_cast<std::size_t>(n * F);
    for (int c = 0; c < C; ++c) {
      const double g = dz1[static_cast<std::size_t>(n * C + c)];
      if (g == 0) continue;
      const double* w = det.weights.data() + static_cast<std::size_t>(c * F);
      for (int f = 0; f < F; ++f) dp[f] += g * w[f];
    }
  }

  const int P = geo.patch, bh = geo.cell_h() / P, bw = geo.cell_w() / P;
  const double inv = 1.0 / (bh * bw);
  out.grad.assign(img.values.size(), 0.0);
  for (int y = 0; y < geo.height; ++y) {
    const int gy = y / geo.cell_h(), py = (y % geo.cell_h()) / bh;
    for (int x = 0; x < geo.width; ++x) {
      const int gx = x / geo.cell_w(), px = (x % geo.cell_w()) / bw;
      const double* src = dpool.data() + static_cast<std::size_t>(gy * geo.grid + gx) * static_cast<std::size_t>(F) +
                          static_cast<std::size_t>((py * P + px) * 3);
      double* dst = out.grad.data() + img.index(y, x, 0);
      for (int c = 0; c < 3; ++c) dst[c] = src[c] * inv;
    }
  }
  if (!mask.empty()) {
    if (mask.size() != out.grad.size()) throw Error(ErrorKind::Usage, "gradient mask has the wrong size");
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) out.grad[i] = 0.0;
  }
  return out;
}

inline std::vector<double> grad_wrt_image(const ToyDetector& det, const Image& img, const DesiredOutput& desired,
                                          std::span<const std::uint8_t> mask = {}) {
  return loss_and_grad(det, img, desired, mask).grad;
}

/// Ensemble weights must be positive and sum to 1. `allow_zero` relaxes
/// positivity to non-negativity (used to isolate single ensemble members).
inline void validate_alphas(std::span<const double> alphas, std::size_t n, bool allow_zero = false) {
  if (alphas.size() != n || n == 0)
    throw Error(ErrorKind::Usage, "need exactly one ensemble weight per detector");
  double s = 0;
  for (double a : alphas) {
    if (!(a > 0) && !(allow_zero && a == 0)) throw Error(ErrorKind::Usage, "ensemble weights must be positive");
    s += a;
  }
  if (std::abs(s - 1.0) > 1e-9) throw Error(ErrorKind::Usage, "ensemble weights must sum to 1");
}

/// Weighted ensemble loss sum_i alpha_i L_i and its gradient. desired[i] is
/// detector i's own rasterization of the plan. Summation order is fixed;
/// zero-weight members (only with `allow_zero`) are skipped.
inline LossAndGrad ensemble_loss_and_grad(std::span<const ToyDetector> detectors, std::span<const double> alphas,
                                          const Image& img, std::span<const DesiredOutput> desired,
                                          bool allow_zero = false) {
  validate_alphas(alphas, detectors.size(), allow_zero);
  if (desired.size() != detectors.size())
    throw Error(ErrorKind::Usage, "need one desired output per detector");
  LossAndGrad total;
  total.grad.assign(img.values.size(), 0.0);
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    if (alphas[i] == 0) continue;
    auto lg = loss_and_grad(detectors[i], img, desired[i]);
    total.loss += alphas[i] * lg.loss;
    for (std::size_t p = 0; p < lg.grad.size(); ++p) total.grad[p] += alphas[i] * lg.grad[p];
  }
  return total;
}

// ---------------------------------------------------------------------------
// JSON (nested arrays, versioned)

inline constexpr int kDetectorFormatVersion = 1;

inline nlohmann::json to_json(const ToyDetector& d) {
  const int C = d.classes(), F = d.geometry.features();
  nlohmann::json w = nlohmann::json::array(), ctx = nlohmann::json::array();
  for (int c = 0; c < C; ++c)
    w.push_back(std::vector<double>(d.weights.begin() + c * F, d.weights.begin() + (c + 1) * F));
  if (d.has_context())
    for (int c = 0; c < C; ++c)
      ctx.push_back(std::vector<double>(d.context.begin() + c * C, d.context.begin() + (c + 1) * C));
  return {{"version", kDetectorFormatVersion},
          {"id", d.id},
          {"geometry",
           {{"height", d.geometry.height}, {"width", d.geometry.width}, {"grid", d.geometry.grid},
            {"patch", d.geometry.patch}}},
          {"k", d.k},
          {"weights", w},
          {"bias", d.bias},
          {"context", ctx}};
}

inline ToyDetector detector_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kDetectorFormatVersion)
    throw Error(ErrorKind::Version, "unsupported detector format version");
  ToyDetector d;
  try {
    d.id = j.at("id").get<std::string>();
    const auto& g = j.at("geometry");
    d.geometry = {g.at("height").get<int>(), g.at("width").get<int>(), g.at("grid").get<int>(),
                  g.at("patch").get<int>()};
    d.k = j.at("k").get<int>();
    for (const auto& row : j.at("weights"))
      for (double v : row.get<std::vector<double>>()) d.weights.push_back(v);
    d.bias = j.at("bias").get<std::vector<double>>();
    for (const auto& row : j.at("context"))
      for (double v : row.get<std::vector<double>>()) d.context.push_back(v);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("detector: ") + e.what());
  }
  d.validate();
  return d;
}

}  // namespace ctxattack
