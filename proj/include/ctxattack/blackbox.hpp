#pragma once

// Hard-label blackbox access: labels and boxes only, a bounded query ledger,
// IoU and the targeted-attack success test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxattack/detector.hpp"
#include "ctxattack/error.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/rng.hpp"

namespace ctxattack {

inline constexpr int kDefaultMaxQueries = 6;
inline constexpr double kSuccessIou = 0.3;

/// A hard-label detection. Deliberately carries no score.
struct Detection {
  int label = 0;
  BBox box;
  bool operator==(const Detection&) const = default;
};

class HardLabelDetector {
 public:
  virtual ~HardLabelDetector() = default;
  virtual std::vector<Detection> detect(const Image& img) const = 0;
};

class QueryLedger {
 public:
  explicit QueryLedger(int max_queries = kDefaultMaxQueries) : max_(max_queries) {
    if (max_queries < 1) throw Error(ErrorKind::Usage, "max_queries must be >= 1");
  }

  int used() const { return used_; }
  int max() const { return max_; }
  int remaining() const { return max_ - used_; }

  void charge() {
    if (used_ >= max_)
      throw Error(ErrorKind::Budget, "query budget of " + std::to_string(max_) + " exhausted");
    ++used_;
  }

 private:
  int used_ = 0;
  int max_;
};

inline std::vector<Detection> query(const HardLabelDetector& blackbox, const Image& img, QueryLedger& ledger) {
  ledger.charge();
  return blackbox.detect(img);
}

inline double iou(const BBox& a, const BBox& b) {
  const auto p = a.corners(), q = b.corners();
  const double iw = std::min(p.x1, q.x1) - std::max(p.x0, q.x0);
  const double ih = std::min(p.y1, q.y1) - std::max(p.y0, q.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

/// True iff some detection carries the target label and overlaps the victim's
/// original box with IoU strictly greater than 0.3.
inline bool attack_success(std::span<const Detection> detections, const AttackGoal& goal) {
  const BBox& anchor = goal.victim().box;
  return std::any_of(detections.begin(), detections.end(), [&](const Detection& d) {
    return d.label == goal.target_label && iou(d.box, anchor) > kSuccessIou;
  });
}

inline std::vector<Detection> strip_scores(std::span<const ScoredDetection> scored) {
  std::vector<Detection> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back({s.label, s.box});
  return out;
}

/// Toy detector behind a hard-label interface.
class SimBlackbox : public HardLabelDetector {
 public:
  explicit SimBlackbox(ToyDetector det, double threshold = kDefaultScoreThreshold)
      : det_(std::move(det)), threshold_(threshold) {
    det_.validate();
  }

  std::vector<Detection> detect(const Image& img) const override {
    return strip_scores(ctxattack::detect(det_, img, threshold_));
  }

  const Geometry& geometry() const { return det_.geometry; }
  const ToyDetector& detector() const { return det_; }

 private:
  ToyDetector det_;
  double threshold_;
};

/// Never reports anything.
class SilentDetector : public HardLabelDetector {
 public:
  std::vector<Detection> detect(const Image&) const override { return {}; }
};

/// A detector with i.i.d. Gaussian weights.
inline ToyDetector random_detector(std::string id, const Geometry& geo, int k, std::uint64_t seed,
                                   double weight_std = 0.05, double bias_std = 1.0, double context_std = 0.0) {
  ToyDetector d = ToyDetector::zeros(std::move(id), geo, k);
  Rng rng(seed);
  for (double& w : d.weights) w = weight_std * rng.normal();
  for (double& b : d.bias) b = bias_std * rng.normal();
  if (context_std > 0) {
    d.context.resize(static_cast<std::size_t>(d.classes() * d.classes()));
    for (double& c : d.context) c = context_std * rng.normal();
  }
  return d;
}

namespace detail {

/// Mix a classes x width parameter block with noise. Softmax ignores offsets
/// shared by every class, so the noise is centered on the per-column class
/// mean and scaled to the RMS of the class-centered parameters.
inline void mix_block(std::vector<double>& v, int classes, double tau, Rng& rng) {
  if (v.empty()) return;
  const std::size_t C = static_cast<std::size_t>(classes), W = v.size() / C;
  std::vector<double> mean(W, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < W; ++j) mean[j] += v[c * W + j] / static_cast<double>(C);
  double ss = 0;
  for (std::size_t i = 0; i < v.size(); ++i) ss += (v[i] - mean[i % W]) * (v[i] - mean[i % W]);
  const double scale = std::sqrt(ss / static_cast<double>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = tau * v[i] + (1.0 - tau) * (mean[i % W] + scale * rng.normal());
}

}  // namespace detail

/// Simulated blackbox: tau * surrogate + (1 - tau) * fresh noise, with the
/// noise drawn from its own seed. tau = 1 reproduces the surrogate; tau = 0 is
/// an independent detector of comparable logit spread.
inline SimBlackbox make_sim_blackbox(std::uint64_t seed, const ToyDetector& surrogate, double tau,
                                     double threshold = kDefaultScoreThreshold) {
  if (!(tau >= 0 && tau <= 1)) throw Error(ErrorKind::Usage, "tau must lie in [0, 1]");
  surrogate.validate();
  ToyDetector d = surrogate;
  d.id = "sim_blackbox_" + std::to_string(seed);
  Rng rng(derive_seed(seed, "sim_blackbox"));
  detail::mix_block(d.weights, d.classes(), tau, rng);
  detail::mix_block(d.bias, d.classes(), tau, rng);
  detail::mix_block(d.context, d.classes(), tau, rng);
  return SimBlackbox(std::move(d), threshold);
}

/// Blackbox built from scratch with no surrogate in its lineage.
inline SimBlackbox make_sim_blackbox(std::uint64_t seed, const Geometry& geo, int k,
                                     double threshold = kDefaultScoreThreshold) {
  return SimBlackbox(random_detector("sim_blackbox_" + std::to_string(seed), geo, k,
                                     derive_seed(seed, "sim_blackbox")),
                     threshold);
}

inline nlohmann::json to_json(const Detection& d) {
  return {{"label", d.label}, {"cx", d.box.cx}, {"cy", d.box.cy}, {"h", d.box.h}, {"w", d.box.w}};
}

inline std::vector<Detection> detections_from_json(const nlohmann::json& j) {
  std::vector<Detection> out;
  try {
    for (const auto& e : j)
      out.push_back({e.at("label").get<int>(),
                     {e.at("cx").get<double>(), e.at("cy").get<double>(), e.at("h").get<double>(),
                      e.at("w").get<double>()}});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("detections: ") + e.what());
  }
  return out;
}

}  // namespace ctxattack
