#pragma once

// Desired outputs from attack plans, and the targeted I-FGSM loop:
//   delta <- delta - eps * sign(grad_delta L(clip(I + delta); O'))
// followed by projection onto the L-inf ball and the legal pixel range.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ctxattack/detector.hpp"
#include "ctxattack/error.hpp"
#include "ctxattack/planner.hpp"

namespace ctxattack {

inline constexpr double kPixelMax = 255.0;

namespace detail {

inline bool box_covers_cell(const BBox& b, double cx0, double cy0, double cx1, double cy1) {
  const auto c = b.corners();
  const double mx = (cx0 + cx1) / 2, my = (cy0 + cy1) / 2;
  const bool center_in_box = mx >= c.x0 && mx <= c.x1 && my >= c.y0 && my <= c.y1;
  const bool box_center_in_cell = b.cx >= cx0 && b.cx < cx1 && b.cy >= cy0 && b.cy < cy1;
  return center_in_box || box_center_in_cell;
}

}  // namespace detail

/// Rasterize a plan onto a detector's grid. A cell belongs to a plan entry
/// when the entry's box contains the cell center or the cell contains the box
/// center; contested cells go to the entry whose box center is nearest.
/// Cells of unchanged objects keep the detector's clean prediction; the rest
/// are background.
inline DesiredOutput rasterize(const AttackPlan& plan, const ToyDetector& det, const Image& clean) {
  const Geometry& geo = det.geometry;
  const int G = geo.grid;
  const double ch = geo.cell_h(), cw = geo.cell_w();
  const auto clean_labels = cell_labels(forward(det, clean), det.background());

  DesiredOutput d;
  d.classes = det.classes();
  d.label.assign(static_cast<std::size_t>(geo.cells()), det.background());
  d.confidence.assign(static_cast<std::size_t>(geo.cells()), 1.0);
  for (int gy = 0; gy < G; ++gy) {
    for (int gx = 0; gx < G; ++gx) {
      const int n = gy * G + gx;
      const double x0 = gx * cw, y0 = gy * ch, x1 = x0 + cw, y1 = y0 + ch;
      const double mx = (x0 + x1) / 2, my = (y0 + y1) / 2;
      double best = std::numeric_limits<double>::infinity();
      const PlanEntry* owner = nullptr;
      for (const auto& e : plan.entries) {
        if (!detail::box_covers_cell(e.target_box, x0, y0, x1, y1)) continue;
        const double dist = std::hypot(e.target_box.cx - mx, e.target_box.cy - my);
        if (dist < best) {
          best = dist;
          owner = &e;
        }
      }
      if (owner) {
        d.label[static_cast<std::size_t>(n)] = owner->target_label;
        d.confidence[static_cast<std::size_t>(n)] = owner->confidence;
        continue;
      }
      for (std::size_t i : plan.unchanged) {
        if (detail::box_covers_cell(plan.goal.scene.objects[i].box, x0, y0, x1, y1)) {
          d.label[static_cast<std::size_t>(n)] = clean_labels[static_cast<std::size_t>(n)];
          break;
        }
      }
    }
  }
  return d;
}

struct IfgsmConfig {
  double eps_step = 2.0;
  double linf_budget = 10.0;
  int max_iters = 50;

  void validate() const {
    if (!(eps_step > 0) || !std::isfinite(eps_step)) throw Error(ErrorKind::Usage, "eps_step must be positive");
    if (!(linf_budget >= 0) || !std::isfinite(linf_budget))
      throw Error(ErrorKind::Usage, "linf_budget must be non-negative");
    if (max_iters < 0) throw Error(ErrorKind::Usage, "max_iters must be non-negative");
  }
};

struct PerturbationState {
  std::vector<double> delta;
  double eps_step = 0;
  double linf_budget = 0;
  int iterations = 0;

  double max_abs() const {
    double m = 0;
    for (double v : delta) m = std::max(m, std::abs(v));
    return m;
  }
};

struct AttackRun {
  Image adversarial;  // clip(I + delta)
  PerturbationState state;
  std::vector<double> trace;  // loss before each step, then the final loss
  bool aborted = false;       // non-finite loss
};

/// clip(I + delta) to the legal pixel range.
inline Image apply_delta(const Image& clean, std::span<const double> delta) {
  Image out = clean;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = std::clamp(clean.values[i] + delta[i], 0.0, kPixelMax);
  return out;
}

/// Run I-FGSM on fixed desired outputs. `on_step`, when given, is called after
/// every projection with the current state.
template <typename OnStep = std::nullptr_t>
AttackRun ifgsm_attack(const Image& clean, std::span<const ToyDetector> detectors, std::span<const double> alphas,
                       std::span<const DesiredOutput> desired, const IfgsmConfig& cfg,
                       const std::vector<double>* warm_delta = nullptr, OnStep on_step = nullptr) {
  cfg.validate();
  validate_alphas(alphas, detectors.size());
  for (double v : clean.values)
    if (!(v >= 0 && v <= kPixelMax)) throw Error(ErrorKind::Data, "clean image has values outside [0, 255]");

  AttackRun run;
  run.state.eps_step = cfg.eps_step;
  run.state.linf_budget = cfg.linf_budget;
  if (warm_delta) {
    if (warm_delta->size() != clean.values.size()) throw Error(ErrorKind::Usage, "warm-start delta has the wrong size");
    run.state.delta = *warm_delta;
    for (std::size_t i = 0; i < clean.values.size(); ++i) {
      double& d = run.state.delta[i];
      d = std::clamp(d, -cfg.linf_budget, cfg.linf_budget);
      d = std::clamp(d, -clean.values[i], kPixelMax - clean.values[i]);
    }
  } else {
    run.state.delta.assign(clean.values.size(), 0.0);
  }

  run.adversarial = apply_delta(clean, run.state.delta);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const auto lg = ensemble_loss_and_grad(detectors, alphas, run.adversarial, desired);
    run.trace.push_back(lg.loss);
    if (!std::isfinite(lg.loss)) {
      run.aborted = true;
      return run;
    }
    for (std::size_t i = 0; i < run.state.delta.size(); ++i) {
      const double g = lg.grad[i];
      const double s = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
      double d = run.state.delta[i] - cfg.eps_step * s;
      d = std::clamp(d, -cfg.linf_budget, cfg.linf_budget);
      d = std::clamp(d, -clean.values[i], kPixelMax - clean.values[i]);
      run.state.delta[i] = d;
    }
    ++run.state.iterations;
    run.adversarial = apply_delta(clean, run.state.delta);
    if constexpr (!std::is_same_v<OnStep, std::nullptr_t>) on_step(run.state);
  }
  double final_loss = 0;
  for (std::size_t i = 0; i < detectors.size(); ++i)
    final_loss += alphas[i] * loss(detectors[i], run.adversarial, desired[i]);
  run.trace.push_back(final_loss);
  run.aborted = !std::isfinite(final_loss);
  return run;
}

/// Rasterize the plan for every detector against the clean image, then attack.
inline AttackRun ifgsm_attack(const Image& clean, const AttackPlan& plan, std::span<const ToyDetector> detectors,
                              std::span<const double> alphas, const IfgsmConfig& cfg,
                              const std::vector<double>* warm_delta = nullptr) {
  std::vector<DesiredOutput> desired;
  desired.reserve(detectors.size());
  for (const auto& det : detectors) desired.push_back(rasterize(plan, det, clean));
  return ifgsm_attack(clean, detectors, alphas, std::span<const DesiredOutput>(desired), cfg, warm_delta);
}

}  // namespace ctxattack
