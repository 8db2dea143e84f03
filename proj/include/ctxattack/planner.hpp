#pragma once

// Attack plans: the victim's target assignment plus helper objects, either
// existing scene objects relabeled or phantoms placed from the context graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxattack/annotations.hpp"
#include "ctxattack/context.hpp"
#include "ctxattack/error.hpp"
#include "ctxattack/rng.hpp"

namespace ctxattack {

inline constexpr int kDefaultMaxHelpers = 5;

struct AttackGoal {
  SceneAnnotation scene;
  std::size_t victim_index = 0;
  int target_label = 0;

  const SceneObject& victim() const { return scene.objects.at(victim_index); }
};

/// Throws unless the victim exists and the target label is absent from the scene.
inline void validate_goal(const AttackGoal& g, int k) {
  if (g.victim_index >= g.scene.objects.size())
    throw Error(ErrorKind::Usage, "victim index out of range");
  if (g.target_label < 0 || g.target_label >= k)
    throw Error(ErrorKind::Usage, "target label out of range");
  for (const auto& o : g.scene.objects)
    if (o.category == g.target_label)
      throw Error(ErrorKind::Usage, "target label is present in the scene");
}

enum class EntryKind { Existing, Phantom };

struct PlanEntry {
  EntryKind kind = EntryKind::Existing;
  std::optional<std::size_t> object_ref;  // existing entries only
  int target_label = 0;
  BBox target_box;
  double confidence = 1.0;
  bool noop = false;        // helper drew its own current label
  bool translated = false;  // phantom moved to fit the image
  bool clipped = false;     // phantom larger than the image, clipped
  bool fallback = false;    // phantom placed from fallback means

  bool operator==(const PlanEntry&) const = default;
};

struct AttackPlan {
  AttackGoal goal;
  std::vector<PlanEntry> entries;  // entries[0] is the victim
  int helpers_used = 0;
  int max_helpers = kDefaultMaxHelpers;
  std::vector<std::size_t> unchanged;  // scene objects kept at their labels
  std::uint64_t seed = 0;

  const PlanEntry& victim() const { return entries.front(); }
};

/// Uniform over categories absent from the scene (which also excludes the
/// victim's own label).
inline int choose_target_label(const SceneAnnotation& scene, std::size_t victim_index, int k,
                               Rng& rng) {
  if (victim_index >= scene.objects.size()) throw Error(ErrorKind::Usage, "victim index out of range");
  std::vector<bool> present(static_cast<std::size_t>(k), false);
  for (const auto& o : scene.objects) {
    if (o.category < 0 || o.category >= k) throw Error(ErrorKind::Integrity, "category id out of range");
    present[static_cast<std::size_t>(o.category)] = true;
  }
  std::vector<int> absent;
  for (int c = 0; c < k; ++c)
    if (!present[static_cast<std::size_t>(c)]) absent.push_back(c);
  if (absent.empty())
    throw Error(ErrorKind::Budget, "scene " + scene.image_id + " contains every category");
  return absent[rng.below(absent.size())];
}

/// The context-agnostic plan: victim only, every other object unchanged.
inline AttackPlan baseline_plan(const AttackGoal& goal, int max_helpers = kDefaultMaxHelpers) {
  AttackPlan p;
  p.goal = goal;
  p.max_helpers = max_helpers;
  p.entries.push_back({EntryKind::Existing, goal.victim_index, goal.target_label, goal.victim().box});
  for (std::size_t i = 0; i < goal.scene.objects.size(); ++i)
    if (i != goal.victim_index) p.unchanged.push_back(i);
  return p;
}

/// Existing non-victim objects, nearest victim center first (ties by index).
inline std::vector<std::size_t> helper_order(const AttackGoal& goal) {
  const auto& v = goal.victim().box;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < goal.scene.objects.size(); ++i)
    if (i != goal.victim_index) order.push_back(i);
  auto dist = [&](std::size_t i) {
    const auto& b = goal.scene.objects[i].box;
    return std::hypot(b.cx - v.cx, b.cy - v.cy);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist(a) < dist(b); });
  return order;
}

struct Placement {
  BBox box;
  bool translated = false;
  bool clipped = false;
};

/// Shift a box minimally so it lies inside [0, W] x [0, H]; clip if it is larger.
inline Placement fit_box(BBox b, double width, double height) {
  Placement p;
  auto fit_axis = [&](double& c, double& len, double limit) {
    if (len > limit) {
      len = limit;
      c = limit / 2;
      p.clipped = true;
      return;
    }
    const double lo = len / 2, hi = limit - len / 2;
    const double moved = std::clamp(c, lo, hi);
    if (moved != c) p.translated = true;
    c = moved;
  };
  fit_axis(b.cx, b.w, width);
  fit_axis(b.cy, b.h, height);
  p.box = b;
  return p;
}

struct PhantomPlacement {
  BBox box;
  bool translated = false;
  bool clipped = false;
  bool fallback = false;
};

/// Place a phantom helper at the mean distance from the victim along a uniform
/// random direction, sized by the mean relative size.
inline PhantomPlacement place_phantom(const ContextGraph& graph, const BBox& anchor, int victim_target,
                                      int helper_label, double width, double height, Rng& rng) {
  const double L = std::sqrt(width * width + height * height);
  const auto d = distance_mean(graph, victim_target, helper_label);
  const auto s = size_mean(graph, victim_target, helper_label);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  BBox b{anchor.cx + d.value * L * std::cos(theta), anchor.cy + d.value * L * std::sin(theta),
         std::max(s.h * L, 1e-6), std::max(s.w * L, 1e-6)};
  const auto fit = fit_box(b, width, height);
  return {fit.box, fit.translated, fit.clipped, d.fallback || s.fallback};
}

struct PlannerOptions {
  /// Redraw when a helper draws its own current label instead of counting a no-op.
  bool resample_noop = false;
  int max_resample = 100;
};

namespace detail {

inline std::optional<std::size_t> next_existing_helper(const AttackPlan& plan) {
  for (std::size_t i : helper_order(plan.goal)) {
    const bool used = std::any_of(plan.entries.begin(), plan.entries.end(),
                                  [&](const PlanEntry& e) { return e.object_ref == i; });
    if (!used) return i;
  }
  return std::nullopt;
}

template <typename DrawLabel, typename PlacePhantom>
AttackPlan extend_with(const AttackPlan& plan, const PlannerOptions& opt, DrawLabel draw,
                       PlacePhantom place) {
  if (plan.helpers_used >= plan.max_helpers)
    throw Error(ErrorKind::Budget, "helper budget exhausted");
  AttackPlan next = plan;
  PlanEntry e;
  if (auto obj = next_existing_helper(plan)) {
    const int current = plan.goal.scene.objects[*obj].category;
    e.kind = EntryKind::Existing;
    e.object_ref = *obj;
    e.target_box = plan.goal.scene.objects[*obj].box;
    e.target_label = draw();
    for (int r = 0; opt.resample_noop && e.target_label == current && r < opt.max_resample; ++r)
      e.target_label = draw();
    e.noop = e.target_label == current;
    std::erase(next.unchanged, *obj);
  } else {
    e.kind = EntryKind::Phantom;
    e.target_label = draw();
    const PhantomPlacement p = place(e.target_label);
    e.target_box = p.box;
    e.translated = p.translated;
    e.clipped = p.clipped;
    e.fallback = p.fallback;
  }
  next.entries.push_back(e);
  ++next.helpers_used;
  return next;
}

}  // namespace detail

/// Add one context-aware helper. Helper labels are drawn from the
/// co-occurrence row of the victim's target label.
inline AttackPlan extend_plan(const AttackPlan& plan, const ContextGraph& graph, Rng& rng,
                              const PlannerOptions& opt = {}) {
  const int target = plan.goal.target_label;
  const auto& scene = plan.goal.scene;
  return detail::extend_with(
      plan, opt, [&] { return sample_label(graph.cooccur.row(target), rng); },
      [&](int label) {
        return place_phantom(graph, plan.goal.victim().box, target, label, scene.width,
                             scene.height, rng);
      });
}

/// Add one helper with a uniformly random label; phantoms are placed
/// uniformly over the image with sides uniform in [0.05, 0.5] * diagonal.
inline AttackPlan extend_plan_random(const AttackPlan& plan, int k, Rng& rng,
                                     const PlannerOptions& opt = {}) {
  const auto& scene = plan.goal.scene;
  const double W = scene.width, H = scene.height, L = scene.diagonal();
  return detail::extend_with(
      plan, opt, [&] { return static_cast<int>(rng.below(static_cast<std::uint64_t>(k))); },
      [&](int) {
        BBox b;
        b.h = rng.uniform(0.05, 0.5) * L;
        b.w = rng.uniform(0.05, 0.5) * L;
        b.cx = rng.uniform(0.0, W);
        b.cy = rng.uniform(0.0, H);
        const auto fit = fit_box(b, W, H);
        return PhantomPlacement{fit.box, fit.translated, fit.clipped, false};
      });
}

/// The random comparator: `helpers` random extensions of `plan`.
inline AttackPlan randomize_plan(const AttackPlan& plan, int k, int helpers, Rng& rng,
                                 const PlannerOptions& opt = {}) {
  AttackPlan p = plan;
  for (int h = 0; h < helpers; ++h) p = extend_plan_random(p, k, rng, opt);
  return p;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json box_json(const BBox& b) {
  return {{"cx", b.cx}, {"cy", b.cy}, {"h", b.h}, {"w", b.w}};
}

inline BBox box_from_json(const nlohmann::json& j) {
  return {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("h").get<double>(),
          j.at("w").get<double>()};
}

inline nlohmann::json to_json(const AttackGoal& g) {
  return {{"scene", to_json(g.scene)}, {"victim_index", g.victim_index}, {"target_label", g.target_label}};
}

inline AttackGoal goal_from_json(const nlohmann::json& j) {
  return {scene_from_json(j.at("scene")), j.at("victim_index").get<std::size_t>(),
          j.at("target_label").get<int>()};
}

inline nlohmann::json to_json(const AttackPlan& p) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : p.entries) {
    nlohmann::json je = {{"kind", e.kind == EntryKind::Existing ? "existing" : "phantom"},
                         {"target_label", e.target_label},
                         {"target_box", box_json(e.target_box)},
                         {"confidence", e.confidence},
                         {"noop", e.noop},
                         {"translated", e.translated},
                         {"clipped", e.clipped},
                         {"fallback", e.fallback}};
    if (e.object_ref) je["object_ref"] = *e.object_ref;
    entries.push_back(je);
  }
  return {{"goal", to_json(p.goal)},           {"entries", entries},
          {"helpers_used", p.helpers_used},    {"max_helpers", p.max_helpers},
          {"unchanged", p.unchanged},          {"seed", p.seed}};
}

inline AttackPlan plan_from_json(const nlohmann::json& j) {
  AttackPlan p;
  p.goal = goal_from_json(j.at("goal"));
  for (const auto& je : j.at("entries")) {
    PlanEntry e;
    e.kind = je.at("kind").get<std::string>() == "phantom" ? EntryKind::Phantom : EntryKind::Existing;
    if (je.contains("object_ref")) e.object_ref = je["object_ref"].get<std::size_t>();
    e.target_label = je.at("target_label").get<int>();
    e.target_box = box_from_json(je.at("target_box"));
    e.confidence = je.value("confidence", 1.0);
    e.noop = je.value("noop", false);
    e.translated = je.value("translated", false);
    e.clipped = je.value("clipped", false);
    e.fallback = je.value("fallback", false);
    p.entries.push_back(e);
  }
  p.helpers_used = j.at("helpers_used").get<int>();
  p.max_helpers = j.at("max_helpers").get<int>();
  p.unchanged = j.at("unchanged").get<std::vector<std::size_t>>();
  p.seed = j.value("seed", std::uint64_t{0});
  if (p.entries.empty()) throw Error(ErrorKind::Data, "plan has no victim entry");
  return p;
}

}  // namespace ctxattack
