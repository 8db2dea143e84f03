#pragma once

// The sequential attack loop (perturb, query once, stop or add a helper),
// helper-cap/budget/mode sweeps, and CSV/JSON result emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ctxattack/blackbox.hpp"
#include "ctxattack/context.hpp"
#include "ctxattack/detector.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/synthetic_world.hpp"

namespace ctxattack {

enum class AttackMode { Baseline, Random, Context };

inline const char* to_string(AttackMode m) {
  switch (m) {
    case AttackMode::Baseline:
      return "baseline";
    case AttackMode::Random:
      return "random";
    case AttackMode::Context:
      return "context";
  }
  return "?";
}

inline AttackMode mode_from_string(std::string_view s) {
  if (s == "baseline") return AttackMode::Baseline;
  if (s == "random") return AttackMode::Random;
  if (s == "context") return AttackMode::Context;
  throw Error(ErrorKind::Usage, "unknown attack mode '" + std::string(s) + "'");
}

struct AttackConfig {
  AttackMode mode = AttackMode::Context;
  IfgsmConfig perturb;
  int max_helpers = kDefaultMaxHelpers;
  int max_queries = kDefaultMaxQueries;
  /// Continue from the previous step's perturbation when a helper is added.
  bool warm_start = true;
  PlannerOptions planner;

  int helper_cap() const { return mode == AttackMode::Baseline ? 0 : max_helpers; }

  void validate() const {
    perturb.validate();
    if (max_helpers < 0) throw Error(ErrorKind::Usage, "max_helpers must be >= 0");
    if (max_queries < 1) throw Error(ErrorKind::Usage, "max_queries must be >= 1");
  }
};

struct AttackOutcome {
  bool success = false;
  int helpers_used = 0;
  int queries_used = 0;
  int success_step = -1;  // helper count at which the blackbox was fooled
  std::vector<bool> whitebox_success;  // per surrogate, on the final image
  double max_abs_delta = 0;
  std::vector<std::vector<double>> loss_traces;  // one per step
  bool aborted = false;
  AttackPlan final_plan;
};

/// Start from the victim-only plan and add one helper per round until the
/// blackbox reports the target label on the victim, the helper budget is
/// spent, or queries run out. Blackbox output is used only to stop.
inline AttackOutcome run_sequential_attack(const AttackGoal& goal, const Image& clean, const ContextGraph& graph,
                                           std::span<const ToyDetector> surrogates, std::span<const double> alphas,
                                           const HardLabelDetector& blackbox, const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  validate_alphas(alphas, surrogates.size());
  const int k = graph.k();
  validate_goal(goal, k);

  AttackOutcome out;
  AttackPlan plan = baseline_plan(goal, cfg.helper_cap());
  QueryLedger ledger(cfg.max_queries);
  std::vector<double> delta;
  for (;;) {
    if (ledger.remaining() == 0) break;
    const auto run = ifgsm_attack(clean, plan, surrogates, alphas, cfg.perturb,
                                  cfg.warm_start && !delta.empty() ? &delta : nullptr);
    delta = run.state.delta;
    out.loss_traces.push_back(run.trace);
    out.max_abs_delta = run.state.max_abs();
    out.helpers_used = plan.helpers_used;
    out.whitebox_success.clear();
    for (const auto& s : surrogates) {
      const auto dets = strip_scores(detect(s, run.adversarial));
      out.whitebox_success.push_back(attack_success(dets, goal));
    }
    if (run.aborted) {
      out.aborted = true;
      break;
    }
    std::vector<Detection> seen;
    try {
      seen = query(blackbox, run.adversarial, ledger);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Budget) throw;
      break;
    }
    if (attack_success(seen, goal)) {
      out.success = true;
      out.success_step = plan.helpers_used;
      break;
    }
    if (plan.helpers_used >= plan.max_helpers) break;
    plan = cfg.mode == AttackMode::Context ? extend_plan(plan, graph, rng, cfg.planner)
                                           : extend_plan_random(plan, k, rng, cfg.planner);
  }
  out.queries_used = ledger.used();
  out.final_plan = std::move(plan);
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct AttackInstance {
  AttackGoal goal;
  Image clean;
};

struct AttackEnvironment {
  std::vector<ToyDetector> surrogates;
  std::vector<double> alphas;
  std::shared_ptr<const HardLabelDetector> blackbox;
};

/// Choose a victim and an absent target label per scene and render it.
/// Goals and noise depend only on (master seed, image_id). Scenes with no
/// objects, or containing every category, are skipped.
inline std::vector<AttackInstance> prepare_instances(std::span<const SceneAnnotation> canvas_scenes,
                                                     const SyntheticWorld& world, std::uint64_t master_seed) {
  std::vector<AttackInstance> out;
  for (const auto& scene : canvas_scenes) {
    if (scene.objects.empty()) continue;
    Rng rng(derive_seed(master_seed, "goal/" + scene.image_id));
    AttackGoal goal;
    goal.scene = scene;
    goal.victim_index = rng.below(scene.objects.size());
    try {
      goal.target_label = choose_target_label(scene, goal.victim_index, world.k(), rng);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Budget) throw;
      continue;
    }
    out.push_back({std::move(goal), world.render(scene, derive_seed(master_seed, "render/" + scene.image_id))});
  }
  return out;
}

struct SweepConfig {
  std::vector<AttackMode> modes{AttackMode::Baseline, AttackMode::Random, AttackMode::Context};
  std::vector<double> budgets{10.0};
  std::vector<int> helper_caps{0, 1, 2, 3, 4, 5};
  AttackConfig base;
  std::uint64_t master_seed = 0;
  unsigned parallelism = 1;

  void validate() const {
    base.validate();
    if (modes.empty() || budgets.empty() || helper_caps.empty())
      throw Error(ErrorKind::Usage, "sweep grid must be non-empty");
    for (int h : helper_caps)
      if (h < 0) throw Error(ErrorKind::Usage, "helper caps must be >= 0");
  }
};

struct SweepCell {
  AttackMode mode = AttackMode::Context;
  double budget = 0;
  int helpers = 0;
  int successes = 0;
  int attempts = 0;
  double rate = 0;
  double lo = 0;
  double hi = 0;
  bool operator==(const SweepCell&) const = default;
};

/// One attack per (mode, budget, instance), run at the largest helper cap.
struct InstanceRecord {
  AttackMode mode = AttackMode::Context;
  double budget = 0;
  std::string image_id;
  int success_step = -1;
  int helpers_used = 0;
  int queries_used = 0;
  bool operator==(const InstanceRecord&) const = default;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<InstanceRecord> records;
  bool operator==(const SweepResult&) const = default;

  const SweepCell& cell(AttackMode m, double budget, int helpers) const {
    for (const auto& c : cells)
      if (c.mode == m && c.budget == budget && c.helpers == helpers) return c;
    throw Error(ErrorKind::Usage, "no such sweep cell");
  }
};

struct WilsonInterval {
  double lo = 0, hi = 0;
};

/// Wilson score interval at 95%.
inline WilsonInterval wilson95(int successes, int n) {
  if (n <= 0) return {0.0, 1.0};
  constexpr double z = 1.959963984540054;
  const double p = static_cast<double>(successes) / n;
  const double z2n = z * z / n;
  const double denom = 1.0 + z2n;
  const double center = (p + z2n / 2.0) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Fooling rates over the (mode x budget x helper cap) grid.
///
/// The loop is sequential and its random draws do not depend on the cap, so a
/// run at cap h is exactly the prefix of the run at the largest cap: success
/// at cap h is "fooled after at most h helpers". Each (mode, budget, instance)
/// is therefore attacked once. Per-instance streams are keyed by image_id, so
/// instance order does not affect the result.
inline SweepResult run_sweep(std::span<const AttackInstance> instances, const ContextGraph& graph,
                             const AttackEnvironment& env, const SweepConfig& config) {
  config.validate();
  if (instances.empty()) throw Error(ErrorKind::Data, "sweep needs at least one attack instance");
  if (!env.blackbox) throw Error(ErrorKind::Usage, "sweep needs a blackbox");
  const int max_cap = *std::max_element(config.helper_caps.begin(), config.helper_caps.end());

  struct Job {
    std::size_t mode, budget, instance;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < config.modes.size(); ++m)
    for (std::size_t b = 0; b < config.budgets.size(); ++b)
      for (std::size_t i = 0; i < instances.size(); ++i) jobs.push_back({m, b, i});

  std::vector<InstanceRecord> records(jobs.size());
  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const auto& inst = instances[job.instance];
    AttackConfig cfg = config.base;
    cfg.mode = config.modes[job.mode];
    cfg.perturb.linf_budget = config.budgets[job.budget];
    cfg.max_helpers = max_cap;
    Rng rng(derive_seed(config.master_seed, "attack/" + inst.goal.scene.image_id));
    const auto outcome =
        run_sequential_attack(inst.goal, inst.clean, graph, env.surrogates, env.alphas, *env.blackbox, cfg, rng);
    records[j] = {cfg.mode, cfg.perturb.linf_budget, inst.goal.scene.image_id, outcome.success_step,
                  outcome.helpers_used, outcome.queries_used};
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(config.parallelism, static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) run_job(j);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  SweepResult result;
  for (std::size_t m = 0; m < config.modes.size(); ++m)
    for (std::size_t b = 0; b < config.budgets.size(); ++b)
      for (int cap : config.helper_caps) {
        SweepCell c;
        c.mode = config.modes[m];
        c.budget = config.budgets[b];
        c.helpers = cap;
        for (std::size_t j = 0; j < jobs.size(); ++j) {
          if (jobs[j].mode != m || jobs[j].budget != b) continue;
          ++c.attempts;
          const int s = records[j].success_step;
          if (s >= 0 && s <= cap) ++c.successes;
        }
        c.rate = static_cast<double>(c.successes) / c.attempts;
        const auto ci = wilson95(c.successes, c.attempts);
        c.lo = ci.lo;
        c.hi = ci.hi;
        result.cells.push_back(c);
      }
  result.records = std::move(records);
  std::sort(result.records.begin(), result.records.end(), [&](const InstanceRecord& a, const InstanceRecord& b) {
    auto key = [&](const InstanceRecord& r) {
      const auto mi = std::find(config.modes.begin(), config.modes.end(), r.mode) - config.modes.begin();
      const auto bi = std::find(config.budgets.begin(), config.budgets.end(), r.budget) - config.budgets.begin();
      return std::tuple(mi, bi, r.image_id);
    };
    return key(a) < key(b);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Emission

inline void write_csv(std::ostream& out, const SweepResult& r) {
  out << "mode,budget,helpers,rate,lo,hi,n\n";
  char buf[256];
  for (const auto& c : r.cells) {
    std::snprintf(buf, sizeof buf, "%s,%g,%d,%.6f,%.6f,%.6f,%d\n", to_string(c.mode), c.budget, c.helpers, c.rate,
                  c.lo, c.hi, c.attempts);
    out << buf;
  }
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array(), records = nlohmann::json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"mode", to_string(c.mode)},
                     {"budget", c.budget},
                     {"helpers", c.helpers},
                     {"successes", c.successes},
                     {"attempts", c.attempts},
                     {"rate", c.rate},
                     {"lo", c.lo},
                     {"hi", c.hi}});
  for (const auto& x : r.records)
    records.push_back({{"mode", to_string(x.mode)},
                       {"budget", x.budget},
                       {"image_id", x.image_id},
                       {"success_step", x.success_step},
                       {"helpers_used", x.helpers_used},
                       {"queries_used", x.queries_used}});
  return {{"cells", cells}, {"records", records}};
}

inline SweepResult sweep_from_json(const nlohmann::json& j) {
  SweepResult r;
  try {
    for (const auto& c : j.at("cells"))
      r.cells.push_back({mode_from_string(c.at("mode").get<std::string>()), c.at("budget").get<double>(),
                         c.at("helpers").get<int>(), c.at("successes").get<int>(), c.at("attempts").get<int>(),
                         c.at("rate").get<double>(), c.at("lo").get<double>(), c.at("hi").get<double>()});
    for (const auto& x : j.value("records", nlohmann::json::array()))
      r.records.push_back({mode_from_string(x.at("mode").get<std::string>()), x.at("budget").get<double>(),
                           x.at("image_id").get<std::string>(), x.at("success_step").get<int>(),
                           x.at("helpers_used").get<int>(), x.at("queries_used").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("sweep result: ") + e.what());
  }
  return r;
}

}  // namespace ctxattack
