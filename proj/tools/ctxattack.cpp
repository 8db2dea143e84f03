// ctxattack: command-line front end for the library.
//
//   ctxattack [--seed N] [--config cfg.json] [--out DIR] <verb> ...
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 budget/infeasible.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxattack/ctxattack.hpp"

namespace fs = std::filesystem;
using namespace ctxattack;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = ".";
};

/// AttackConfig plus the knobs that live outside it.
struct RunConfig {
  AttackConfig attack;
  double tau = 0.9;
  double jitter = 2.0;
  unsigned threads = 1;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Data, path + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

ContextGraph load_graph_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open " + path);
  return load_graph(in);
}

std::vector<SceneAnnotation> load_scenes(const std::string& path, int k) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open " + path);
  return read_scenes(in, k);
}

RunConfig load_config(const Globals& g) {
  RunConfig rc;
  if (g.config_path.empty()) return rc;
  const json j = read_json(g.config_path);
  try {
    auto& a = rc.attack;
    if (j.contains("mode")) a.mode = mode_from_string(j["mode"].get<std::string>());
    a.perturb.linf_budget = j.value("linf_budget", a.perturb.linf_budget);
    a.perturb.eps_step = j.value("eps_step", a.perturb.eps_step);
    a.perturb.max_iters = j.value("max_iters", a.perturb.max_iters);
    a.max_helpers = j.value("max_helpers", a.max_helpers);
    a.max_queries = j.value("max_queries", a.max_queries);
    a.warm_start = j.value("warm_start", a.warm_start);
    a.planner.resample_noop = j.value("resample_noop", a.planner.resample_noop);
    rc.tau = j.value("tau", rc.tau);
    rc.jitter = j.value("surrogate_jitter", rc.jitter);
    rc.threads = j.value("threads", rc.threads);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Usage, g.config_path + ": " + e.what());
  }
  rc.attack.validate();
  return rc;
}

/// The synthetic world that renders scenes and supplies detectors for a graph.
struct World {
  SyntheticWorld world;
  ToyDetector surrogate;
  std::shared_ptr<SimBlackbox> blackbox;
};

World make_world(const ContextGraph& graph, std::uint64_t seed, const RunConfig& rc) {
  WorldSpec spec;
  spec.k = graph.k();
  SyntheticWorld world(spec, derive_seed(seed, "world"));
  auto surrogate = world.surrogate("surrogate", derive_seed(seed, "surrogate"), rc.jitter, &graph.cooccur);
  auto blackbox = std::make_shared<SimBlackbox>(make_sim_blackbox(derive_seed(seed, "blackbox"), surrogate, rc.tau));
  return {std::move(world), std::move(surrogate), std::move(blackbox)};
}

BBox scale_box(BBox b, double sx, double sy) { return {b.cx * sx, b.cy * sy, b.h * sy, b.w * sx}; }

AttackGoal goal_to_canvas(AttackGoal g, const Geometry& geo) {
  g.scene = fit_to_canvas(g.scene, geo);
  return g;
}

AttackPlan plan_to_canvas(AttackPlan p, const Geometry& geo) {
  const double sx = geo.width / p.goal.scene.width, sy = geo.height / p.goal.scene.height;
  for (auto& e : p.entries) e.target_box = scale_box(e.target_box, sx, sy);
  p.goal = goal_to_canvas(p.goal, geo);
  return p;
}

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Usage, "not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<AttackMode> parse_modes(const std::string& csv) {
  std::vector<AttackMode> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(mode_from_string(item));
  return out;
}

json outcome_json(const AttackOutcome& o) {
  return {{"success", o.success},
          {"success_step", o.success_step},
          {"helpers_used", o.helpers_used},
          {"queries_used", o.queries_used},
          {"whitebox_success", o.whitebox_success},
          {"max_abs_delta", o.max_abs_delta},
          {"aborted", o.aborted},
          {"loss_traces", o.loss_traces},
          {"final_plan", to_json(o.final_plan)}};
}

json detections_json(const std::vector<Detection>& dets) {
  json a = json::array();
  for (const auto& d : dets) a.push_back(to_json(d));
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware sequential attacks on toy object detectors"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--config", g.config_path, "JSON config mirroring AttackConfig");
  app.add_option("--out", g.out, "Output directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse a COCO or VOC corpus into the scene format");
  std::string ingest_format;
  std::vector<std::string> ingest_inputs;
  std::string ingest_categories;
  bool voc_coco_names = false;
  ingest->add_option("--format", ingest_format, "coco or voc")->required()->check(CLI::IsMember({"coco", "voc"}));
  ingest->add_option("inputs", ingest_inputs, "COCO JSON file, or VOC XML files/directories")->required();
  ingest->add_option("--categories", ingest_categories, "Category sidecar to map names into");
  ingest->add_flag("--voc-coco-names", voc_coco_names, "Translate VOC names to COCO synonyms");

  // ctx
  auto* ctx = app.add_subcommand("ctx", "Context graphs");
  ctx->require_subcommand(1);
  auto* ctx_build = ctx->add_subcommand("build", "Build a context graph from a scene file");
  std::string scenes_path, categories_path, counting = "instance_pairs";
  double alpha = 0;
  unsigned build_threads = 1;
  ctx_build->add_option("--scenes", scenes_path)->required();
  ctx_build->add_option("--categories", categories_path)->required();
  ctx_build->add_option("--counting", counting)->check(CLI::IsMember({"instance_pairs", "scene_presence"}));
  ctx_build->add_option("--alpha", alpha, "Add-alpha smoothing");
  ctx_build->add_option("--threads", build_threads);

  auto* ctx_compare = ctx->add_subcommand("compare", "Row-wise Pearson correlation of two graphs");
  std::string graph_a, graph_b;
  bool voc_names_a = false;
  ctx_compare->add_option("a", graph_a)->required();
  ctx_compare->add_option("b", graph_b)->required();
  ctx_compare->add_flag("--voc-names-a", voc_names_a, "First graph uses VOC names");

  auto* ctx_inspect = ctx->add_subcommand("inspect", "Print one co-occurrence row");
  std::string graph_path, row_name;
  ctx_inspect->add_option("graph", graph_path)->required();
  ctx_inspect->add_option("--row", row_name)->required();

  // plan
  auto* plan = app.add_subcommand("plan", "Attack plans");
  plan->require_subcommand(1);
  auto* plan_make = plan->add_subcommand("make", "Compose an attack plan");
  std::string goal_path, image_id, target_name, mode_name;
  std::optional<std::size_t> victim;
  int helpers = 0;
  plan_make->add_option("--graph", graph_path)->required();
  plan_make->add_option("--goal", goal_path, "Goal JSON; otherwise pick one from --scenes");
  plan_make->add_option("--scenes", scenes_path);
  plan_make->add_option("--image-id", image_id);
  plan_make->add_option("--victim", victim);
  plan_make->add_option("--target", target_name, "Target category name");
  plan_make->add_option("--helpers", helpers)->check(CLI::NonNegativeNumber);
  auto* plan_mode = plan_make->add_option("--mode", mode_name)->check(CLI::IsMember({"baseline", "random", "context"}));

  // detector
  auto* detector = app.add_subcommand("detector", "Toy detectors");
  detector->require_subcommand(1);
  auto* detector_make = detector->add_subcommand("make", "Export the surrogate and simulated blackbox");
  double tau_flag = -1;
  detector_make->add_option("--graph", graph_path)->required();
  detector_make->add_option("--tau", tau_flag);

  // perturb
  auto* perturb = app.add_subcommand("perturb", "Perturbations");
  perturb->require_subcommand(1);
  auto* perturb_run = perturb->add_subcommand("run", "Run I-FGSM for a plan");
  std::string plan_path;
  std::vector<std::string> detector_paths;
  std::vector<double> alphas;
  double budget = -1, eps = -1;
  int iters = -1;
  perturb_run->add_option("--plan", plan_path)->required();
  perturb_run->add_option("--graph", graph_path)->required();
  perturb_run->add_option("--budget", budget);
  perturb_run->add_option("--eps", eps);
  perturb_run->add_option("--iters", iters);
  perturb_run->add_option("--detector", detector_paths, "Surrogate detector JSON (repeatable)");
  perturb_run->add_option("--alphas", alphas, "Ensemble weights");

  // attack
  auto* attack = app.add_subcommand("attack", "Sequential attacks");
  attack->require_subcommand(1);
  auto* attack_run = attack->add_subcommand("run", "Run the sequential attack loop on one goal");
  attack_run->add_option("--goal", goal_path)->required();
  attack_run->add_option("--graph", graph_path)->required();
  auto* attack_mode = attack_run->add_option("--mode", mode_name)->check(CLI::IsMember({"baseline", "random", "context"}));
  attack_run->add_option("--budget", budget);
  attack_run->add_option("--tau", tau_flag);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Experiment sweeps");
  sweep->require_subcommand(1);
  auto* sweep_run = sweep->add_subcommand("run", "Fooling rates over modes x budgets x helper caps");
  std::string modes_csv = "baseline,random,context", budgets_csv = "10";
  int max_cap = kDefaultMaxHelpers, instances = 200;
  bool benchmark = false;
  sweep_run->add_option("--scenes", scenes_path);
  sweep_run->add_option("--graph", graph_path);
  sweep_run->add_flag("--benchmark", benchmark, "Use the planted-structure synthetic benchmark");
  sweep_run->add_option("--instances", instances, "Benchmark attack scenes")->check(CLI::PositiveNumber);
  sweep_run->add_option("--modes", modes_csv);
  sweep_run->add_option("--budgets", budgets_csv);
  sweep_run->add_option("--max-helpers", max_cap)->check(CLI::NonNegativeNumber);
  sweep_run->add_option("--tau", tau_flag);
  sweep_run->add_option("--threads", build_threads);

  // report
  auto* report = app.add_subcommand("report", "Result emission");
  report->require_subcommand(1);
  auto* report_emit = report->add_subcommand("emit", "Write CSV from a sweep JSON");
  std::string sweep_path;
  report_emit->add_option("sweep", sweep_path)->required();

  // bbox
  auto* bbox = app.add_subcommand("bbox", "Blackbox outputs");
  bbox->require_subcommand(1);
  auto* bbox_eval = bbox->add_subcommand("eval", "Check targeted success of detections against a goal");
  std::string pred_path;
  bbox_eval->add_option("--pred", pred_path)->required();
  bbox_eval->add_option("--goal", goal_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig rc = load_config(g);
    if (tau_flag >= 0) rc.tau = tau_flag;
    if (budget >= 0) rc.attack.perturb.linf_budget = budget;
    if (eps > 0) rc.attack.perturb.eps_step = eps;
    if (iters >= 0) rc.attack.perturb.max_iters = iters;

    if (*ingest) {
      Corpus corpus;
      std::optional<CategorySet> cats;
      if (!ingest_categories.empty()) {
        std::ifstream in(ingest_categories);
        if (!in) throw Error(ErrorKind::Data, "cannot open " + ingest_categories);
        cats = read_categories(in);
      }
      if (ingest_format == "coco") {
        if (ingest_inputs.size() != 1) throw Error(ErrorKind::Usage, "COCO ingest takes exactly one file");
        corpus = parse_coco(read_file(ingest_inputs[0]), cats);
      } else {
        std::vector<std::string> files;
        for (const auto& p : ingest_inputs) {
          if (fs::is_directory(p)) {
            for (const auto& e : fs::directory_iterator(p))
              if (e.path().extension() == ".xml") files.push_back(e.path().string());
          } else {
            files.push_back(p);
          }
        }
        std::sort(files.begin(), files.end());
        std::vector<VocDocument> docs;
        for (const auto& f : files) docs.push_back({fs::path(f).filename().string(), read_file(f)});
        corpus = parse_voc(docs, cats, {voc_coco_names});
      }
      for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
      std::ostringstream scenes, names;
      write_scenes(scenes, corpus.scenes);
      write_categories(names, corpus.categories);
      write_text(out_path(g, "scenes.jsonl"), scenes.str());
      write_text(out_path(g, "categories.json"), names.str());
      std::cout << "scenes " << corpus.scenes.size() << " objects " << corpus.object_count() << " categories "
                << corpus.categories.size() << " warnings " << corpus.warnings.size() << " dropped "
                << corpus.dropped_unknown_category << "\n";
      return 0;
    }

    if (*ctx_build) {
      std::ifstream cin_(categories_path);
      if (!cin_) throw Error(ErrorKind::Data, "cannot open " + categories_path);
      const CategorySet cats = read_categories(cin_);
      const auto scenes = load_scenes(scenes_path, cats.size());
      BinSpec bins;
      bins.counting = counting_from_string(counting);
      bins.alpha = alpha;
      const auto graph = build_context_graph(scenes, cats, bins, std::max(1u, build_threads));
      std::ostringstream out;
      save_graph(graph, out);
      write_text(out_path(g, "graph.json"), out.str());
      int unobserved = 0;
      for (bool o : graph.cooccur.observed) unobserved += !o;
      std::cout << "categories " << graph.k() << " scenes " << scenes.size() << " unobserved_rows " << unobserved
                << "\n";
      return 0;
    }

    if (*ctx_compare) {
      const auto a = load_graph_file(graph_a), b = load_graph_file(graph_b);
      const auto mapping = common_categories(a.categories, b.categories, voc_names_a);
      const auto r = row_pearson(a.cooccur, b.cooccur, mapping);
      json rows = json::array();
      for (std::size_t i = 0; i < mapping.size(); ++i) {
        json v = r.per_row[i] ? json(*r.per_row[i]) : json(nullptr);
        rows.push_back({{"category", a.categories.name(mapping[i].first)}, {"pearson", v}});
      }
      const json j = {{"common", mapping.size()},
                      {"average", r.average},
                      {"undefined_rows", r.undefined_rows},
                      {"rows", rows}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*ctx_inspect) {
      const auto graph = load_graph_file(graph_path);
      const int i = graph.categories.id(row_name);
      std::vector<std::pair<double, int>> row;
      for (int j = 0; j < graph.k(); ++j) row.emplace_back(graph.cooccur(i, j), j);
      std::stable_sort(row.begin(), row.end(), [](auto& x, auto& y) { return x.first > y.first; });
      std::cout << "row " << row_name << (graph.cooccur.observed[static_cast<std::size_t>(i)] ? "" : " (unobserved)")
                << "\n";
      char buf[64];
      for (auto [p, j] : row) {
        const auto d = distance_mean(graph, i, j);
        const auto s = size_mean(graph, i, j);
        std::snprintf(buf, sizeof buf, "%.6f", p);
        std::cout << "  " << graph.categories.name(j) << " p=" << buf;
        std::snprintf(buf, sizeof buf, " dist=%.4f size=%.4fx%.4f", d.value, s.h, s.w);
        std::cout << buf << (d.fallback || s.fallback ? " (fallback)" : "") << "\n";
      }
      return 0;
    }

    if (*plan_make) {
      const auto graph = load_graph_file(graph_path);
      const int k = graph.k();
      AttackGoal goal;
      if (!goal_path.empty()) {
        goal = goal_from_json(read_json(goal_path));
      } else {
        if (scenes_path.empty()) throw Error(ErrorKind::Usage, "plan make needs --goal or --scenes");
        const auto scenes = load_scenes(scenes_path, k);
        auto it = image_id.empty() ? scenes.begin()
                                   : std::find_if(scenes.begin(), scenes.end(),
                                                  [&](const SceneAnnotation& s) { return s.image_id == image_id; });
        if (it == scenes.end()) throw Error(ErrorKind::Usage, "no scene '" + image_id + "'");
        if (it->objects.empty()) throw Error(ErrorKind::Budget, "scene " + it->image_id + " has no objects");
        Rng rng(derive_seed(g.seed, "goal/" + it->image_id));
        goal.scene = *it;
        goal.victim_index = victim ? *victim : rng.below(it->objects.size());
        if (goal.victim_index >= it->objects.size()) throw Error(ErrorKind::Usage, "victim index out of range");
        goal.target_label = target_name.empty() ? choose_target_label(goal.scene, goal.victim_index, k, rng)
                                                : graph.categories.id(target_name);
      }
      validate_goal(goal, k);
      const AttackMode mode = *plan_mode ? mode_from_string(mode_name) : rc.attack.mode;
      if (mode == AttackMode::Baseline) helpers = 0;
      Rng rng(derive_seed(g.seed, "plan/" + goal.scene.image_id));
      AttackPlan p = baseline_plan(goal, std::max(helpers, mode == AttackMode::Baseline ? 0 : rc.attack.max_helpers));
      p.seed = g.seed;
      for (int h = 0; h < helpers; ++h)
        p = mode == AttackMode::Context ? extend_plan(p, graph, rng, rc.attack.planner)
                                        : extend_plan_random(p, k, rng, rc.attack.planner);
      write_json(out_path(g, "goal.json"), to_json(goal));
      write_json(out_path(g, "plan.json"), to_json(p));
      std::cout << "victim " << graph.categories.name(goal.victim().category) << " -> "
                << graph.categories.name(goal.target_label) << "\n";
      for (std::size_t i = 1; i < p.entries.size(); ++i) {
        const auto& e = p.entries[i];
        std::cout << "helper " << i << " " << (e.kind == EntryKind::Existing ? "existing" : "phantom") << " "
                  << graph.categories.name(e.target_label) << (e.noop ? " (no-op)" : "")
                  << (e.translated ? " (translated)" : "") << (e.clipped ? " (clipped)" : "") << "\n";
      }
      return 0;
    }

    if (*detector_make) {
      const auto graph = load_graph_file(graph_path);
      const World w = make_world(graph, g.seed, rc);
      write_json(out_path(g, "surrogate.json"), to_json(w.surrogate));
      write_json(out_path(g, "blackbox.json"),
                 to_json(make_sim_blackbox(derive_seed(g.seed, "blackbox"), w.surrogate, rc.tau).detector()));
      std::cout << "wrote surrogate.json blackbox.json\n";
      return 0;
    }

    if (*perturb_run) {
      const auto graph = load_graph_file(graph_path);
      const World w = make_world(graph, g.seed, rc);
      const AttackPlan p = plan_to_canvas(plan_from_json(read_json(plan_path)), w.world.geometry());
      validate_goal(p.goal, graph.k());
      std::vector<ToyDetector> dets;
      for (const auto& path : detector_paths) dets.push_back(detector_from_json(read_json(path)));
      if (dets.empty()) dets.push_back(w.surrogate);
      if (alphas.empty()) alphas.assign(dets.size(), 1.0 / static_cast<double>(dets.size()));
      const Image clean = w.world.render(p.goal.scene, derive_seed(g.seed, "render/" + p.goal.scene.image_id));
      const auto run = ifgsm_attack(clean, p, dets, alphas, rc.attack.perturb);
      if (run.aborted) throw Error(ErrorKind::Data, "non-finite loss; attack aborted");
      std::vector<bool> whitebox;
      for (const auto& d : dets) whitebox.push_back(attack_success(strip_scores(detect(d, run.adversarial)), p.goal));
      const auto seen = strip_scores(detect(dets.front(), run.adversarial));
      write_json(out_path(g, "detections.json"), detections_json(seen));
      write_json(out_path(g, "goal.json"), to_json(p.goal));
      write_json(out_path(g, "perturb.json"), {{"max_abs_delta", run.state.max_abs()},
                                               {"linf_budget", run.state.linf_budget},
                                               {"eps_step", run.state.eps_step},
                                               {"iterations", run.state.iterations},
                                               {"trace", run.trace},
                                               {"whitebox_success", whitebox}});
      std::cout << "max|delta| " << run.state.max_abs() << " loss " << run.trace.front() << " -> "
                << run.trace.back() << " whitebox_success " << (whitebox.front() ? "true" : "false") << "\n";
      return 0;
    }

    if (*attack_run) {
      const auto graph = load_graph_file(graph_path);
      const World w = make_world(graph, g.seed, rc);
      const AttackGoal goal = goal_to_canvas(goal_from_json(read_json(goal_path)), w.world.geometry());
      validate_goal(goal, graph.k());
      AttackConfig cfg = rc.attack;
      if (*attack_mode) cfg.mode = mode_from_string(mode_name);
      const Image clean = w.world.render(goal.scene, derive_seed(g.seed, "render/" + goal.scene.image_id));
      Rng rng(derive_seed(g.seed, "attack/" + goal.scene.image_id));
      const std::vector<ToyDetector> surrogates{w.surrogate};
      const std::vector<double> one{1.0};
      const auto outcome = run_sequential_attack(goal, clean, graph, surrogates, one, *w.blackbox, cfg, rng);
      write_json(out_path(g, "outcome.json"), outcome_json(outcome));
      std::cout << "success " << (outcome.success ? "true" : "false") << " helpers " << outcome.helpers_used
                << " queries " << outcome.queries_used << "\n";
      return 0;
    }

    if (*sweep_run) {
      SweepConfig sc;
      sc.modes = parse_modes(modes_csv);
      sc.budgets = parse_doubles(budgets_csv);
      sc.helper_caps.clear();
      for (int h = 0; h <= max_cap; ++h) sc.helper_caps.push_back(h);
      sc.base = rc.attack;
      sc.master_seed = g.seed;
      sc.parallelism = std::max({1u, build_threads, rc.threads});

      ContextGraph graph;
      std::vector<AttackInstance> inst;
      AttackEnvironment env;
      if (benchmark) {
        BenchmarkSpec spec;
        spec.attack_scenes = instances;
        auto bench = make_benchmark(spec, g.seed);
        graph = std::move(bench.graph);
        inst = std::move(bench.instances);
        env.blackbox =
            std::make_shared<SimBlackbox>(make_sim_blackbox(derive_seed(g.seed, "blackbox"), bench.surrogate, rc.tau));
        env.surrogates = {std::move(bench.surrogate)};
      } else {
        if (scenes_path.empty() || graph_path.empty())
          throw Error(ErrorKind::Usage, "sweep run needs --scenes and --graph, or --benchmark");
        graph = load_graph_file(graph_path);
        World w = make_world(graph, g.seed, rc);
        std::vector<SceneAnnotation> canvas;
        for (const auto& s : load_scenes(scenes_path, graph.k()))
          canvas.push_back(fit_to_canvas(s, w.world.geometry()));
        inst = prepare_instances(canvas, w.world, g.seed);
        if (inst.empty()) throw Error(ErrorKind::Budget, "no scene admits an attack goal");
        env.blackbox = w.blackbox;
        env.surrogates = {std::move(w.surrogate)};
      }
      env.alphas = {1.0};
      const auto result = run_sweep(inst, graph, env, sc);
      std::ostringstream csv;
      write_csv(csv, result);
      write_text(out_path(g, "sweep.csv"), csv.str());
      write_json(out_path(g, "sweep.json"), to_json(result));
      std::cout << csv.str();
      return 0;
    }

    if (*report_emit) {
      const auto result = sweep_from_json(read_json(sweep_path));
      std::ostringstream csv;
      write_csv(csv, result);
      write_text(out_path(g, "report.csv"), csv.str());
      std::cout << csv.str();
      return 0;
    }

    if (*bbox_eval) {
      const auto dets = detections_from_json(read_json(pred_path));
      const auto goal = goal_from_json(read_json(goal_path));
      double best = 0;
      for (const auto& d : dets)
        if (d.label == goal.target_label) best = std::max(best, iou(d.box, goal.victim().box));
      const bool ok = attack_success(dets, goal);
      std::cout << json{{"success", ok}, {"best_target_iou", best}, {"detections", dets.size()}}.dump() << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
