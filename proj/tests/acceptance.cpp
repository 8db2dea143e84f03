// Acceptance checks: one PASS/FAIL line per criterion; exit status 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "ctxattack/ctxattack.hpp"
#include "test_util.hpp"

using namespace ctxattack;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double worst_row_error(const CooccurrenceMatrix& m) {
  double worst = 0;
  for (int i = 0; i < m.k; ++i) {
    double s = 0;
    for (int j = 0; j < m.k; ++j) s += m(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

Verdict row_stochastic() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fixture = parse_coco(test::read_fixture("coco_3img.json"));
  const auto a = build_context_graph(fixture.scenes, fixture.categories);
  SynthSpec spec;
  spec.k = 20;
  spec.scenes = 10000;
  spec.min_objects = 1;
  spec.max_objects = 8;
  const auto corpus = synth_corpus(spec, 1);
  const auto b = build_context_graph(corpus.scenes, corpus.categories);
  const double ea = worst_row_error(a.cooccur), eb = worst_row_error(b.cooccur), t = seconds_since(t0);
  return {ea <= 1e-9 && eb <= 1e-9 && t < 5.0,
          fmt("max |row sum - 1| fixture %.3g, 1e4 scenes %.3g; %.2f s", ea, eb, t)};
}

double planted_deviation(int scenes, std::uint64_t seed) {
  const std::vector<double> q{0.02, 0.30, 0.05, 0.25, 0.03, 0.05, 0.05, 0.05, 0.20};
  SynthSpec spec;
  spec.k = 3;
  spec.scenes = scenes;
  spec.min_objects = 2;
  spec.max_objects = 5;
  spec.pair_matrix = q;
  const auto c = synth_corpus(spec, seed);
  const auto g = build_context_graph(c.scenes, c.categories);
  const auto expected = test::expected_conditionals(q, 3, 2, 5);
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(g.cooccur(i, j) - expected[i * 3 + j]));
  return worst;
}

Verdict estimator_consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double small = planted_deviation(100, seed), large = planted_deviation(10000, seed);
    ok = ok && large < 0.02 && large < small;
    detail += fmt("seed %d: 1e2 %.4f -> 1e4 %.4f; ", static_cast<int>(seed), small, large);
  }
  const double t = seconds_since(t0);
  return {ok && t < 30.0, detail + fmt("%.2f s", t)};
}

Verdict cross_dataset() {
  const char* voc_dir = std::getenv("CTXATTACK_VOC_ANNOTATIONS");
  const char* coco_json = std::getenv("CTXATTACK_COCO_INSTANCES");
  if (voc_dir && coco_json) {
    const auto dir = test::temp_dir("real_corpora");
    const auto voc = dir / "voc", coco = dir / "coco";
    std::filesystem::create_directories(voc);
    std::filesystem::create_directories(coco);
    auto ok = [&](const std::string& args) { return test::run_cli(args, dir).code == 0; };
    if (!ok("--out " + voc.string() + " ingest --format voc " + voc_dir) ||
        !ok("--out " + voc.string() + " ctx build --scenes " + (voc / "scenes.jsonl").string() + " --categories " +
            (voc / "categories.json").string()) ||
        !ok("--out " + coco.string() + " ingest --format coco " + coco_json) ||
        !ok("--out " + coco.string() + " ctx build --scenes " + (coco / "scenes.jsonl").string() + " --categories " +
            (coco / "categories.json").string()))
      return {false, "ingest/build of the supplied corpora failed"};
    const auto r = test::run_cli("ctx compare " + (voc / "graph.json").string() + " " + (coco / "graph.json").string() +
                                     " --voc-names-a",
                                 dir);
    if (r.code != 0) return {false, "ctx compare failed"};
    const auto j = nlohmann::json::parse(r.out);
    const double avg = j.at("average").get<double>();
    const int common = j.at("common").get<int>();
    return {avg >= 0.85 && avg <= 0.95 && common == 20,
            fmt("real corpora: %d common categories, average row-Pearson %.4f", common, avg)};
  }
  SynthSpec spec;
  spec.k = 6;
  spec.scenes = 2000;
  spec.max_objects = 6;
  const auto c = synth_corpus(spec, 4);
  const auto g = build_context_graph(c.scenes, c.categories);
  const double self = row_pearson(g.cooccur, g.cooccur, common_categories(g.categories, g.categories)).average;
  const CooccurrenceMatrix a{2, {}, {0.8, 0.2, 0.3, 0.7}, {true, true}};
  const CooccurrenceMatrix b{2, {}, {0.2, 0.8, 0.7, 0.3}, {true, true}};
  const double anti = row_pearson(a, b, {{0, 0}, {1, 1}}).average;
  return {self == 1.0 && std::abs(anti + 1.0) < 1e-12,
          fmt("real corpora not supplied (set CTXATTACK_VOC_ANNOTATIONS and CTXATTACK_COCO_INSTANCES); "
              "substitute: self %.17g, antisymmetric %.17g",
              self, anti)};
}

Image random_image(const Geometry& geo, std::uint64_t seed) {
  Rng rng(seed);
  Image img = Image::filled(geo.height, geo.width, 0);
  for (double& v : img.values) v = rng.uniform(0, 255);
  return img;
}

DesiredOutput random_desired(const ToyDetector& det, std::uint64_t seed) {
  Rng rng(seed);
  DesiredOutput d;
  d.classes = det.classes();
  for (int n = 0; n < det.geometry.cells(); ++n) {
    d.label.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(d.classes))));
    d.confidence.push_back(rng.uniform(0.5, 1.0));
  }
  return d;
}

Verdict gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const Geometry geo{};
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto det = random_detector("fd", geo, 8, derive_seed(seed, "det"), 0.005, 1.0, 2.0);
    const auto img = random_image(geo, derive_seed(seed, "img"));
    const auto d = random_desired(det, derive_seed(seed, "desired"));
    const auto grad = grad_wrt_image(det, img, d);
    Rng rng(derive_seed(seed, "pixels"));
    for (int t = 0; t < 100; ++t) {
      const auto i = rng.below(img.values.size());
      const double fd = test::central_difference(det, img, d, i);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-300}));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 20.0,
          fmt("worst relative error %.3g over 1000 pixels (extended-precision reference loss, step 1e-3); %.2f s",
              worst, t)};
}

Verdict update_fidelity() {
  std::string detail;
  bool ok = true;

  // single pixel, class 0 reads red: loss falls as red rises, so each step is +eps until the budget
  auto px = ToyDetector::zeros("px", Geometry{1, 1, 1, 1}, 1);
  px.weights = {0.01, 0, 0, 0, 0, 0};
  const std::vector<ToyDetector> one{px};
  const std::vector<DesiredOutput> want{{2, {0}, {1.0}}};
  const Image pixel = Image::filled(1, 1, 100);
  std::vector<double> path;
  ifgsm_attack(pixel, one, std::vector<double>{1.0}, std::span<const DesiredOutput>(want), IfgsmConfig{2.0, 10.0, 8},
               nullptr, [&](const PerturbationState& s) { path.push_back(s.delta[0]); });
  const std::vector<double> expected_path{2, 4, 6, 8, 10, 10, 10, 10};
  const bool step_ok = path == expected_path;
  ok = ok && step_ok;
  detail += step_ok ? "pixel path +2 per step to 10; " : "pixel path wrong; ";

  const Geometry geo{};
  const std::vector<ToyDetector> dets{random_detector("a", geo, 5, 1, 0.01, 1.0, 1.0),
                                      random_detector("b", geo, 5, 2, 0.01), random_detector("c", geo, 5, 3, 0.01)};
  const auto img = random_image(geo, 4);
  const std::vector<DesiredOutput> ds{random_desired(dets[0], 5), random_desired(dets[1], 6), random_desired(dets[2], 7)};
  bool onehot = true;
  for (std::size_t m = 0; m < dets.size(); ++m) {
    std::vector<double> alphas(dets.size(), 0.0);
    alphas[m] = 1.0;
    const auto e = ensemble_loss_and_grad(dets, alphas, img, ds, true);
    const auto s = loss_and_grad(dets[m], img, ds[m]);
    onehot = onehot && e.loss == s.loss && e.grad == s.grad;
  }
  ok = ok && onehot;
  detail += onehot ? "one-hot ensemble bit-exact; " : "one-hot ensemble differs; ";

  const std::vector<ToyDetector> target{dets[0]};
  const std::vector<DesiredOutput> td{ds[0]};
  for (double budget : {10.0, 20.0, 30.0}) {
    double worst = 0;
    int steps = 0;
    ifgsm_attack(img, target, std::vector<double>{1.0}, std::span<const DesiredOutput>(td), IfgsmConfig{2.0, budget, 50},
                 nullptr, [&](const PerturbationState& s) {
                   ++steps;
                   worst = std::max(worst, s.max_abs());
                 });
    ok = ok && steps == 50 && worst <= budget;
    detail += fmt("budget %g: max|delta| %g over %d steps; ", budget, worst, steps);
  }
  return {ok, detail};
}

Verdict success_fidelity() {
  SceneAnnotation s{"g", 100, 100, {{0, {50, 50, 10, 10}}}};
  const AttackGoal goal{s, 0, 1};
  const std::vector<Detection> exact{{1, {50, 50, 10, 3}}};
  const std::vector<Detection> above{{1, {50, 50, 10, 3.00001}}};
  const double i_exact = iou(exact[0].box, goal.victim().box), i_above = iou(above[0].box, goal.victim().box);
  const bool boundary = i_exact == 0.3 && !attack_success(exact, goal) && i_above > 0.3 && attack_success(above, goal);

  Rng rng(2024);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const BBox a{rng.uniform(20, 80), rng.uniform(20, 80), rng.uniform(5, 40), rng.uniform(5, 40)};
    const BBox b{a.cx + rng.uniform(-20, 20), a.cy + rng.uniform(-20, 20), rng.uniform(5, 40), rng.uniform(5, 40)};
    const auto p = a.corners(), q = b.corners();
    const double x0 = std::min(p.x0, q.x0), x1 = std::max(p.x1, q.x1);
    const double y0 = std::min(p.y0, q.y0), y1 = std::max(p.y1, q.y1);
    long both = 0, either = 0;
    for (int n = 0; n < 100000; ++n) {
      const double x = rng.uniform(x0, x1), y = rng.uniform(y0, y1);
      const bool ia = x >= p.x0 && x < p.x1 && y >= p.y0 && y < p.y1;
      const bool ib = x >= q.x0 && x < q.x1 && y >= q.y0 && y < q.y1;
      both += ia && ib;
      either += ia || ib;
    }
    worst = std::max(worst, std::abs(iou(a, b) - static_cast<double>(both) / static_cast<double>(either)));
  }
  return {boundary && worst < 1e-2,
          fmt("IoU %.17g fails, %.17g succeeds; Monte Carlo worst gap %.4f over 1000 pairs", i_exact, i_above, worst)};
}

Verdict loop_contract() {
  WorldSpec spec;
  spec.k = 6;
  SyntheticWorld world(spec, 8);
  SynthSpec cs;
  cs.k = 6;
  cs.scenes = 300;
  const auto corpus = synth_corpus(cs, 2);
  const auto graph = build_context_graph(corpus.scenes, corpus.categories);
  SceneAnnotation s{"fx", 64, 64, {{0, {12, 12, 16, 16}}, {2, {44, 40, 16, 16}}}};
  const auto clean = world.render(s, 3);
  const std::vector<ToyDetector> sur{world.surrogate("s", 4, 2.0)};
  const AttackGoal goal{s, 0, 4};
  const std::vector<double> alphas{1.0};

  SilentDetector silent;
  Rng r1(1);
  const auto fail = run_sequential_attack(goal, clean, graph, sur, alphas, silent, AttackConfig{}, r1);
  Rng r2(1);
  const auto win = run_sequential_attack(goal, clean, graph, sur, alphas, make_sim_blackbox(1, sur[0], 1.0),
                                         AttackConfig{}, r2);
  const bool ok = !fail.success && fail.helpers_used == 5 && fail.queries_used == 6 && win.success &&
                  win.success_step == 0 && win.queries_used == 1;
  return {ok, fmt("forced failure: %d helpers, %d queries; identical blackbox: success at h=%d with %d query",
                  fail.helpers_used, fail.queries_used, win.success_step, win.queries_used)};
}

struct Pooled {
  int successes = 0, n = 0;
  double rate() const { return n ? static_cast<double>(successes) / n : 0.0; }
};

double two_proportion_z(const Pooled& a, const Pooled& b) {
  const double p = static_cast<double>(a.successes + b.successes) / (a.n + b.n);
  const double se = std::sqrt(p * (1 - p) * (1.0 / a.n + 1.0 / b.n));
  return se > 0 ? (a.rate() - b.rate()) / se : 0.0;
}

Verdict context_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const BenchmarkSpec spec;
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  const std::vector<AttackMode> modes{AttackMode::Baseline, AttackMode::Random, AttackMode::Context};
  std::map<std::pair<AttackMode, int>, Pooled> pooled;
  Pooled flat_random, flat_context;
  std::string per_seed;
  int min_instances = 1 << 30;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto bench = make_benchmark(spec, seed);
    min_instances = std::min(min_instances, static_cast<int>(bench.instances.size()));
    const AttackEnvironment env{{bench.surrogate}, {1.0}, std::make_shared<SimBlackbox>(bench.surrogate)};
    SweepConfig sc;
    sc.master_seed = seed;
    sc.parallelism = threads;
    const auto r = run_sweep(bench.instances, bench.graph, env, sc);
    for (const auto& c : r.cells) {
      auto& p = pooled[{c.mode, c.helpers}];
      p.successes += c.successes;
      p.n += c.attempts;
    }
    per_seed += fmt("seed %d baseline %.3f random@5 %.3f context@5 %.3f; ", static_cast<int>(seed),
                    r.cell(AttackMode::Baseline, 10, 0).rate, r.cell(AttackMode::Random, 10, 5).rate,
                    r.cell(AttackMode::Context, 10, 5).rate);

    SweepConfig fc = sc;
    fc.modes = {AttackMode::Random, AttackMode::Context};
    fc.helper_caps = {5};
    const auto flat = run_sweep(bench.instances, unstructured_graph(spec, seed), env, fc);
    const auto& fr = flat.cell(AttackMode::Random, 10, 5);
    const auto& fx = flat.cell(AttackMode::Context, 10, 5);
    flat_random.successes += fr.successes;
    flat_random.n += fr.attempts;
    flat_context.successes += fx.successes;
    flat_context.n += fx.attempts;
  }

  bool monotone = true;
  for (AttackMode m : modes)
    for (int h = 1; h <= 5; ++h) {
      const auto &lo = pooled[{m, h - 1}], &hi = pooled[{m, h}];
      const double se = std::sqrt(lo.rate() * (1 - lo.rate()) / lo.n + hi.rate() * (1 - hi.rate()) / hi.n);
      if (lo.rate() - hi.rate() > 1.6448536269514722 * se) monotone = false;
    }
  const double z_gain = two_proportion_z(pooled[{AttackMode::Context, 5}], pooled[{AttackMode::Baseline, 5}]);
  const double z_flat = two_proportion_z(flat_context, flat_random);
  const double t = seconds_since(t0);
  std::string curve;
  for (AttackMode m : modes) {
    curve += std::string(to_string(m)) + " [";
    for (int h = 0; h <= 5; ++h) curve += fmt(h ? " %.3f" : "%.3f", pooled[{m, h}].rate());
    curve += "] ";
  }
  const bool ok = min_instances >= 200 && monotone && z_gain > 1.6448536269514722 && std::abs(z_flat) < 1.959963984540054 &&
                  t < 600.0;
  return {ok, fmt("pooled rates by h: %s; context vs baseline at h=5 z=%.2f; uniform-graph context %.3f vs random "
                  "%.3f z=%.2f; %d+ instances/seed; %s%.1f s",
                  curve.c_str(), z_gain, flat_context.rate(), flat_random.rate(), z_flat, min_instances,
                  per_seed.c_str(), t)};
}

Verdict determinism() {
  const auto dir = test::temp_dir("acceptance_determinism");
  const auto d = dir.string();
  SynthSpec spec;
  spec.k = 8;
  spec.scenes = 24;
  spec.min_objects = 2;
  spec.max_objects = 5;
  spec.width = 640;
  spec.height = 480;
  spec.size_min = 0.08;
  spec.size_max = 0.2;
  const auto corpus = synth_corpus(spec, 6);
  {
    std::ofstream s(dir / "scenes.jsonl");
    write_scenes(s, corpus.scenes);
    std::ofstream c(dir / "categories.json");
    write_categories(c, corpus.categories);
    auto shuffled = corpus.scenes;
    Rng rng(99);
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    std::ofstream p(dir / "shuffled.jsonl");
    write_scenes(p, shuffled);
  }
  if (test::run_cli("--out " + d + " ctx build --scenes " + d + "/scenes.jsonl --categories " + d + "/categories.json",
                    dir)
          .code != 0)
    return {false, "ctx build failed"};
  auto sweep = [&](const std::string& scenes, const std::string& extra) {
    const auto r = test::run_cli("--seed 17 --out " + d + " sweep run --scenes " + d + "/" + scenes + " --graph " + d +
                                     "/graph.json --budgets 10,20" + extra,
                                 dir);
    return r.code == 0 ? test::read_text(dir / "sweep.csv") : std::string();
  };
  const auto a = sweep("scenes.jsonl", ""), b = sweep("scenes.jsonl", ""), c = sweep("shuffled.jsonl", "");
  const auto e = sweep("scenes.jsonl", " --threads 4");
  auto bench = [&] {
    const auto r = test::run_cli("--seed 17 --out " + d + " sweep run --benchmark --instances 20", dir);
    return r.code == 0 ? test::read_text(dir / "sweep.csv") : std::string();
  };
  const auto f = bench(), g = bench();
  std::filesystem::remove_all(dir);
  const bool ok = !a.empty() && a == b && a == c && a == e && !f.empty() && f == g;
  return {ok, fmt("scenes CSV %zu bytes: rerun %s, permuted %s, 4 threads %s; benchmark CSV rerun %s", a.size(),
                  a == b ? "identical" : "differs", a == c ? "identical" : "differs", a == e ? "identical" : "differs",
                  f == g ? "identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"co-occurrence rows are stochastic", row_stochastic},
      {"estimator recovers planted conditionals", estimator_consistency},
      {"cross-dataset row correlation", cross_dataset},
      {"analytic gradients match finite differences", gradient_check},
      {"I-FGSM step, ensemble weighting and L-inf projection", update_fidelity},
      {"IoU > 0.3 success rule", success_fidelity},
      {"sequential loop helper/query budgets", loop_contract},
      {"context helpers raise the fooling rate", context_trend},
      {"sweep CSV determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s criterion %zu: %s -- %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failures ? 1 : 0;
}
