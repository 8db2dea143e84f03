#include <gtest/gtest.h>

#include "ctxattack/blackbox.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/synthetic_world.hpp"
#include "test_util.hpp"

using namespace ctxattack;

template <typename T>
concept Scored = requires(T d) { d.score; };
static_assert(!Scored<Detection>, "hard-label detections must not expose a score");
static_assert(Scored<ScoredDetection>);

namespace {

/// Midpoint-rule area estimate of the overlap ratio on an n x n lattice.
double lattice_iou(const BBox& a, const BBox& b, int n) {
  const auto p = a.corners(), q = b.corners();
  const double x0 = std::min(p.x0, q.x0), x1 = std::max(p.x1, q.x1);
  const double y0 = std::min(p.y0, q.y0), y1 = std::max(p.y1, q.y1);
  auto inside = [](const Corners& c, double x, double y) { return x >= c.x0 && x < c.x1 && y >= c.y0 && y < c.y1; };
  long both = 0, either = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = x0 + (x1 - x0) * (i + 0.5) / n, y = y0 + (y1 - y0) * (j + 0.5) / n;
      const bool ia = inside(p, x, y), ib = inside(q, x, y);
      both += ia && ib;
      either += ia || ib;
    }
  return static_cast<double>(both) / static_cast<double>(either);
}

AttackGoal square_goal() {
  SceneAnnotation s{"g", 100, 100, {{0, {50, 50, 10, 10}}}};
  return {s, 0, 1};
}

SceneAnnotation random_scene(Rng& rng, int k, int id) {
  SceneAnnotation s{"s" + std::to_string(id), 64, 64, {}};
  const int n = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n; ++i) {
    const double h = 8 * (1 + rng.below(3)), w = 8 * (1 + rng.below(3));
    s.objects.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(k))),
                         {rng.uniform(w / 2, 64 - w / 2), rng.uniform(h / 2, 64 - h / 2), h, w}});
  }
  return s;
}

}  // namespace

TEST(QueryLedger, ChargesAndExhausts) {
  SilentDetector silent;
  const Image img = Image::filled(8, 8, 0);
  QueryLedger ledger;
  EXPECT_TRUE(query(silent, img, ledger).empty());
  EXPECT_EQ(ledger.used(), 1);
  for (int i = 0; i < 5; ++i) query(silent, img, ledger);
  EXPECT_EQ(ledger.remaining(), 0);
  try {
    query(silent, img, ledger);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Budget);
  }
  EXPECT_EQ(ledger.used(), 6);
  EXPECT_THROW(QueryLedger(0), Error);
}

TEST(Iou, KnownValues) {
  const BBox a{5, 5, 10, 10};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, {25, 5, 10, 10}), 0.0);
  EXPECT_EQ(iou(a, {15, 5, 10, 10}), 0.0);  // touching edges
  EXPECT_DOUBLE_EQ(iou(a, {10, 5, 10, 10}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(a, {5, 5, 5, 5}), 0.25);
}

TEST(Iou, IntegerBoxesMatchCellCount) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    auto box = [&] {
      const int x0 = static_cast<int>(rng.below(15)), y0 = static_cast<int>(rng.below(15));
      const int w = 1 + static_cast<int>(rng.below(6)), h = 1 + static_cast<int>(rng.below(6));
      return BBox{x0 + w / 2.0, y0 + h / 2.0, static_cast<double>(h), static_cast<double>(w)};
    };
    const BBox a = box(), b = box();
    int both = 0, either = 0;
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 21; ++x) {
        const auto p = a.corners(), q = b.corners();
        const bool ia = x >= p.x0 && x < p.x1 && y >= p.y0 && y < p.y1;
        const bool ib = x >= q.x0 && x < q.x1 && y >= q.y0 && y < q.y1;
        both += ia && ib;
        either += ia || ib;
      }
    EXPECT_NEAR(iou(a, b), static_cast<double>(both) / either, 1e-12);
  }
}

TEST(Iou, RandomBoxesMatchLatticeEstimate) {
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    const BBox a{rng.uniform(20, 80), rng.uniform(20, 80), rng.uniform(5, 40), rng.uniform(5, 40)};
    const BBox b{a.cx + rng.uniform(-20, 20), a.cy + rng.uniform(-20, 20), rng.uniform(5, 40), rng.uniform(5, 40)};
    EXPECT_NEAR(iou(a, b), lattice_iou(a, b, 400), 1e-2);
    EXPECT_EQ(iou(a, b), iou(b, a));
    EXPECT_GE(iou(a, b), 0.0);
    EXPECT_LE(iou(a, b), 1.0);
  }
}

TEST(AttackSuccess, StrictThreshold) {
  const auto goal = square_goal();
  // nested boxes inside the 10 x 10 victim: overlap ratio equals the area over 100
  const std::vector<Detection> exact{{1, {50, 50, 10, 3}}};
  ASSERT_EQ(iou(exact[0].box, goal.victim().box), 0.3);
  EXPECT_FALSE(attack_success(exact, goal));
  const std::vector<Detection> above{{1, {50, 50, 10, 3.00001}}};
  ASSERT_NEAR(iou(above[0].box, goal.victim().box), 0.300001, 1e-12);
  EXPECT_TRUE(attack_success(above, goal));
}

TEST(AttackSuccess, LabelAndPlacementMatter) {
  const auto goal = square_goal();
  EXPECT_FALSE(attack_success(std::vector<Detection>{{0, {50, 50, 10, 10}}}, goal));
  EXPECT_FALSE(attack_success(std::vector<Detection>{{1, {90, 90, 10, 10}}}, goal));
  EXPECT_FALSE(attack_success(std::vector<Detection>{}, goal));
  EXPECT_TRUE(attack_success(std::vector<Detection>{{0, {50, 50, 10, 10}}, {1, {51, 50, 10, 10}}}, goal));
}

TEST(SimBlackbox, FullMixReproducesSurrogate) {
  WorldSpec spec;
  spec.k = 6;
  SyntheticWorld world(spec, 4);
  const auto sur = world.surrogate("s", 2, 2.0);
  const auto bb = make_sim_blackbox(9, sur, 1.0);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto img = world.render(random_scene(rng, spec.k, i), static_cast<std::uint64_t>(i));
    EXPECT_EQ(bb.detect(img), strip_scores(detect(sur, img)));
  }
}

TEST(SimBlackbox, AgreementFallsWithTau) {
  WorldSpec spec;
  spec.k = 6;
  SyntheticWorld world(spec, 4);
  const auto sur = world.surrogate("s", 2, 2.0);
  auto agreement = [&](double tau) {
    const auto bb = make_sim_blackbox(17, sur, tau);
    Rng rng(6);
    int same = 0, total = 0;
    for (int i = 0; i < 30; ++i) {
      const auto img = world.render(random_scene(rng, spec.k, i), static_cast<std::uint64_t>(i));
      const auto a = cell_labels(forward(sur, img), sur.background());
      const auto b = cell_labels(forward(bb.detector(), img), sur.background());
      for (std::size_t n = 0; n < a.size(); ++n) same += a[n] == b[n];
      total += static_cast<int>(a.size());
    }
    return static_cast<double>(same) / total;
  };
  const double full = agreement(1.0), none = agreement(0.0);
  EXPECT_EQ(full, 1.0);
  EXPECT_LT(none, full);
  EXPECT_LE(none, agreement(0.9));
}

TEST(SimBlackbox, Deterministic) {
  WorldSpec spec;
  spec.k = 5;
  SyntheticWorld world(spec, 1);
  const auto sur = world.surrogate("s", 1, 2.0);
  const auto a = make_sim_blackbox(3, sur, 0.5), b = make_sim_blackbox(3, sur, 0.5), c = make_sim_blackbox(4, sur, 0.5);
  EXPECT_EQ(a.detector().weights, b.detector().weights);
  EXPECT_NE(a.detector().weights, c.detector().weights);
  EXPECT_THROW(make_sim_blackbox(3, sur, 1.5), Error);
  EXPECT_THROW(make_sim_blackbox(3, sur, -0.1), Error);
}

TEST(SimBlackbox, TransferImprovesWithTau) {
  WorldSpec spec;
  spec.k = 6;
  int high = 0, low = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticWorld world(spec, seed);
    const auto sur = world.surrogate("s", seed, 2.0);
    const std::vector<ToyDetector> dets{sur};
    const auto bb_high = make_sim_blackbox(seed + 10, sur, 0.9), bb_low = make_sim_blackbox(seed + 10, sur, 0.1);
    Rng rng(seed);
    for (int i = 0; i < 20; ++i) {
      auto scene = random_scene(rng, spec.k, i);
      const std::size_t v = 0;
      int target = 0;
      while (std::any_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) { return o.category == target; }))
        ++target;
      const AttackGoal goal{scene, v, target};
      const auto img = world.render(scene, static_cast<std::uint64_t>(i));
      const auto run = ifgsm_attack(img, baseline_plan(goal), dets, std::vector<double>{1.0}, IfgsmConfig{2, 20, 50});
      high += attack_success(bb_high.detect(run.adversarial), goal);
      low += attack_success(bb_low.detect(run.adversarial), goal);
    }
  }
  EXPECT_GE(high, low);
  EXPECT_GT(high, 0);
}

TEST(SimBlackbox, ScratchDetectorIsValid) {
  const auto bb = make_sim_blackbox(2, Geometry{}, 4);
  EXPECT_EQ(bb.detector().k, 4);
  EXPECT_TRUE(bb.detector().weights.size() > 0);
}

TEST(DetectionJson, RoundTrip) {
  const std::vector<Detection> dets{{2, {10.5, 20.25, 8, 16}}, {0, {1, 2, 3, 4}}};
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : dets) j.push_back(to_json(d));
  EXPECT_EQ(detections_from_json(nlohmann::json::parse(j.dump())), dets);
  try {
    detections_from_json(nlohmann::json::parse(R"([{"label":1}])"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(DetectionJson, GoldenBlackboxOutput) {
  WorldSpec spec;
  spec.k = 6;
  SyntheticWorld world(spec, 5);
  SceneAnnotation s{"golden", 64, 64, {{0, {12, 12, 16, 16}}, {3, {44, 28, 24, 16}}, {5, {20, 52, 8, 24}}}};
  const auto img = world.render(s, 9);
  const auto bb = make_sim_blackbox(12, world.surrogate("golden", 31, 2.0), 0.9);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : bb.detect(img)) j.push_back(to_json(d));
  EXPECT_TRUE(test::matches_golden("detections_blackbox.json", j.dump(1) + "\n"));
}
