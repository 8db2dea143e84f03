#pragma once

// Planted-structure benchmark: categories come in partner pairs that almost
// always appear together, the surrogate's context stage is read off the
// resulting co-occurrence graph, and attack scenes are drawn from the same
// world.

#include <cstdint>
#include <vector>

#include "ctxattack/annotations.hpp"
#include "ctxattack/context.hpp"
#include "ctxattack/orchestrator.hpp"
#include "ctxattack/synthetic_world.hpp"

namespace ctxattack {

struct BenchmarkSpec {
  WorldSpec world;
  int graph_scenes = 4000;
  int attack_scenes = 200;
  int min_objects = 2;  // attack scenes
  int max_objects = 6;
  int graph_min_objects = 2;  // context-graph corpus
  int graph_max_objects = 2;
  /// Share of pair mass on partner pairs (2i, 2i+1); the rest is uniform.
  double partner_mass = 0.9;
  int max_cells = 4;
  double surrogate_jitter = 2.0;
};

/// Joint pair matrix with `partner_mass` spread over the partner pairs.
inline std::vector<double> partner_pair_matrix(int k, double partner_mass) {
  const auto kk = static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
  std::vector<double> q(kk, (1.0 - partner_mass) / static_cast<double>(kk));
  const int pairs = k / 2;
  for (int p = 0; p < pairs; ++p) {
    const int a = 2 * p, b = 2 * p + 1;
    q[static_cast<std::size_t>(a * k + b)] += partner_mass / (2.0 * pairs);
    q[static_cast<std::size_t>(b * k + a)] += partner_mass / (2.0 * pairs);
  }
  return q;
}

struct Benchmark {
  SyntheticWorld world;
  ContextGraph graph;            // structured graph estimated from the world
  std::vector<SceneAnnotation> scenes;
  std::vector<AttackInstance> instances;
  ToyDetector surrogate;         // context stage from `graph`
};

inline SynthSpec benchmark_synth_spec(const BenchmarkSpec& spec, int scenes, double partner_mass,
                                      bool graph_corpus) {
  SynthSpec s;
  s.k = spec.world.k;
  s.scenes = scenes;
  s.min_objects = graph_corpus ? spec.graph_min_objects : spec.min_objects;
  s.max_objects = graph_corpus ? spec.graph_max_objects : spec.max_objects;
  s.pair_matrix = partner_pair_matrix(spec.world.k, partner_mass);
  s.width = spec.world.geometry.width;
  s.height = spec.world.geometry.height;
  s.snap_grid = spec.world.geometry.grid;
  s.max_cells = spec.max_cells;
  return s;
}

inline Benchmark make_benchmark(const BenchmarkSpec& spec, std::uint64_t seed) {
  SyntheticWorld world(spec.world, derive_seed(seed, "world"));
  const auto graph_corpus =
      synth_corpus(benchmark_synth_spec(spec, spec.graph_scenes, spec.partner_mass, true), derive_seed(seed, "graph_corpus"));
  auto graph = build_context_graph(graph_corpus.scenes, graph_corpus.categories);
  auto attack_corpus =
      synth_corpus(benchmark_synth_spec(spec, spec.attack_scenes, spec.partner_mass, false), derive_seed(seed, "attack_corpus"));
  for (auto& s : attack_corpus.scenes) s.image_id = "bench_" + std::to_string(seed) + "_" + s.image_id;
  auto instances = prepare_instances(attack_corpus.scenes, world, derive_seed(seed, "instances"));
  auto surrogate = world.surrogate("surrogate", derive_seed(seed, "surrogate"), spec.surrogate_jitter, &graph.cooccur);
  return {std::move(world), std::move(graph), std::move(attack_corpus.scenes), std::move(instances),
          std::move(surrogate)};
}

/// Same world geometry, but a context graph estimated from a corpus with no
/// pair structure: rows are close to uniform.
inline ContextGraph unstructured_graph(const BenchmarkSpec& spec, std::uint64_t seed) {
  const auto corpus =
      synth_corpus(benchmark_synth_spec(spec, spec.graph_scenes, 0.0, true), derive_seed(seed, "flat_graph_corpus"));
  return build_context_graph(corpus.scenes, corpus.categories);
}

}  // namespace ctxattack
