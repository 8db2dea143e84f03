#pragma once

// Context graphs over object categories: co-occurrence, center distance and
// relative size, estimated from annotated scenes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <exception>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/crc.hpp>
#include <json.hpp>

#include "ctxattack/annotations.hpp"
#include "ctxattack/error.hpp"
#include "ctxattack/rng.hpp"

namespace ctxattack {

enum class Counting {
  InstancePairs,  // every ordered pair of distinct instances in a scene
  ScenePresence,  // one event per scene per ordered pair of present categories
};

inline const char* to_string(Counting c) {
  return c == Counting::InstancePairs ? "instance_pairs" : "scene_presence";
}

inline Counting counting_from_string(std::string_view s) {
  if (s == "instance_pairs") return Counting::InstancePairs;
  if (s == "scene_presence") return Counting::ScenePresence;
  throw Error(ErrorKind::Usage, "unknown counting unit '" + std::string(s) + "'");
}

struct BinSpec {
  int distance_bins = 32;
  int size_bins = 16;
  Counting counting = Counting::InstancePairs;
  /// Add-alpha smoothing on raw counts; 0 keeps raw relative frequencies.
  double alpha = 0.0;
};

struct CooccurrenceMatrix {
  int k = 0;
  std::vector<double> counts;  // raw counts, row-major k*k
  std::vector<double> p;       // row-normalized, row-major k*k
  std::vector<bool> observed;  // false for rows that fell back to uniform

  double operator()(int i, int j) const { return p[idx(i, j)]; }
  std::span<const double> row(int i) const {
    return {p.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(k),
            static_cast<std::size_t>(k)};
  }
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
  }
  bool operator==(const CooccurrenceMatrix&) const = default;
};

inline std::vector<double> uniform_edges(int bins) {
  std::vector<double> e(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) e[static_cast<std::size_t>(b)] = static_cast<double>(b) / bins;
  return e;
}

inline int bin_of(double v, int bins) {
  return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
}

struct DistanceHistogram {
  std::vector<double> edges;
  std::vector<double> mass;
  double mean = 0;  // exact mean of raw samples
  std::uint64_t n = 0;
  bool operator==(const DistanceHistogram&) const = default;
};

struct SizeHistogram2D {
  std::vector<double> edges_h;
  std::vector<double> edges_w;
  std::vector<double> mass;  // row-major [h_bin][w_bin]
  double mean_h = 0;
  double mean_w = 0;
  std::uint64_t n = 0;
  bool operator==(const SizeHistogram2D&) const = default;
};

struct MeanQuery {
  double value = 0;
  bool fallback = false;
};

struct SizeMean {
  double h = 0;
  double w = 0;
  bool fallback = false;
};

class ContextGraph {
 public:
  CategorySet categories;
  CooccurrenceMatrix cooccur;
  Counting counting = Counting::InstancePairs;
  double alpha = 0;

  int k() const { return cooccur.k; }

  /// Symmetric: (i, j) and (j, i) are the same stored cell.
  const DistanceHistogram& dist(int i, int j) const { return dist_[tri(i, j)]; }
  DistanceHistogram& dist(int i, int j) { return dist_[tri(i, j)]; }
  const SizeHistogram2D& size(int i, int j) const { return size_[cooccur.idx(i, j)]; }
  SizeHistogram2D& size(int i, int j) { return size_[cooccur.idx(i, j)]; }

  void resize(int k) {
    cooccur.k = k;
    const auto kk = static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
    cooccur.counts.assign(kk, 0.0);
    cooccur.p.assign(kk, 0.0);
    cooccur.observed.assign(static_cast<std::size_t>(k), false);
    dist_.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k + 1) / 2, {});
    size_.assign(kk, {});
  }

  std::size_t tri(int i, int j) const {
    if (i > j) std::swap(i, j);
    // Row i of the upper triangle starts after i*k - i*(i-1)/2 entries.
    const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
    const auto uk = static_cast<std::size_t>(k());
    return ui * uk - ui * (ui - 1) / 2 + (uj - ui);
  }

  bool operator==(const ContextGraph& o) const {
    return categories == o.categories && cooccur == o.cooccur && counting == o.counting &&
           alpha == o.alpha && dist_ == o.dist_ && size_ == o.size_;
  }

 private:
  std::vector<DistanceHistogram> dist_;  // upper triangle incl. diagonal
  std::vector<SizeHistogram2D> size_;    // full k*k, directed
};

namespace detail {

struct GraphAccumulator {
  int k = 0;
  int dbins = 0;
  int sbins = 0;
  std::vector<double> counts;
  std::vector<std::uint64_t> dist_counts;  // [tri][bin]
  std::vector<double> dist_sum;
  std::vector<std::uint64_t> dist_n;
  std::vector<std::uint64_t> size_counts;  // [i*k+j][hb*sbins+wb]
  std::vector<double> size_sum_h, size_sum_w;
  std::vector<std::uint64_t> size_n;

  GraphAccumulator(int k_, int dbins_, int sbins_) : k(k_), dbins(dbins_), sbins(sbins_) {
    const auto kk = static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
    const auto nt = static_cast<std::size_t>(k) * static_cast<std::size_t>(k + 1) / 2;
    counts.assign(kk, 0.0);
    dist_counts.assign(nt * static_cast<std::size_t>(dbins), 0);
    dist_sum.assign(nt, 0.0);
    dist_n.assign(nt, 0);
    size_counts.assign(kk * static_cast<std::size_t>(sbins) * static_cast<std::size_t>(sbins), 0);
    size_sum_h.assign(kk, 0.0);
    size_sum_w.assign(kk, 0.0);
    size_n.assign(kk, 0);
  }

  std::size_t tri(int i, int j) const {
    if (i > j) std::swap(i, j);
    const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
    return ui * static_cast<std::size_t>(k) - ui * (ui - 1) / 2 + (uj - ui);
  }
  std::size_t sq(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
  }

  void add_scene(const SceneAnnotation& s, Counting counting) {
    const double L = s.diagonal();
    const auto& objs = s.objects;
    const std::size_t m = objs.size();
    std::vector<int> present(static_cast<std::size_t>(k), 0);
    for (const auto& o : objs) {
      if (o.category < 0 || o.category >= k)
        throw Error(ErrorKind::Integrity, "scene " + s.image_id + ": category id out of range");
      ++present[static_cast<std::size_t>(o.category)];
    }

    if (counting == Counting::InstancePairs) {
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          if (a != b) counts[sq(objs[a].category, objs[b].category)] += 1.0;
    } else {
      for (int i = 0; i < k; ++i) {
        if (!present[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < k; ++j) {
          const int need = (i == j) ? 2 : 1;
          if (present[static_cast<std::size_t>(j)] >= need) counts[sq(i, j)] += 1.0;
        }
      }
    }

    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a + 1; b < m; ++b) {
        const double d = std::hypot(objs[a].box.cx - objs[b].box.cx,
                                    objs[a].box.cy - objs[b].box.cy) / L;
        const auto t = tri(objs[a].category, objs[b].category);
        ++dist_counts[t * static_cast<std::size_t>(dbins) + static_cast<std::size_t>(bin_of(d, dbins))];
        dist_sum[t] += d;
        ++dist_n[t];
      }
    }

    // Size of instance b given category i present elsewhere in the scene.
    for (int i = 0; i < k; ++i) {
      const int pi = present[static_cast<std::size_t>(i)];
      if (!pi) continue;
      for (const auto& b : objs) {
        if (b.category == i && pi < 2) continue;
        const double hn = b.box.h / L, wn = b.box.w / L;
        const auto c = sq(i, b.category);
        const auto cell = static_cast<std::size_t>(bin_of(hn, sbins) * sbins + bin_of(wn, sbins));
        ++size_counts[c * static_cast<std::size_t>(sbins * sbins) + cell];
        size_sum_h[c] += hn;
        size_sum_w[c] += wn;
        ++size_n[c];
      }
    }
  }

  void merge(const GraphAccumulator& o) {
    auto add = [](auto& dst, const auto& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    add(counts, o.counts);
    add(dist_counts, o.dist_counts);
    add(dist_sum, o.dist_sum);
    add(dist_n, o.dist_n);
    add(size_counts, o.size_counts);
    add(size_sum_h, o.size_sum_h);
    add(size_sum_w, o.size_sum_w);
    add(size_n, o.size_n);
  }
};

}  // namespace detail

/// Re-derive normalized probabilities from raw counts. Unobserved rows are
/// uniform and flagged.
inline void normalize_rows(CooccurrenceMatrix& m, double alpha) {
  const int k = m.k;
  m.p.assign(m.counts.size(), 0.0);
  m.observed.assign(static_cast<std::size_t>(k), false);
  for (int i = 0; i < k; ++i) {
    double total = 0;
    for (int j = 0; j < k; ++j) total += m.counts[m.idx(i, j)] + alpha;
    const bool has_data = total > 0 && [&] {
      for (int j = 0; j < k; ++j)
        if (m.counts[m.idx(i, j)] > 0) return true;
      return alpha > 0;
    }();
    m.observed[static_cast<std::size_t>(i)] = has_data;
    for (int j = 0; j < k; ++j)
      m.p[m.idx(i, j)] = has_data ? (m.counts[m.idx(i, j)] + alpha) / total : 1.0 / k;
  }
}

/// Build the three context graphs from a corpus. Scenes are reduced in
/// `threads` contiguous chunks merged in chunk order.
inline ContextGraph build_context_graph(std::span<const SceneAnnotation> corpus,
                                        const CategorySet& categories, const BinSpec& bins = {},
                                        unsigned threads = 1) {
  if (corpus.empty()) throw Error(ErrorKind::Data, "cannot build a context graph from an empty corpus");
  if (bins.distance_bins < 1 || bins.size_bins < 1 || !(bins.alpha >= 0))
    throw Error(ErrorKind::Usage, "invalid bin specification");
  const int k = categories.size();

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(corpus.size())));
  std::vector<detail::GraphAccumulator> parts(threads, {k, bins.distance_bins, bins.size_bins});
  const std::size_t chunk = (corpus.size() + threads - 1) / threads;
  auto work = [&](unsigned t) {
    const std::size_t lo = t * chunk, hi = std::min(corpus.size(), lo + chunk);
    for (std::size_t s = lo; s < hi; ++s) parts[t].add_scene(corpus[s], bins.counting);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          work(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (unsigned t = 1; t < threads; ++t) parts[0].merge(parts[t]);
  const auto& acc = parts[0];

  ContextGraph g;
  g.categories = categories;
  g.counting = bins.counting;
  g.alpha = bins.alpha;
  g.resize(k);
  g.cooccur.counts = acc.counts;
  normalize_rows(g.cooccur, bins.alpha);

  const auto dedges = uniform_edges(bins.distance_bins);
  const auto sedges = uniform_edges(bins.size_bins);
  for (int i = 0; i < k; ++i) {
    for (int j = i; j < k; ++j) {
      const auto t = acc.tri(i, j);
      auto& h = g.dist(i, j);
      h.edges = dedges;
      h.n = acc.dist_n[t];
      h.mass.assign(static_cast<std::size_t>(bins.distance_bins), 0.0);
      if (h.n > 0) {
        for (int b = 0; b < bins.distance_bins; ++b)
          h.mass[static_cast<std::size_t>(b)] =
              static_cast<double>(acc.dist_counts[t * static_cast<std::size_t>(bins.distance_bins) +
                                                  static_cast<std::size_t>(b)]) /
              static_cast<double>(h.n);
        h.mean = acc.dist_sum[t] / static_cast<double>(h.n);
      }
    }
    for (int j = 0; j < k; ++j) {
      const auto c = acc.sq(i, j);
      auto& h = g.size(i, j);
      h.edges_h = sedges;
      h.edges_w = sedges;
      h.n = acc.size_n[c];
      const auto nb = static_cast<std::size_t>(bins.size_bins * bins.size_bins);
      h.mass.assign(nb, 0.0);
      if (h.n > 0) {
        for (std::size_t b = 0; b < nb; ++b)
          h.mass[b] = static_cast<double>(acc.size_counts[c * nb + b]) / static_cast<double>(h.n);
        h.mean_h = acc.size_sum_h[c] / static_cast<double>(h.n);
        h.mean_w = acc.size_sum_w[c] / static_cast<double>(h.n);
      }
    }
  }
  return g;
}

/// Draw j with probability row[j].
inline int sample_label(std::span<const double> row, Rng& rng) {
  if (row.empty()) throw Error(ErrorKind::Integrity, "cannot sample from an empty row");
  double total = 0;
  for (double v : row) {
    if (!(v >= 0)) throw Error(ErrorKind::Integrity, "co-occurrence row has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw Error(ErrorKind::Integrity, "co-occurrence row does not sum to 1");
  const double u = rng.uniform() * total;
  double acc = 0;
  int last_positive = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] <= 0) continue;
    last_positive = static_cast<int>(j);
    acc += row[j];
    if (u < acc) return static_cast<int>(j);
  }
  return last_positive;
}

/// Mean normalized center distance for (i, j). Empty cells fall back to the
/// sample-weighted mean over row i, then over the whole graph.
inline MeanQuery distance_mean(const ContextGraph& g, int i, int j) {
  const auto& h = g.dist(i, j);
  if (h.n > 0) return {h.mean, false};
  double sum = 0, n = 0;
  for (int c = 0; c < g.k(); ++c) {
    const auto& hc = g.dist(i, c);
    sum += hc.mean * static_cast<double>(hc.n);
    n += static_cast<double>(hc.n);
  }
  if (n == 0) {
    for (int a = 0; a < g.k(); ++a)
      for (int b = a; b < g.k(); ++b) {
        const auto& hc = g.dist(a, b);
        sum += hc.mean * static_cast<double>(hc.n);
        n += static_cast<double>(hc.n);
      }
  }
  return {n > 0 ? sum / n : 0.0, true};
}

/// Mean normalized (h, w) of category j given i. Same fallback as distance_mean.
inline SizeMean size_mean(const ContextGraph& g, int i, int j) {
  const auto& h = g.size(i, j);
  if (h.n > 0) return {h.mean_h, h.mean_w, false};
  double sh = 0, sw = 0, n = 0;
  auto add = [&](const SizeHistogram2D& c) {
    sh += c.mean_h * static_cast<double>(c.n);
    sw += c.mean_w * static_cast<double>(c.n);
    n += static_cast<double>(c.n);
  };
  for (int c = 0; c < g.k(); ++c) add(g.size(i, c));
  if (n == 0)
    for (int a = 0; a < g.k(); ++a)
      for (int b = 0; b < g.k(); ++b) add(g.size(a, b));
  if (n == 0) return {0.1, 0.1, true};
  return {sh / n, sw / n, true};
}

// ---------------------------------------------------------------------------
// Cross-graph comparison

using CategoryMapping = std::vector<std::pair<int, int>>;  // (index in a, index in b)

/// Pair up categories by name. With `voc_names_in_a`, a's VOC names are
/// translated to COCO synonyms first.
inline CategoryMapping common_categories(const CategorySet& a, const CategorySet& b,
                                         bool voc_names_in_a = false) {
  CategoryMapping m;
  for (int i = 0; i < a.size(); ++i) {
    const std::string name = voc_names_in_a ? voc_to_coco_name(a.name(i)) : a.name(i);
    if (auto j = b.find(name)) m.emplace_back(i, *j);
  }
  return m;
}

struct PearsonResult {
  std::vector<std::optional<double>> per_row;
  double average = 0;
  int undefined_rows = 0;
};

/// Population Pearson correlation of x and y; nullopt when either has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  // The 1/n factors of the population moments cancel; this form is exactly 1 for x == y.
  return sxy / std::sqrt(sxx * syy);
}

/// Row-wise Pearson correlation between two co-occurrence matrices after
/// restricting both to the mapped categories.
inline PearsonResult row_pearson(const CooccurrenceMatrix& a, const CooccurrenceMatrix& b,
                                 const CategoryMapping& mapping) {
  std::vector<bool> seen_a(static_cast<std::size_t>(a.k), false);
  std::vector<bool> seen_b(static_cast<std::size_t>(b.k), false);
  for (auto [i, j] : mapping) {
    if (i < 0 || i >= a.k || j < 0 || j >= b.k)
      throw Error(ErrorKind::Usage, "category mapping index out of range");
    if (seen_a[static_cast<std::size_t>(i)] || seen_b[static_cast<std::size_t>(j)])
      throw Error(ErrorKind::Usage, "category mapping is not injective");
    seen_a[static_cast<std::size_t>(i)] = seen_b[static_cast<std::size_t>(j)] = true;
  }
  if (mapping.size() < 2) throw Error(ErrorKind::Usage, "need at least two mapped categories");

  PearsonResult r;
  double sum = 0;
  int defined = 0;
  std::vector<double> ra(mapping.size()), rb(mapping.size());
  for (auto [ri, rj] : mapping) {
    for (std::size_t c = 0; c < mapping.size(); ++c) {
      ra[c] = a(ri, mapping[c].first);
      rb[c] = b(rj, mapping[c].second);
    }
    auto v = pearson(ra, rb);
    r.per_row.push_back(v);
    if (v) {
      sum += *v;
      ++defined;
    } else {
      ++r.undefined_rows;
    }
  }
  r.average = defined > 0 ? sum / defined : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kGraphFormatVersion = 1;

namespace detail {

inline std::uint32_t crc32(const std::string& s) {
  boost::crc_32_type crc;
  crc.process_bytes(s.data(), s.size());
  return crc.checksum();
}

inline nlohmann::json graph_body(const ContextGraph& g) {
  nlohmann::json dist = nlohmann::json::array();
  for (int i = 0; i < g.k(); ++i)
    for (int j = i; j < g.k(); ++j) {
      const auto& h = g.dist(i, j);
      dist.push_back({{"i", i}, {"j", j}, {"edges", h.edges}, {"mass", h.mass}, {"mean", h.mean}, {"n", h.n}});
    }
  nlohmann::json size = nlohmann::json::array();
  for (int i = 0; i < g.k(); ++i)
    for (int j = 0; j < g.k(); ++j) {
      const auto& h = g.size(i, j);
      size.push_back({{"i", i},
                      {"j", j},
                      {"edges_h", h.edges_h},
                      {"edges_w", h.edges_w},
                      {"mass", h.mass},
                      {"mean_h", h.mean_h},
                      {"mean_w", h.mean_w},
                      {"n", h.n}});
    }
  return {{"categories", g.categories.names()},
          {"counting", to_string(g.counting)},
          {"alpha", g.alpha},
          {"counts", g.cooccur.counts},
          {"cooccur", g.cooccur.p},
          {"dist", dist},
          {"size", size}};
}

}  // namespace detail

/// Write a versioned, checksummed JSON document.
inline void save_graph(const ContextGraph& g, std::ostream& out) {
  const auto body = detail::graph_body(g);
  const std::string body_text = body.dump();
  nlohmann::json doc = {{"version", kGraphFormatVersion}, {"checksum", detail::crc32(body_text)}};
  doc.update(body);
  out << doc.dump() << '\n';
}

inline ContextGraph load_graph(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Checksum, "context graph is corrupt or truncated (byte " +
                                         std::to_string(e.byte) + ")");
  }
  if (!doc.is_object() || !doc.contains("version") || !doc.contains("checksum"))
    throw Error(ErrorKind::Checksum, "context graph lacks version/checksum header");
  if (doc["version"] != kGraphFormatVersion)
    throw Error(ErrorKind::Version, "unsupported context graph version " + doc["version"].dump());
  const auto expected = doc["checksum"].get<std::uint32_t>();
  doc.erase("version");
  doc.erase("checksum");
  if (detail::crc32(doc.dump()) != expected)
    throw Error(ErrorKind::Checksum, "context graph checksum mismatch");

  try {
    ContextGraph g;
    g.categories = CategorySet(doc.at("categories").get<std::vector<std::string>>());
    g.counting = counting_from_string(doc.at("counting").get<std::string>());
    g.alpha = doc.at("alpha").get<double>();
    const int k = g.categories.size();
    g.resize(k);
    g.cooccur.counts = doc.at("counts").get<std::vector<double>>();
    g.cooccur.p = doc.at("cooccur").get<std::vector<double>>();
    if (g.cooccur.p.size() != static_cast<std::size_t>(k * k) || g.cooccur.counts.size() != g.cooccur.p.size())
      throw Error(ErrorKind::Integrity, "co-occurrence matrix size does not match categories");
    for (int i = 0; i < k; ++i) {
      bool obs = g.alpha > 0;
      for (int j = 0; j < k; ++j) obs = obs || g.cooccur.counts[g.cooccur.idx(i, j)] > 0;
      g.cooccur.observed[static_cast<std::size_t>(i)] = obs;
    }
    for (const auto& c : doc.at("dist")) {
      auto& h = g.dist(c.at("i").get<int>(), c.at("j").get<int>());
      h.edges = c.at("edges").get<std::vector<double>>();
      h.mass = c.at("mass").get<std::vector<double>>();
      h.mean = c.at("mean").get<double>();
      h.n = c.at("n").get<std::uint64_t>();
    }
    for (const auto& c : doc.at("size")) {
      auto& h = g.size(c.at("i").get<int>(), c.at("j").get<int>());
      h.edges_h = c.at("edges_h").get<std::vector<double>>();
      h.edges_w = c.at("edges_w").get<std::vector<double>>();
      h.mass = c.at("mass").get<std::vector<double>>();
      h.mean_h = c.at("mean_h").get<double>();
      h.mean_w = c.at("mean_w").get<double>();
      h.n = c.at("n").get<std::uint64_t>();
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("context graph: ") + e.what());
  }
}

/// A context graph whose co-occurrence rows are replaced by `rows` (row-major
/// k*k, each row summing to 1). Distance and size graphs are kept.
inline ContextGraph with_cooccurrence(ContextGraph g, std::vector<double> rows) {
  if (rows.size() != g.cooccur.p.size())
    throw Error(ErrorKind::Usage, "replacement co-occurrence has the wrong size");
  g.cooccur.p = std::move(rows);
  return g;
}

}  // namespace ctxattack
