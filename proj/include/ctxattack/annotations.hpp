#pragma once

// Scene annotations: COCO/VOC ingestion, the line-delimited scene format,
// and seeded synthetic corpora with planted co-occurrence structure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>

#include "ctxattack/error.hpp"
#include "ctxattack/rng.hpp"

namespace ctxattack {

class CategorySet {
 public:
  CategorySet() = default;

  explicit CategorySet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw Error(ErrorKind::Data, "category set must not be empty");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], static_cast<int>(i)).second)
        throw Error(ErrorKind::Data, "duplicate category name '" + names_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(names_.size()); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }

  std::optional<int> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw Error(ErrorKind::Data, "unknown category '" + std::string(name) + "'");
  }

  bool operator==(const CategorySet& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct Corners {
  double x0, y0, x1, y1;
};

/// Center-form box: (cx, cy) center, h height, w width, all in pixels.
struct BBox {
  double cx = 0, cy = 0, h = 0, w = 0;

  static BBox from_corners(const Corners& c) {
    return {(c.x0 + c.x1) / 2.0, (c.y0 + c.y1) / 2.0, c.y1 - c.y0, c.x1 - c.x0};
  }
  Corners corners() const { return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0}; }
  double area() const { return h * w; }
  bool valid() const { return h > 0 && w > 0 && std::isfinite(cx) && std::isfinite(cy); }

  bool operator==(const BBox&) const = default;
};

struct SceneObject {
  int category = 0;
  BBox box;
  bool operator==(const SceneObject&) const = default;
};

struct SceneAnnotation {
  std::string image_id;
  double width = 0;
  double height = 0;
  std::vector<SceneObject> objects;

  double diagonal() const { return std::sqrt(width * width + height * height); }
  bool operator==(const SceneAnnotation&) const = default;
};

/// A parsed corpus plus everything that was skipped or repaired on the way in.
struct Corpus {
  CategorySet categories;
  std::vector<SceneAnnotation> scenes;
  std::vector<std::string> warnings;
  std::size_t dropped_unknown_category = 0;

  std::size_t object_count() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.objects.size();
    return n;
  }
};

namespace detail {

/// Clamp corners to the image. Returns nullopt when nothing of the box survives.
inline std::optional<BBox> clamp_to_image(Corners c, double width, double height, bool& clamped) {
  const Corners orig = c;
  c.x0 = std::clamp(c.x0, 0.0, width);
  c.x1 = std::clamp(c.x1, 0.0, width);
  c.y0 = std::clamp(c.y0, 0.0, height);
  c.y1 = std::clamp(c.y1, 0.0, height);
  clamped = c.x0 != orig.x0 || c.x1 != orig.x1 || c.y0 != orig.y0 || c.y1 != orig.y1;
  if (c.x1 <= c.x0 || c.y1 <= c.y0) return std::nullopt;
  return BBox::from_corners(c);
}

inline std::string id_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  return v.dump();
}

}  // namespace detail

/// Fixed VOC -> COCO synonym table for the 20 VOC classes. Names that are
/// already COCO names map to themselves.
inline std::string voc_to_coco_name(std::string_view voc) {
  static const std::map<std::string, std::string, std::less<>> table = {
      {"aeroplane", "airplane"},      {"bicycle", "bicycle"}, {"bird", "bird"},
      {"boat", "boat"},               {"bottle", "bottle"},   {"bus", "bus"},
      {"car", "car"},                 {"cat", "cat"},         {"chair", "chair"},
      {"cow", "cow"},                 {"diningtable", "dining table"},
      {"dog", "dog"},                 {"horse", "horse"},     {"motorbike", "motorcycle"},
      {"person", "person"},           {"pottedplant", "potted plant"},
      {"sheep", "sheep"},             {"sofa", "couch"},      {"train", "train"},
      {"tvmonitor", "tv"},
  };
  auto it = table.find(voc);
  return it == table.end() ? std::string(voc) : it->second;
}

/// Parse a COCO `instances` document. COCO boxes are [x_min, y_min, w, h].
///
/// With `categories` supplied, names are mapped into it and annotations whose
/// name is missing are dropped (counted); otherwise the category set is built
/// in ascending COCO category-id order.
inline Corpus parse_coco(std::string_view json_text,
                         const std::optional<CategorySet>& categories = std::nullopt) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text.begin(), json_text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Data,
                "malformed COCO JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorKind::Data, "COCO document is not a JSON object");
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!doc.contains(key) || !doc[key].is_array())
      throw Error(ErrorKind::Data, std::string("COCO document lacks array '") + key + "'");
  }

  Corpus out;
  std::map<long long, std::string> coco_names;  // coco id -> name, ascending id
  for (const auto& c : doc["categories"]) {
    coco_names[c.at("id").get<long long>()] = c.at("name").get<std::string>();
  }
  if (categories) {
    out.categories = *categories;
  } else {
    std::vector<std::string> names;
    for (const auto& [id, name] : coco_names) names.push_back(name);
    out.categories = CategorySet(std::move(names));
  }

  std::unordered_map<std::string, std::size_t> scene_of;
  for (const auto& img : doc["images"]) {
    SceneAnnotation s;
    s.image_id = detail::id_string(img.at("id"));
    s.width = img.value("width", 0.0);
    s.height = img.value("height", 0.0);
    if (!(s.width > 0) || !(s.height > 0)) {
      out.warnings.push_back("image " + s.image_id + ": non-positive size, skipped");
      continue;
    }
    scene_of.emplace(s.image_id, out.scenes.size());
    out.scenes.push_back(std::move(s));
  }

  for (const auto& a : doc["annotations"]) {
    const std::string ann_id = a.contains("id") ? detail::id_string(a["id"]) : "?";
    const std::string image_id = detail::id_string(a.at("image_id"));
    auto sit = scene_of.find(image_id);
    if (sit == scene_of.end()) {
      out.warnings.push_back("annotation " + ann_id + ": unknown image id " + image_id);
      continue;
    }
    auto cit = coco_names.find(a.at("category_id").get<long long>());
    if (cit == coco_names.end()) {
      out.warnings.push_back("annotation " + ann_id + ": unknown category id");
      continue;
    }
    auto cat = out.categories.find(cit->second);
    if (!cat) {
      ++out.dropped_unknown_category;
      continue;
    }
    const auto& bb = a.at("bbox");
    if (!bb.is_array() || bb.size() != 4) {
      out.warnings.push_back("annotation " + ann_id + ": bbox is not [x, y, w, h]");
      continue;
    }
    const double x = bb[0].get<double>(), y = bb[1].get<double>();
    const double w = bb[2].get<double>(), h = bb[3].get<double>();
    if (!(w > 0) || !(h > 0)) {
      out.warnings.push_back("annotation " + ann_id + ": non-positive width/height, skipped");
      continue;
    }
    auto& scene = out.scenes[sit->second];
    bool clamped = false;
    auto box = detail::clamp_to_image({x, y, x + w, y + h}, scene.width, scene.height, clamped);
    if (!box) {
      out.warnings.push_back("annotation " + ann_id + ": box outside image, skipped");
      continue;
    }
    if (clamped) out.warnings.push_back("annotation " + ann_id + ": box clamped to image");
    scene.objects.push_back({*cat, *box});
  }
  return out;
}

struct VocDocument {
  std::string name;  // file name, used in error messages
  std::string xml;
};

struct VocOptions {
  /// Translate VOC class names to their COCO synonyms before lookup.
  bool coco_names = false;
};

/// Parse VOC `annotation` documents, one scene per document. Without a
/// supplied category set, categories are discovered in lexicographic order.
inline Corpus parse_voc(const std::vector<VocDocument>& docs,
                        const std::optional<CategorySet>& categories = std::nullopt,
                        VocOptions options = {}) {
  namespace pt = boost::property_tree;
  struct RawObject {
    std::string name;
    Corners c;
  };
  struct RawScene {
    SceneAnnotation scene;
    std::vector<RawObject> objects;
  };

  Corpus out;
  std::vector<RawScene> raw;
  for (const auto& doc : docs) {
    pt::ptree tree;
    try {
      std::istringstream in(doc.xml);
      pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
      throw Error(ErrorKind::Data, "malformed VOC XML in " + doc.name + ": " + e.message());
    }
    auto root = tree.get_child_optional("annotation");
    if (!root) throw Error(ErrorKind::Data, "VOC file " + doc.name + " has no <annotation>");

    RawScene rs;
    rs.scene.image_id = root->get<std::string>("filename", doc.name);
    try {
      rs.scene.width = root->get<double>("size.width");
      rs.scene.height = root->get<double>("size.height");
    } catch (const pt::ptree_error&) {
      throw Error(ErrorKind::Data, "VOC file " + doc.name + " lacks a valid <size>");
    }
    if (!(rs.scene.width > 0) || !(rs.scene.height > 0))
      throw Error(ErrorKind::Data, "VOC file " + doc.name + " has non-positive size");

    for (const auto& [tag, node] : *root) {
      if (tag != "object") continue;
      RawObject o;
      try {
        o.name = node.get<std::string>("name");
        o.c = {node.get<double>("bndbox.xmin"), node.get<double>("bndbox.ymin"),
               node.get<double>("bndbox.xmax"), node.get<double>("bndbox.ymax")};
      } catch (const pt::ptree_error& e) {
        out.warnings.push_back(doc.name + ": object without name/bndbox, skipped");
        continue;
      }
      if (options.coco_names) o.name = voc_to_coco_name(o.name);
      if (o.c.x1 <= o.c.x0 || o.c.y1 <= o.c.y0) {
        out.warnings.push_back(doc.name + ": object '" + o.name + "' has inverted box, skipped");
        continue;
      }
      rs.objects.push_back(std::move(o));
    }
    raw.push_back(std::move(rs));
  }

  if (categories) {
    out.categories = *categories;
  } else {
    std::vector<std::string> names;
    for (const auto& rs : raw)
      for (const auto& o : rs.objects) names.push_back(o.name);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    if (names.empty()) names.push_back("background");
    out.categories = CategorySet(std::move(names));
  }

  for (auto& rs : raw) {
    for (const auto& o : rs.objects) {
      auto cat = out.categories.find(o.name);
      if (!cat) {
        ++out.dropped_unknown_category;
        continue;
      }
      bool clamped = false;
      auto box = detail::clamp_to_image(o.c, rs.scene.width, rs.scene.height, clamped);
      if (!box) {
        out.warnings.push_back(rs.scene.image_id + ": object outside image, skipped");
        continue;
      }
      if (clamped) out.warnings.push_back(rs.scene.image_id + ": box clamped to image");
      rs.scene.objects.push_back({*cat, *box});
    }
    out.scenes.push_back(std::move(rs.scene));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Line-delimited scene format

inline nlohmann::json to_json(const SceneAnnotation& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"category", o.category},
                    {"cx", o.box.cx},
                    {"cy", o.box.cy},
                    {"h", o.box.h},
                    {"w", o.box.w}});
  }
  return {{"image_id", s.image_id}, {"width", s.width}, {"height", s.height}, {"objects", objs}};
}

inline SceneAnnotation scene_from_json(const nlohmann::json& j) {
  SceneAnnotation s;
  s.image_id = j.at("image_id").get<std::string>();
  s.width = j.at("width").get<double>();
  s.height = j.at("height").get<double>();
  for (const auto& o : j.at("objects")) {
    s.objects.push_back({o.at("category").get<int>(),
                         {o.at("cx").get<double>(), o.at("cy").get<double>(),
                          o.at("h").get<double>(), o.at("w").get<double>()}});
  }
  return s;
}

inline void write_scenes(std::ostream& out, const std::vector<SceneAnnotation>& scenes) {
  for (const auto& s : scenes) out << to_json(s).dump() << '\n';
}

inline std::vector<SceneAnnotation> read_scenes(std::istream& in, int k = -1) {
  std::vector<SceneAnnotation> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Data, "scene file line " + std::to_string(lineno) + ": " + e.what());
    }
    if (k > 0) {
      for (const auto& o : scenes.back().objects)
        if (o.category < 0 || o.category >= k)
          throw Error(ErrorKind::Integrity,
                      "scene file line " + std::to_string(lineno) + ": category out of range");
    }
  }
  return scenes;
}

inline void write_categories(std::ostream& out, const CategorySet& cats) {
  out << nlohmann::json{{"names", cats.names()}}.dump(2) << '\n';
}

inline CategorySet read_categories(std::istream& in) {
  try {
    auto j = nlohmann::json::parse(in);
    return CategorySet(j.at("names").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Data, std::string("category sidecar: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpora

/// Scenes are built from pairs drawn from a joint pair matrix, so the
/// co-occurrence structure of the corpus is known in closed form.
struct SynthSpec {
  int k = 3;
  int scenes = 100;
  int min_objects = 2;
  int max_objects = 2;
  /// k*k row-major joint probability of a drawn (first, second) pair.
  /// Empty means uniform. Normalized before use.
  std::vector<double> pair_matrix;
  double width = 1000;
  double height = 1000;
  /// Box side lengths as a fraction of the image diagonal.
  double size_min = 0.02;
  double size_max = 0.05;
  /// When set, the second member of each pair is centered at exactly this
  /// normalized distance from the first.
  std::optional<double> planted_distance;
  /// When > 0, boxes are aligned to a snap_grid x snap_grid cell lattice.
  int snap_grid = 0;
  /// Maximum cells per side for snapped boxes.
  int max_cells = 2;
};

namespace detail {

inline std::size_t sample_index(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform() * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
}

inline bool overlaps_any(const BBox& b, const std::vector<SceneObject>& objs) {
  const auto c = b.corners();
  for (const auto& o : objs) {
    const auto d = o.box.corners();
    if (c.x0 < d.x1 && d.x0 < c.x1 && c.y0 < d.y1 && d.y0 < c.y1) return true;
  }
  return false;
}

}  // namespace detail

/// Marginal category distribution of one member of a drawn pair:
/// q_i = (row_i + col_i) / 2 of the normalized pair matrix.
inline std::vector<double> pair_marginal(const std::vector<double>& q, int k) {
  std::vector<double> m(static_cast<std::size_t>(k), 0.0);
  double total = 0;
  for (double v : q) total += v;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double v = q[static_cast<std::size_t>(i * k + j)] / total;
      m[static_cast<std::size_t>(i)] += v / 2;
      m[static_cast<std::size_t>(j)] += v / 2;
    }
  return m;
}

inline Corpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.k < 2) throw Error(ErrorKind::Usage, "synthetic corpus needs k >= 2");
  if (spec.scenes < 0 || spec.min_objects < 1 || spec.max_objects < spec.min_objects)
    throw Error(ErrorKind::Usage, "invalid synthetic object-count range");
  const auto kk = static_cast<std::size_t>(spec.k) * static_cast<std::size_t>(spec.k);
  std::vector<double> q = spec.pair_matrix.empty() ? std::vector<double>(kk, 1.0) : spec.pair_matrix;
  if (q.size() != kk) throw Error(ErrorKind::Usage, "pair matrix must be k*k");
  for (double v : q)
    if (!(v >= 0)) throw Error(ErrorKind::Usage, "pair matrix entries must be non-negative");

  std::vector<double> pair_cdf(q.size());
  double acc = 0;
  for (std::size_t i = 0; i < q.size(); ++i) pair_cdf[i] = (acc += q[i]);
  if (!(acc > 0)) throw Error(ErrorKind::Usage, "pair matrix has no mass");
  const auto marginal = pair_marginal(q, spec.k);
  std::vector<double> single_cdf(marginal.size());
  acc = 0;
  for (std::size_t i = 0; i < marginal.size(); ++i) single_cdf[i] = (acc += marginal[i]);

  std::vector<std::string> names;
  for (int i = 0; i < spec.k; ++i) names.push_back("c" + std::to_string(i));

  Corpus out;
  out.categories = CategorySet(std::move(names));
  Rng rng(seed);
  const double W = spec.width, H = spec.height;
  const double L = std::sqrt(W * W + H * H);

  auto random_box = [&](const std::vector<SceneObject>& existing) {
    BBox b;
    for (int attempt = 0; attempt < 50; ++attempt) {
      if (spec.snap_grid > 0) {
        const double cw = W / spec.snap_grid, ch = H / spec.snap_grid;
        const int nw = rng.uniform_int(1, spec.max_cells);
        const int nh = rng.uniform_int(1, spec.max_cells);
        const int gx = rng.uniform_int(0, spec.snap_grid - nw);
        const int gy = rng.uniform_int(0, spec.snap_grid - nh);
        b = BBox::from_corners({gx * cw, gy * ch, (gx + nw) * cw, (gy + nh) * ch});
      } else {
        b.w = rng.uniform(spec.size_min, spec.size_max) * L;
        b.h = rng.uniform(spec.size_min, spec.size_max) * L;
        b.cx = rng.uniform(b.w / 2, W - b.w / 2);
        b.cy = rng.uniform(b.h / 2, H - b.h / 2);
      }
      if (!detail::overlaps_any(b, existing)) break;
    }
    return b;
  };

  for (int s = 0; s < spec.scenes; ++s) {
    SceneAnnotation scene;
    scene.image_id = "synth_" + std::to_string(s);
    scene.width = W;
    scene.height = H;
    const int n = rng.uniform_int(spec.min_objects, spec.max_objects);
    for (int p = 0; p < n / 2; ++p) {
      const auto idx = detail::sample_index(pair_cdf, rng);
      const int a = static_cast<int>(idx) / spec.k, b = static_cast<int>(idx) % spec.k;
      SceneObject first{a, random_box(scene.objects)};
      SceneObject second{b, {}};
      if (spec.planted_distance) {
        // Anchor near the middle so the partner always fits at the planted radius.
        const double d = *spec.planted_distance * L;
        second.box.w = rng.uniform(spec.size_min, spec.size_max) * L;
        second.box.h = rng.uniform(spec.size_min, spec.size_max) * L;
        for (int attempt = 0; attempt < 1000; ++attempt) {
          const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
          second.box.cx = first.box.cx + d * std::cos(theta);
          second.box.cy = first.box.cy + d * std::sin(theta);
          const auto c = second.box.corners();
          if (c.x0 >= 0 && c.y0 >= 0 && c.x1 <= W && c.y1 <= H) break;
          if (attempt % 10 == 9) {
            first.box.cx = rng.uniform(first.box.w / 2, W - first.box.w / 2);
            first.box.cy = rng.uniform(first.box.h / 2, H - first.box.h / 2);
          }
        }
      } else {
        scene.objects.push_back(first);
        second.box = random_box(scene.objects);
        scene.objects.pop_back();
      }
      scene.objects.push_back(first);
      scene.objects.push_back(second);
    }
    if (n % 2 == 1) {
      const int c = static_cast<int>(detail::sample_index(single_cdf, rng));
      scene.objects.push_back({c, random_box(scene.objects)});
    }
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

}  // namespace ctxattack
