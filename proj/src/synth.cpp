#include "pairnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace pairnet {

void SynthConfig::validate() const {
  if (object_classes < 2) throw std::invalid_argument("need at least 2 object classes");
  if (relation_classes < 2) throw std::invalid_argument("need at least 2 relation classes");
  if (stuff_classes >= object_classes) {
    throw std::invalid_argument("at least one object class must be a thing");
  }
  if (!(mean_relations > 0.0)) throw std::invalid_argument("mean relation count must be > 0");
  if (height == 0 || width == 0) throw std::invalid_argument("empty image extents");
  if (min_segments < 2 || min_segments > max_segments) {
    throw std::invalid_argument("segment range must satisfy 2 <= min <= max");
  }
  if (max_segments > height * width) {
    throw std::invalid_argument("infeasible config: " + std::to_string(max_segments) +
                                " segments exceed " + std::to_string(height * width) +
                                " pixels");
  }
  if (max_relations == 0) throw std::invalid_argument("max_relations must be positive");
  if (skew < 0.0) throw std::invalid_argument("skew must be non-negative");
  if (affinity_density <= 0.0 || affinity_density > 1.0 || affinity_floor < 0.0) {
    throw std::invalid_argument("invalid affinity parameters");
  }
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("synth config must be a JSON object");
  SynthConfig c;
  const auto fields = synth_config_to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!fields.contains(key)) throw std::invalid_argument("unknown synth config field " + key);
  }
  auto read = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::remove_reference_t<decltype(out)>>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument(std::string("synth config field ") + key + " has the wrong type");
    }
  };
  read("train_scenes", c.train_scenes);
  read("val_scenes", c.val_scenes);
  read("height", c.height);
  read("width", c.width);
  read("object_classes", c.object_classes);
  read("stuff_classes", c.stuff_classes);
  read("relation_classes", c.relation_classes);
  read("min_segments", c.min_segments);
  read("max_segments", c.max_segments);
  read("mean_relations", c.mean_relations);
  read("max_relations", c.max_relations);
  read("skew", c.skew);
  read("affinity_density", c.affinity_density);
  read("affinity_floor", c.affinity_floor);
  read("seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
  return {{"train_scenes", c.train_scenes},
          {"val_scenes", c.val_scenes},
          {"height", c.height},
          {"width", c.width},
          {"object_classes", c.object_classes},
          {"stuff_classes", c.stuff_classes},
          {"relation_classes", c.relation_classes},
          {"min_segments", c.min_segments},
          {"max_segments", c.max_segments},
          {"mean_relations", c.mean_relations},
          {"max_relations", c.max_relations},
          {"skew", c.skew},
          {"affinity_density", c.affinity_density},
          {"affinity_floor", c.affinity_floor},
          {"seed", c.seed}};
}

AffinityTable make_affinity_table(const SynthConfig& config) {
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t x = config.object_classes;
  AffinityTable table;
  table.object_classes = x;
  std::bernoulli_distribution preferred(config.affinity_density);
  std::uniform_int_distribution<std::size_t> any_pair(0, x * x - 1);
  for (std::size_t r = 0; r < config.relation_classes; ++r) {
    std::vector<double> w(x * x, config.affinity_floor);
    bool any = false;
    for (auto& v : w) {
      if (preferred(rng)) {
        v = 1.0;
        any = true;
      }
    }
    if (!any) w[any_pair(rng)] = 1.0;
    table.weight.push_back(std::move(w));
  }
  return table;
}

namespace {

struct Rect {
  std::size_t y, x, h, w;
  std::size_t area() const { return h * w; }
};

std::vector<Rect> guillotine_tiling(std::size_t height, std::size_t width,
                                    std::size_t pieces, Rng& rng) {
  std::vector<Rect> rects{{0, 0, height, width}};
  while (rects.size() < pieces) {
    std::vector<double> weights;
    for (const auto& r : rects) weights.push_back(r.area() >= 2 ? double(r.area()) : 0.0);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const std::size_t i = pick(rng);
    Rect r = rects[i];
    bool vertical_cut;  // splits the width
    if (r.w >= 2 && r.h >= 2) {
      vertical_cut = r.w > r.h || (r.w == r.h && std::bernoulli_distribution(0.5)(rng));
    } else {
      vertical_cut = r.w >= 2;
    }
    if (vertical_cut) {
      std::uniform_int_distribution<std::size_t> cut(1, r.w - 1);
      const std::size_t c = cut(rng);
      rects[i] = {r.y, r.x, r.h, c};
      rects.push_back({r.y, r.x + c, r.h, r.w - c});
    } else {
      std::uniform_int_distribution<std::size_t> cut(1, r.h - 1);
      const std::size_t c = cut(rng);
      rects[i] = {r.y, r.x, c, r.w};
      rects.push_back({r.y + c, r.x, r.h - c, r.w});
    }
  }
  return rects;
}

}  // namespace

Dataset synthesize(const SynthConfig& config) {
  config.validate();
  const std::size_t x = config.object_classes;
  const std::size_t things = x - config.stuff_classes;
  Dataset ds;
  for (std::size_t c = 1; c <= x; ++c) {
    const bool thing = c <= things;
    ds.object_classes.push_back((thing ? "thing_" : "stuff_") + std::to_string(c));
    ds.thing_flags.push_back(thing);
  }
  for (std::size_t r = 1; r <= config.relation_classes; ++r) {
    ds.relation_classes.push_back("relation_" + std::to_string(r));
  }

  const AffinityTable affinity = make_affinity_table(config);
  std::vector<double> rel_weights;
  for (std::size_t r = 1; r <= config.relation_classes; ++r) {
    rel_weights.push_back(std::pow(static_cast<double>(r), -config.skew));
  }
  std::discrete_distribution<int> draw_relation(rel_weights.begin(), rel_weights.end());

  Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> segment_count(config.min_segments,
                                                           config.max_segments);
  std::uniform_int_distribution<std::size_t> thing_class(1, things);
  std::poisson_distribution<int> extra_relations(config.mean_relations - 1.0 > 0.0
                                                     ? config.mean_relations - 1.0
                                                     : 1e-9);

  const std::size_t total = config.train_scenes + config.val_scenes;
  for (std::size_t s = 0; s < total; ++s) {
    PanopticScene scene;
    scene.image_id = "synth_" + std::to_string(s);
    scene.height = config.height;
    scene.width = config.width;
    scene.segment_map.assign(config.height * config.width, 0);

    const std::size_t n = segment_count(rng);
    auto rects = guillotine_tiling(config.height, config.width, n, rng);
    // Largest tiles become stuff, one segment per stuff class.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rects[a].area() > rects[b].area();
    });
    std::size_t stuff_here = 0;
    if (config.stuff_classes > 0) {
      std::uniform_int_distribution<std::size_t> k(0, std::min(config.stuff_classes, n - 1));
      stuff_here = k(rng);
    }
    std::vector<std::size_t> stuff_ids(config.stuff_classes);
    for (std::size_t i = 0; i < stuff_ids.size(); ++i) stuff_ids[i] = things + 1 + i;
    std::shuffle(stuff_ids.begin(), stuff_ids.end(), rng);

    std::vector<int> rect_class(n);
    for (std::size_t rank = 0; rank < n; ++rank) {
      rect_class[order[rank]] = static_cast<int>(
          rank < stuff_here ? stuff_ids[rank] : thing_class(rng));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int id = static_cast<int>(i) + 1;
      const auto& r = rects[i];
      for (std::size_t yy = r.y; yy < r.y + r.h; ++yy) {
        for (std::size_t xx = r.x; xx < r.x + r.w; ++xx) {
          scene.segment_map[yy * config.width + xx] = id;
        }
      }
      const auto c = static_cast<std::size_t>(rect_class[i]);
      scene.segments.push_back({id, rect_class[i], ds.thing_flags[c - 1]});
    }

    SceneGraph graph;
    std::set<Triplet> used;
    const std::size_t wanted =
        std::min<std::size_t>(config.max_relations,
                              1 + static_cast<std::size_t>(extra_relations(rng)));
    std::size_t attempts = 0;
    while (graph.triplets.size() < wanted && attempts < 50 * wanted) {
      ++attempts;
      const int r = draw_relation(rng) + 1;
      const auto& w = affinity.weight[static_cast<std::size_t>(r) - 1];
      std::vector<std::pair<int, int>> pairs;
      std::vector<double> pw;
      for (const auto& a : scene.segments) {
        for (const auto& b : scene.segments) {
          if (a.id == b.id || used.count({a.id, r, b.id})) continue;
          pairs.emplace_back(a.id, b.id);
          pw.push_back(w[static_cast<std::size_t>(a.object_class - 1) * x +
                         static_cast<std::size_t>(b.object_class - 1)]);
        }
      }
      if (pairs.empty()) continue;
      std::discrete_distribution<std::size_t> pick(pw.begin(), pw.end());
      const auto [sub, obj] = pairs[pick(rng)];
      Triplet t{sub, r, obj};
      used.insert(t);
      graph.triplets.push_back(t);
    }
    ds.scenes.push_back(std::move(scene));
    ds.graphs.push_back(std::move(graph));
  }
  return ds;
}

DatasetSplit split_dataset(const Dataset& all, std::size_t val_count) {
  if (val_count > all.scenes.size()) {
    throw std::invalid_argument("validation split larger than the dataset");
  }
  DatasetSplit out;
  for (Dataset* d : {&out.train, &out.val}) {
    d->object_classes = all.object_classes;
    d->thing_flags = all.thing_flags;
    d->relation_classes = all.relation_classes;
  }
  const std::size_t cut = all.scenes.size() - val_count;
  for (std::size_t i = 0; i < all.scenes.size(); ++i) {
    Dataset& d = i < cut ? out.train : out.val;
    d.scenes.push_back(all.scenes[i]);
    d.graphs.push_back(all.graphs[i]);
  }
  return out;
}

}  // namespace pairnet
