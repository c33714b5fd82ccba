#include "pairnet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace pairnet {

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("mask_iou: extents " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " and " + std::to_string(b.height) +
                                "x" + std::to_string(b.width) + " differ");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < a.bits.size(); ++p) {
    inter += a.bits[p] & b.bits[p];
    uni += a.bits[p] | b.bits[p];
  }
  if (uni == 0) throw std::invalid_argument("mask_iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// eligible[p][g]: prediction p (rank order) may claim ground-truth triplet g.
std::vector<std::vector<bool>> eligibility(const ImagePrediction& prediction,
                                           const PanopticScene& scene, const SceneGraph& graph,
                                           std::size_t k, const MatchOptions& options) {
  const std::size_t n_pred = std::min(k, prediction.triplets.size());
  const std::size_t n_gt = graph.triplets.size();
  std::vector<BinaryMask> gt_masks;
  for (const auto& s : scene.segments) gt_masks.push_back(mask_of(scene, s.id));

  // IoU between prediction masks and ground-truth segments, filled on demand.
  std::vector<std::vector<double>> iou(prediction.masks.size());
  auto iou_of = [&](std::size_t m, int segment) {
    if (m >= prediction.masks.size()) {
      throw std::invalid_argument("prediction references mask " + std::to_string(m) + " of " +
                                  std::to_string(prediction.masks.size()));
    }
    auto& row = iou[m];
    if (row.empty()) {
      row.resize(gt_masks.size());
      for (std::size_t s = 0; s < gt_masks.size(); ++s) row[s] = mask_iou(prediction.masks[m], gt_masks[s]);
    }
    return row[static_cast<std::size_t>(segment) - 1];
  };

  std::vector<std::vector<bool>> eligible(n_pred, std::vector<bool>(n_gt, false));
  for (std::size_t p = 0; p < n_pred; ++p) {
    const auto& t = prediction.triplets[p];
    for (std::size_t g = 0; g < n_gt; ++g) {
      const auto& gt = graph.triplets[g];
      if (t.subject_class != scene.segment(gt.subject).object_class) continue;
      if (t.object_class != scene.segment(gt.object).object_class) continue;
      if (options.require_relation && t.relation_class != gt.relation) continue;
      if (iou_of(t.subject_mask, gt.subject) < options.iou_threshold) continue;
      if (iou_of(t.object_mask, gt.object) < options.iou_threshold) continue;
      eligible[p][g] = true;
    }
  }
  return eligible;
}

bool augment(std::size_t p, const std::vector<std::vector<bool>>& eligible,
             std::vector<int>& owner, std::vector<bool>& visited) {
  for (std::size_t g = 0; g < owner.size(); ++g) {
    if (!eligible[p][g] || visited[g]) continue;
    visited[g] = true;
    if (owner[g] < 0 || augment(static_cast<std::size_t>(owner[g]), eligible, owner, visited)) {
      owner[g] = static_cast<int>(p);
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<bool> match_image(const ImagePrediction& prediction, const PanopticScene& scene,
                              const SceneGraph& graph, std::size_t k,
                              const MatchOptions& options) {
  const auto eligible = eligibility(prediction, scene, graph, k, options);
  const std::size_t n_gt = graph.triplets.size();
  std::vector<bool> hit(n_gt, false);
  if (options.mode == ClaimMode::kGreedy) {
    for (const auto& row : eligible) {
      for (std::size_t g = 0; g < n_gt; ++g) {
        if (row[g] && !hit[g]) {
          hit[g] = true;
          break;
        }
      }
    }
    return hit;
  }
  std::vector<int> owner(n_gt, -1);
  for (std::size_t p = 0; p < eligible.size(); ++p) {
    std::vector<bool> visited(n_gt, false);
    augment(p, eligible, owner, visited);
  }
  for (std::size_t g = 0; g < n_gt; ++g) hit[g] = owner[g] >= 0;
  return hit;
}

std::optional<double> image_recall(const ImagePrediction& prediction, const PanopticScene& scene,
                                   const SceneGraph& graph, std::size_t k,
                                   const MatchOptions& options) {
  if (graph.triplets.empty()) return std::nullopt;
  const auto hit = match_image(prediction, scene, graph, k, options);
  return static_cast<double>(std::count(hit.begin(), hit.end(), true)) /
         static_cast<double>(hit.size());
}

std::string category_name(PairCategory c) {
  static const char* names[] = {"TT", "TS", "ST", "SS"};
  return names[static_cast<int>(c)];
}

PairCategory triplet_category(const PanopticScene& scene, const Triplet& t) {
  const bool s = scene.segment(t.subject).is_thing, o = scene.segment(t.object).is_thing;
  if (s) return o ? PairCategory::kThingThing : PairCategory::kThingStuff;
  return o ? PairCategory::kStuffThing : PairCategory::kStuffStuff;
}

void DetectorTally::add(const PanopticScene& scene, const SceneGraph& graph,
                        const ObjectQuerySet& queries, const QueryAssignment& assignment,
                        double threshold) {
  for (const auto& t : graph.triplets) {
    const double si = mask_iou(queries.binary_mask(assignment.query(t.subject)), mask_of(scene, t.subject));
    const double oi = mask_iou(queries.binary_mask(assignment.query(t.object)), mask_of(scene, t.object));
    subject_iou_sum += si;
    object_iou_sum += oi;
    subject_hits += si >= threshold ? 1 : 0;
    object_hits += oi >= threshold ? 1 : 0;
    ++triplets;
  }
}

PanopticScene panoptic_prediction(const ObjectQuerySet& queries) {
  const std::size_t n = queries.num_queries();
  const std::size_t h = queries.soft_masks.dim(1), w = queries.soft_masks.dim(2);
  PanopticScene pred;
  pred.image_id = queries.image_id;
  pred.height = h;
  pred.width = w;
  pred.segment_map.assign(h * w, 0);
  std::vector<bool> active(n);
  for (std::size_t q = 0; q < n; ++q) {
    active[q] = queries.predicted_class_index(q) != queries.no_object_index();
    pred.segments.push_back({static_cast<int>(q) + 1,
                             static_cast<int>(queries.predicted_class_index(q)) + 1, true});
  }
  const double* m = queries.soft_masks.data();
  for (std::size_t p = 0; p < h * w; ++p) {
    double best = 0.5;
    for (std::size_t q = 0; q < n; ++q) {
      if (!active[q]) continue;
      const double v = m[q * h * w + p];
      if (v >= best && (pred.segment_map[p] == 0 || v > best)) {
        best = v;
        pred.segment_map[p] = static_cast<int>(q) + 1;
      }
    }
  }
  return pred;
}

void PqTally::add(const PanopticScene& prediction, const PanopticScene& gt) {
  if (prediction.height != gt.height || prediction.width != gt.width) {
    throw std::invalid_argument("panoptic prediction extents differ from image " + gt.image_id);
  }
  const std::size_t np = prediction.segments.size(), ng = gt.segments.size();
  std::vector<std::size_t> pred_area(np + 1, 0), gt_area(ng + 1, 0);
  std::map<std::pair<int, int>, std::size_t> inter;
  for (std::size_t p = 0; p < gt.segment_map.size(); ++p) {
    const int a = prediction.segment_map[p], b = gt.segment_map[p];
    ++pred_area[static_cast<std::size_t>(a)];
    ++gt_area[static_cast<std::size_t>(b)];
    if (a != 0 && b != 0) ++inter[{a, b}];
  }
  std::vector<bool> pred_matched(np + 1, false), gt_matched(ng + 1, false);
  for (const auto& [ids, count] : inter) {
    const auto [a, b] = ids;
    const int cls = gt.segment(b).object_class;
    if (prediction.segment(a).object_class != cls) continue;
    const double iou = static_cast<double>(count) /
                       static_cast<double>(pred_area[static_cast<std::size_t>(a)] +
                                           gt_area[static_cast<std::size_t>(b)] - count);
    if (iou > 0.5) {
      pred_matched[static_cast<std::size_t>(a)] = gt_matched[static_cast<std::size_t>(b)] = true;
      auto& c = classes[cls];
      ++c.tp;
      c.iou_sum += iou;
    }
  }
  for (const auto& s : gt.segments) {
    if (!gt_matched[static_cast<std::size_t>(s.id)]) ++classes[s.object_class].fn;
  }
  for (const auto& s : prediction.segments) {
    const auto id = static_cast<std::size_t>(s.id);
    if (pred_area[id] > 0 && !pred_matched[id]) ++classes[s.object_class].fp;
  }
}

double PqTally::value() const {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& [cls, c] : classes) {
    const double denom = static_cast<double>(c.tp) + 0.5 * static_cast<double>(c.fp + c.fn);
    if (denom == 0.0) continue;
    total += c.iou_sum / denom;
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

double panoptic_quality(const PanopticScene& prediction, const PanopticScene& gt) {
  PqTally t;
  t.add(prediction, gt);
  return t.value();
}

namespace {

struct Mean {
  double sum = 0.0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  std::optional<double> value() const {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
};

}  // namespace

MetricsReport evaluate_predictions(std::span<const EvaluationImage> images,
                                   const EvaluationOptions& options) {
  if (options.ks.empty() || !std::is_sorted(options.ks.begin(), options.ks.end()) ||
      options.ks.front() == 0) {
    throw std::invalid_argument("K values must be positive and ascending");
  }
  if (!(options.iou_threshold > 0.0 && options.iou_threshold <= 1.0)) {
    throw std::invalid_argument("IoU threshold must lie in (0, 1]");
  }
  MetricsReport report;
  report.images = images.size();
  report.ks = options.ks;
  const std::size_t y = options.relation_classes;

  DetectorTally detector;
  PqTally pq;
  bool any_pq = false;
  for (const auto& im : images) {
    if (im.queries) {
      pq.add(panoptic_prediction(*im.queries), *im.scene);
      any_pq = true;
      if (im.assignment) detector.add(*im.scene, *im.graph, *im.queries, *im.assignment, options.iou_threshold);
    }
  }

  for (std::size_t k : options.ks) {
    Mean recall, pair, optimal, optimal_pair;
    std::vector<Mean> per_class(y);
    std::array<Mean, 4> per_category;
    for (const auto& im : images) {
      const auto& triplets = im.graph->triplets;
      if (triplets.empty()) continue;
      MatchOptions m;
      m.iou_threshold = options.iou_threshold;
      const auto hit = match_image(*im.prediction, *im.scene, *im.graph, k, m);
      m.require_relation = false;
      const auto pair_hit = match_image(*im.prediction, *im.scene, *im.graph, k, m);

      const auto fraction = [](const std::vector<bool>& h) {
        return static_cast<double>(std::count(h.begin(), h.end(), true)) /
               static_cast<double>(h.size());
      };
      recall.add(fraction(hit));
      pair.add(fraction(pair_hit));
      if (options.include_optimal) {
        m.mode = ClaimMode::kOptimal;
        optimal_pair.add(fraction(match_image(*im.prediction, *im.scene, *im.graph, k, m)));
        m.require_relation = true;
        optimal.add(fraction(match_image(*im.prediction, *im.scene, *im.graph, k, m)));
      }

      std::vector<std::size_t> class_hits(y, 0), class_total(y, 0);
      std::array<std::size_t, 4> cat_hits{}, cat_total{};
      for (std::size_t g = 0; g < triplets.size(); ++g) {
        const auto r = static_cast<std::size_t>(triplets[g].relation) - 1;
        if (r < y) {
          ++class_total[r];
          class_hits[r] += hit[g] ? 1 : 0;
        }
        const auto c = static_cast<std::size_t>(triplet_category(*im.scene, triplets[g]));
        ++cat_total[c];
        cat_hits[c] += hit[g] ? 1 : 0;
      }
      for (std::size_t r = 0; r < y; ++r) {
        if (class_total[r] > 0) {
          per_class[r].add(static_cast<double>(class_hits[r]) / static_cast<double>(class_total[r]));
        }
      }
      for (std::size_t c = 0; c < 4; ++c) {
        if (cat_total[c] > 0) {
          per_category[c].add(static_cast<double>(cat_hits[c]) / static_cast<double>(cat_total[c]));
        }
      }
    }
    report.recall[k] = recall.value().value_or(0.0);
    report.pair_recall[k] = pair.value().value_or(0.0);
    if (options.include_optimal) {
      report.optimal_recall[k] = optimal.value().value_or(0.0);
      report.optimal_pair_recall[k] = optimal_pair.value().value_or(0.0);
    }
    auto& cls = report.class_recall[k];
    Mean mr;
    for (const auto& m : per_class) {
      cls.push_back(m.value());
      if (m.value()) mr.add(*m.value());
    }
    report.mean_recall[k] = mr.value().value_or(0.0);
    auto& cat = report.category_recall[k];
    for (std::size_t c = 0; c < 4; ++c) cat[c] = per_category[c].value();
  }

  if (detector.triplets > 0) {
    const double n = static_cast<double>(detector.triplets);
    report.subject_iou = detector.subject_iou_sum / n;
    report.object_iou = detector.object_iou_sum / n;
    report.subject_recall50 = static_cast<double>(detector.subject_hits) / n;
    report.object_recall50 = static_cast<double>(detector.object_hits) / n;
  }
  if (any_pq) report.pq = pq.value();
  return report;
}

namespace {

using nlohmann::json;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json by_k(const std::map<std::size_t, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<std::size_t, double> by_k_from(const json& j) {
  std::map<std::size_t, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoul(k)] = v.get<double>();
  return m;
}

}  // namespace

json report_to_json(const MetricsReport& r) {
  json j;
  j["images"] = r.images;
  j["ks"] = r.ks;
  j["recall"] = by_k(r.recall);
  j["mean_recall"] = by_k(r.mean_recall);
  j["pair_recall"] = by_k(r.pair_recall);
  if (!r.optimal_recall.empty()) {
    j["optimal_recall"] = by_k(r.optimal_recall);
    j["optimal_pair_recall"] = by_k(r.optimal_pair_recall);
  }
  json cls = json::object(), cat = json::object();
  for (const auto& [k, v] : r.class_recall) {
    json arr = json::array();
    for (const auto& x : v) arr.push_back(optional_json(x));
    cls[std::to_string(k)] = arr;
  }
  for (const auto& [k, v] : r.category_recall) {
    json o = json::object();
    for (std::size_t c = 0; c < 4; ++c) {
      o[category_name(static_cast<PairCategory>(c))] = optional_json(v[c]);
    }
    cat[std::to_string(k)] = o;
  }
  j["class_recall"] = cls;
  j["category_recall"] = cat;
  j["subject_iou"] = optional_json(r.subject_iou);
  j["object_iou"] = optional_json(r.object_iou);
  j["subject_recall50"] = optional_json(r.subject_recall50);
  j["object_recall50"] = optional_json(r.object_recall50);
  j["pq"] = optional_json(r.pq);
  return j;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.images = j.at("images").get<std::size_t>();
  r.ks = j.at("ks").get<std::vector<std::size_t>>();
  r.recall = by_k_from(j.at("recall"));
  r.mean_recall = by_k_from(j.at("mean_recall"));
  r.pair_recall = by_k_from(j.at("pair_recall"));
  if (j.contains("optimal_recall")) {
    r.optimal_recall = by_k_from(j.at("optimal_recall"));
    r.optimal_pair_recall = by_k_from(j.at("optimal_pair_recall"));
  }
  for (const auto& [k, arr] : j.at("class_recall").items()) {
    auto& v = r.class_recall[std::stoul(k)];
    for (const auto& x : arr) v.push_back(optional_from(x));
  }
  for (const auto& [k, o] : j.at("category_recall").items()) {
    auto& v = r.category_recall[std::stoul(k)];
    for (std::size_t c = 0; c < 4; ++c) {
      v[c] = optional_from(o.at(category_name(static_cast<PairCategory>(c))));
    }
  }
  r.subject_iou = optional_from(j.at("subject_iou"));
  r.object_iou = optional_from(j.at("object_iou"));
  r.subject_recall50 = optional_from(j.at("subject_recall50"));
  r.object_recall50 = optional_from(j.at("object_recall50"));
  r.pq = optional_from(j.at("pq"));
  return r;
}

std::string report_table(const MetricsReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s", "metric");
  out << line;
  for (auto k : r.ks) {
    std::snprintf(line, sizeof line, "  %8s", ("@" + std::to_string(k)).c_str());
    out << line;
  }
  out << '\n';
  auto row = [&](const std::string& name, auto&& value_at) {
    std::snprintf(line, sizeof line, "%-10s", name.c_str());
    out << line;
    for (auto k : r.ks) {
      const std::optional<double> v = value_at(k);
      if (v) {
        std::snprintf(line, sizeof line, "  %8.4f", *v);
      } else {
        std::snprintf(line, sizeof line, "  %8s", "-");
      }
      out << line;
    }
    out << '\n';
  };
  row("R", [&](std::size_t k) { return std::optional<double>(r.recall.at(k)); });
  row("mR", [&](std::size_t k) { return std::optional<double>(r.mean_recall.at(k)); });
  row("pair-R", [&](std::size_t k) { return std::optional<double>(r.pair_recall.at(k)); });
  if (!r.optimal_recall.empty()) {
    row("R(opt)", [&](std::size_t k) { return std::optional<double>(r.optimal_recall.at(k)); });
  }
  for (std::size_t c = 0; c < 4; ++c) {
    row(category_name(static_cast<PairCategory>(c)) + "-R",
        [&](std::size_t k) { return r.category_recall.at(k)[c]; });
  }
  auto scalar = [&](const char* name, const std::optional<double>& v) {
    if (!v) return;
    std::snprintf(line, sizeof line, "%-18s %.4f\n", name, *v);
    out << line;
  };
  scalar("subject IoU", r.subject_iou);
  scalar("object IoU", r.object_iou);
  scalar("subject Recall0.5", r.subject_recall50);
  scalar("object Recall0.5", r.object_recall50);
  scalar("PQ", r.pq);
  out << "images " << r.images << '\n';
  return out.str();
}

}  // namespace pairnet
