#include "pairnet/scene.hpp"

#include <numeric>
#include <set>
#include <stdexcept>

namespace pairnet {

std::size_t BinaryMask::count() const {
  return std::accumulate(bits.begin(), bits.end(), std::size_t{0});
}

const Segment& PanopticScene::segment(int id) const {
  if (!has_segment(id)) {
    throw std::out_of_range("image " + image_id + " has no segment " +
                            std::to_string(id));
  }
  return segments[static_cast<std::size_t>(id) - 1];
}

BinaryMask mask_of(const PanopticScene& scene, int id) {
  if (!scene.has_segment(id)) {
    throw std::invalid_argument("image " + scene.image_id + " has no segment " +
                                std::to_string(id));
  }
  BinaryMask m(scene.height, scene.width);
  for (std::size_t p = 0; p < scene.segment_map.size(); ++p) {
    m.bits[p] = scene.segment_map[p] == id ? 1 : 0;
  }
  return m;
}

std::string validate_scene(const PanopticScene& scene, const SceneGraph& graph,
                           std::size_t num_object_classes,
                           std::size_t num_relation_classes) {
  if (scene.height == 0 || scene.width == 0) return "empty image extents";
  if (scene.segment_map.size() != scene.height * scene.width) {
    return "segment map has " + std::to_string(scene.segment_map.size()) +
           " entries, expected " + std::to_string(scene.height * scene.width);
  }
  for (std::size_t i = 0; i < scene.segments.size(); ++i) {
    const auto& s = scene.segments[i];
    if (s.id != static_cast<int>(i) + 1) {
      return "segment ids must be contiguous from 1; found id " +
             std::to_string(s.id) + " at position " + std::to_string(i);
    }
    if (s.object_class < 1 ||
        static_cast<std::size_t>(s.object_class) > num_object_classes) {
      return "segment " + std::to_string(s.id) + " has class " +
             std::to_string(s.object_class) + " outside 1.." +
             std::to_string(num_object_classes);
    }
  }
  std::vector<std::size_t> area(scene.segments.size() + 1, 0);
  for (int id : scene.segment_map) {
    if (id < 0 || static_cast<std::size_t>(id) > scene.segments.size()) {
      return "segment map references unknown segment " + std::to_string(id);
    }
    ++area[static_cast<std::size_t>(id)];
  }
  for (std::size_t id = 1; id < area.size(); ++id) {
    if (area[id] == 0) return "segment " + std::to_string(id) + " covers no pixel";
  }
  std::set<Triplet> seen;
  for (const auto& t : graph.triplets) {
    const std::string desc = "triplet (" + std::to_string(t.subject) + ", " +
                             std::to_string(t.relation) + ", " +
                             std::to_string(t.object) + ")";
    if (!scene.has_segment(t.subject) || !scene.has_segment(t.object)) {
      return desc + " references a missing segment";
    }
    if (t.subject == t.object) return desc + " relates a segment to itself";
    if (t.relation < 1 ||
        static_cast<std::size_t>(t.relation) > num_relation_classes) {
      return desc + " has relation outside 1.." +
             std::to_string(num_relation_classes);
    }
    if (!seen.insert(t).second) return desc + " is duplicated";
  }
  return {};
}

const char* group_name(FrequencyGroup g) {
  switch (g) {
    case FrequencyGroup::kHead: return "head";
    case FrequencyGroup::kBody: return "body";
    case FrequencyGroup::kTail: return "tail";
  }
  return "?";
}

std::vector<FrequencyGroup> split_head_body_tail(
    const std::vector<std::int64_t>& counts, const GroupThresholds& thresholds) {
  std::vector<FrequencyGroup> out;
  out.reserve(counts.size());
  for (auto c : counts) {
    if (c > thresholds.head_above) {
      out.push_back(FrequencyGroup::kHead);
    } else if (c < thresholds.tail_below) {
      out.push_back(FrequencyGroup::kTail);
    } else {
      out.push_back(FrequencyGroup::kBody);
    }
  }
  return out;
}

RelationVocabulary relation_vocabulary(const Dataset& train,
                                       const GroupThresholds& thresholds) {
  RelationVocabulary v;
  v.names = train.relation_classes;
  v.thresholds = thresholds;
  v.train_counts.assign(v.names.size(), 0);
  for (const auto& g : train.graphs) {
    for (const auto& t : g.triplets) {
      ++v.train_counts.at(static_cast<std::size_t>(t.relation) - 1);
    }
  }
  v.groups = split_head_body_tail(v.train_counts, thresholds);
  return v;
}

}  // namespace pairnet
