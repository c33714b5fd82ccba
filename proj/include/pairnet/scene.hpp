#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pairnet {

struct BinaryMask {
  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  std::size_t count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct Segment {
  int id = 0;
  int object_class = 0;  // 1-based
  bool is_thing = true;

  friend bool operator==(const Segment&, const Segment&) = default;
};

// Per-pixel segment-id map (0 = unlabeled) with per-segment class metadata.
struct PanopticScene {
  std::string image_id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> segment_map;  // row-major, height * width
  std::vector<Segment> segments; // segments[i].id == i + 1

  const Segment& segment(int id) const;
  bool has_segment(int id) const {
    return id >= 1 && static_cast<std::size_t>(id) <= segments.size();
  }

  friend bool operator==(const PanopticScene&, const PanopticScene&) = default;
};

struct Triplet {
  int subject = 0;   // segment id
  int relation = 0;  // 1-based relation class
  int object = 0;    // segment id

  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct SceneGraph {
  std::vector<Triplet> triplets;
  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

struct Dataset {
  std::vector<std::string> object_classes;    // x names, class c at c - 1
  std::vector<bool> thing_flags;              // per object class
  std::vector<std::string> relation_classes;  // y names, class r at r - 1
  std::vector<PanopticScene> scenes;
  std::vector<SceneGraph> graphs;             // parallel to scenes

  std::size_t num_object_classes() const { return object_classes.size(); }
  std::size_t num_relation_classes() const { return relation_classes.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// mask[p] = 1 iff segment_map[p] == id. Throws on unknown id.
BinaryMask mask_of(const PanopticScene& scene, int id);

// Returns an empty string when the scene and graph satisfy every invariant,
// otherwise the first violation.
std::string validate_scene(const PanopticScene& scene, const SceneGraph& graph,
                           std::size_t num_object_classes,
                           std::size_t num_relation_classes);

enum class FrequencyGroup { kHead, kBody, kTail };

const char* group_name(FrequencyGroup g);

struct GroupThresholds {
  std::int64_t head_above = 10000;  // head: count > head_above
  std::int64_t tail_below = 500;    // tail: count < tail_below
};

// Body is the closed interval [tail_below, head_above].
std::vector<FrequencyGroup> split_head_body_tail(
    const std::vector<std::int64_t>& counts, const GroupThresholds& thresholds = {});

struct RelationVocabulary {
  std::vector<std::string> names;
  std::vector<std::int64_t> train_counts;
  std::vector<FrequencyGroup> groups;
  GroupThresholds thresholds;
};

// Counts relation occurrences in `train` and groups them.
RelationVocabulary relation_vocabulary(const Dataset& train,
                                       const GroupThresholds& thresholds = {});

}  // namespace pairnet
