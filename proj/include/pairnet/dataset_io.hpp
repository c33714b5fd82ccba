#pragma once

#include <string>
#include <vector>

#include "pairnet/scene.hpp"

namespace pairnet {

struct RejectedImage {
  std::string image_id;
  std::string reason;
};

struct LoadResult {
  Dataset dataset;                     // only images that passed validation
  std::vector<RejectedImage> rejected;
};

// Annotation JSON:
//   {"object_classes": [...], "thing_flags": [...], "relation_classes": [...],
//    "images": [{"image_id", "height", "width", "segment_map": [...],
//                "segments": [{"id", "class"}], "relations": [[s, r, o]]}]}
// Class indices are 1-based. Structural errors in the top level throw
// std::runtime_error; per-image violations reject only that image.
LoadResult parse_dataset(const std::string& json_text);
LoadResult load_dataset(const std::string& path);

std::string dataset_to_json(const Dataset& dataset);
void save_dataset(const std::string& path, const Dataset& dataset);

}  // namespace pairnet
