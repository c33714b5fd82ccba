#include "pairnet/dataset_io.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"

namespace pairnet {

using nlohmann::json;

namespace {

PanopticScene parse_scene(const json& img, const Dataset& ds, SceneGraph& graph) {
  PanopticScene scene;
  scene.image_id = img.at("image_id").get<std::string>();
  scene.height = img.at("height").get<std::size_t>();
  scene.width = img.at("width").get<std::size_t>();
  scene.segment_map = img.at("segment_map").get<std::vector<int>>();
  for (const auto& s : img.at("segments")) {
    Segment seg;
    seg.id = s.at("id").get<int>();
    seg.object_class = s.at("class").get<int>();
    const auto c = static_cast<std::size_t>(seg.object_class);
    seg.is_thing = c >= 1 && c <= ds.thing_flags.size() ? ds.thing_flags[c - 1]
                                                        : true;
    scene.segments.push_back(seg);
  }
  for (const auto& r : img.at("relations")) {
    if (!r.is_array() || r.size() != 3) {
      throw std::runtime_error("relation entries must be [subject, relation, object]");
    }
    graph.triplets.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>()});
  }
  return scene;
}

}  // namespace

LoadResult parse_dataset(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("malformed annotation JSON: ") + e.what());
  }
  LoadResult out;
  auto& ds = out.dataset;
  try {
    ds.object_classes = root.at("object_classes").get<std::vector<std::string>>();
    ds.thing_flags = root.at("thing_flags").get<std::vector<bool>>();
    ds.relation_classes = root.at("relation_classes").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed annotation header: ") + e.what());
  }
  if (ds.thing_flags.size() != ds.object_classes.size()) {
    throw std::runtime_error("thing_flags has " + std::to_string(ds.thing_flags.size()) +
                             " entries for " + std::to_string(ds.object_classes.size()) +
                             " object classes");
  }
  if (!root.contains("images") || !root["images"].is_array()) {
    throw std::runtime_error("annotation file lacks an images array");
  }
  std::size_t index = 0;
  for (const auto& img : root["images"]) {
    std::string id = "#" + std::to_string(index++);
    if (img.is_object() && img.contains("image_id") && img["image_id"].is_string()) {
      id = img["image_id"].get<std::string>();
    }
    SceneGraph graph;
    PanopticScene scene;
    try {
      scene = parse_scene(img, ds, graph);
    } catch (const std::exception& e) {
      out.rejected.push_back({id, e.what()});
      continue;
    }
    auto reason = validate_scene(scene, graph, ds.num_object_classes(),
                                 ds.num_relation_classes());
    if (!reason.empty()) {
      out.rejected.push_back({id, std::move(reason)});
      continue;
    }
    ds.scenes.push_back(std::move(scene));
    ds.graphs.push_back(std::move(graph));
  }
  return out;
}

LoadResult load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dataset(text);
}

std::string dataset_to_json(const Dataset& ds) {
  json root;
  root["object_classes"] = ds.object_classes;
  root["thing_flags"] = ds.thing_flags;
  root["relation_classes"] = ds.relation_classes;
  json images = json::array();
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const auto& s = ds.scenes[i];
    json img;
    img["image_id"] = s.image_id;
    img["height"] = s.height;
    img["width"] = s.width;
    img["segment_map"] = s.segment_map;
    json segs = json::array();
    for (const auto& seg : s.segments) {
      segs.push_back({{"id", seg.id}, {"class", seg.object_class}});
    }
    img["segments"] = std::move(segs);
    json rels = json::array();
    for (const auto& t : ds.graphs.at(i).triplets) {
      rels.push_back({t.subject, t.relation, t.object});
    }
    img["relations"] = std::move(rels);
    images.push_back(std::move(img));
  }
  root["images"] = std::move(images);
  return root.dump();
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << dataset_to_json(dataset);
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace pairnet
