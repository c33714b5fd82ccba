#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pairnet/dataset_io.hpp"
#include "pairnet/hungarian.hpp"
#include "pairnet/pgm.hpp"
#include "pairnet/synth.hpp"
#include "pairnet/trainer.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace pairnet;

namespace {

Dataset parse(const std::string& text) { return parse_dataset(text).dataset; }

// Returns (train_json, val_json).
std::pair<std::string, std::string> synthesize_split(const std::string& config_json) {
  const auto config = synth_config_from_json(json::parse(config_json));
  const auto split = split_dataset(synthesize(config), config.val_scenes);
  return {dataset_to_json(split.train), dataset_to_json(split.val)};
}

std::string train_run(const std::string& config_json, const std::string& train_json,
                      const std::optional<std::string>& val_json, const std::string& out_dir) {
  const auto config = config_from_json(json::parse(config_json));
  const Dataset train_data = parse(train_json);
  std::optional<Dataset> val;
  if (val_json) val = parse(*val_json);
  TrainResult result;
  {
    py::gil_scoped_release release;
    result = train(config, train_data, val ? &*val : nullptr);
  }
  save_run(out_dir, *result.model, config, result.record);
  return run_record_to_json(result.record).dump();
}

std::string evaluate_checkpoint(const std::string& checkpoint, const std::string& config_json,
                                const std::string& data_json, const std::vector<std::size_t>& ks,
                                bool optimal) {
  const auto config = config_from_json(json::parse(config_json));
  const Dataset data = parse(data_json);
  const auto images = prepare_dataset(data, config);
  auto model = load_model(checkpoint, config);
  return report_to_json(evaluate_model(*model, images, config, ks, optimal).report).dump();
}

std::string report(const std::string& predictions_path, const std::string& data_json,
                   const std::vector<std::size_t>& ks, bool optimal) {
  return report_to_json(report_predictions(load_predictions(predictions_path), parse(data_json), ks, optimal))
      .dump();
}

std::vector<std::size_t> hungarian_assignment(py::array_t<double, py::array::c_style | py::array::forcecast> cost) {
  if (cost.ndim() != 2) throw std::invalid_argument("cost must be a 2-D array");
  Tensor t({static_cast<std::size_t>(cost.shape(0)), static_cast<std::size_t>(cost.shape(1))});
  std::copy(cost.data(), cost.data() + cost.size(), t.values().begin());
  return hungarian(t);
}

py::array_t<std::uint8_t> load_pgm(const std::string& path) {
  const GrayImage g = read_pgm(path);
  py::array_t<std::uint8_t> out({g.height, g.width});
  std::copy(g.pixels.begin(), g.pixels.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Pair-Net panoptic scene graph lab";
  m.def("synthesize", &synthesize_split, py::arg("config_json"));
  m.def("train", &train_run, py::arg("config_json"), py::arg("train_json"), py::arg("val_json"),
        py::arg("out_dir"));
  m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint"), py::arg("config_json"),
        py::arg("data_json"), py::arg("ks"), py::arg("optimal") = false);
  m.def("report", &report, py::arg("predictions_path"), py::arg("data_json"), py::arg("ks"),
        py::arg("optimal") = false);
  m.def("random_pair_baseline",
        [](const std::string& data_json, std::size_t k, std::size_t num_queries) {
          return random_pair_baseline(parse(data_json), k, num_queries);
        },
        py::arg("data_json"), py::arg("k"), py::arg("num_queries"));
  m.def("desk_config", [] { return config_to_json(desk_config()).dump(); });
  m.def("hungarian", &hungarian_assignment, py::arg("cost"));
  m.def("read_pgm", &load_pgm, py::arg("path"));
}
