#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pairnet/calibration.hpp"
#include "pairnet/dataset_io.hpp"
#include "pairnet/synth.hpp"
#include "pairnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pairnet;

namespace {

// Every failure is reported as one line: "pairnet: error: <command>: <message>".
[[noreturn]] void fail(const std::string& command, const std::string& message) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << "pairnet: error: " << command << ": " << line << std::endl;
  std::exit(1);
}

void warn(const std::string& message) { std::cerr << "pairnet: warning: " << message << "\n"; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

Dataset load_split(const std::string& path) {
  auto loaded = load_dataset(path);
  for (const auto& r : loaded.rejected) warn(path + ": image " + r.image_id + " rejected: " + r.reason);
  return std::move(loaded.dataset);
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) {
      throw std::invalid_argument("invalid K value '" + item + "'");
    }
    ks.push_back(v);
  }
  if (ks.empty()) throw std::invalid_argument("empty K list");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

TrainConfig config_for_checkpoint(const std::string& ckpt, const std::string& config_path) {
  const auto path = config_path.empty() ? (fs::path(ckpt).parent_path() / kConfigFile).string()
                                        : config_path;
  return load_config(path);
}

std::string split_path(const std::string& dir, const std::string& split) {
  return (fs::path(dir) / (split + ".json")).string();
}

struct OracleFlags {
  std::optional<double> noise, flip, perturbation;

  void add(CLI::App* app) {
    app->add_option("--oracle-noise", noise, "Oracle embedding noise sigma");
    app->add_option("--class-flip", flip, "Oracle class flip probability");
    app->add_option("--mask-perturbation", perturbation, "Oracle boundary perturbation rate");
  }
  void apply(TrainConfig& c) const {
    if (noise) c.oracle.embedding_noise = *noise;
    if (flip) c.oracle.class_flip = *flip;
    if (perturbation) c.oracle.mask_perturbation = *perturbation;
    c.validate();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pair-Net panoptic scene graph lab"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt, image_id, pred_path, gt_path;
  std::string ks_text = "20,50,100", split = "val";
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  bool unit_weight = false, quiet = false, optimal = false;
  std::string predictions_out;
  double target = 0.79;
  OracleFlags oracle_flags;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic panoptic scene-graph dataset");
  synth->add_option("--config", config_path, "Synthesis config JSON")->required();
  synth->add_option("--out", out_path, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train Pair-Net on the oracle segmenter");
  train_cmd->add_option("--config", config_path, "Training config JSON")->required();
  train_cmd->add_option("--data", data_dir, "Dataset directory with train.json and val.json")->required();
  train_cmd->add_option("--out", out_path, "Run output directory")->required();
  train_cmd->add_option("--epochs", epochs, "Override the epoch count");
  train_cmd->add_option("--seed", seed, "Override the seed");
  train_cmd->add_flag("--unit-positive-weight", unit_weight, "Force the PPN positive weight to 1");
  train_cmd->add_flag("--quiet", quiet, "Suppress per-epoch progress");
  oracle_flags.add(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--k", ks_text, "Comma-separated K values");
  eval_cmd->add_option("--out", out_path, "Report JSON path")->required();
  eval_cmd->add_option("--config", config_path, "Config JSON (default: config.json next to the checkpoint)");
  eval_cmd->add_option("--split", split, "Dataset split to evaluate");
  eval_cmd->add_option("--predictions", predictions_out, "Also write a prediction dump");
  eval_cmd->add_flag("--optimal", optimal, "Also report maximum-matching recalls");
  oracle_flags.add(eval_cmd);

  auto* inspect_cmd = app.add_subcommand("inspect", "Export pair-matrix and attention heatmaps");
  inspect_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  inspect_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  inspect_cmd->add_option("--image", image_id, "Image id")->required();
  inspect_cmd->add_option("--out", out_path, "Output directory")->required();
  inspect_cmd->add_option("--config", config_path, "Config JSON (default: config.json next to the checkpoint)");
  oracle_flags.add(inspect_cmd);

  auto* report_cmd = app.add_subcommand("report", "Score a prediction dump");
  report_cmd->add_option("--pred", pred_path, "Prediction JSON")->required();
  report_cmd->add_option("--gt", gt_path, "Dataset directory or annotation JSON")->required();
  report_cmd->add_option("--k", ks_text, "Comma-separated K values");
  report_cmd->add_option("--out", out_path, "Optional report JSON path");
  report_cmd->add_flag("--optimal", optimal, "Also report maximum-matching recalls");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Tune the oracle mask perturbation to a target subject IoU");
  calibrate_cmd->add_option("--config", config_path, "Training config JSON")->required();
  calibrate_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  calibrate_cmd->add_option("--target", target, "Target mean subject IoU");
  calibrate_cmd->add_option("--split", split, "Dataset split to calibrate on");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string line = e.what();
    std::replace(line.begin(), line.end(), '\n', ' ');
    std::cerr << "pairnet: error: usage: " << line << std::endl;
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "synth") {
      const auto config = synth_config_from_json(read_json_file(config_path));
      const auto all = synthesize(config);
      const auto split_data = split_dataset(all, config.val_scenes);
      fs::create_directories(out_path);
      save_dataset(split_path(out_path, "train"), split_data.train);
      save_dataset(split_path(out_path, "val"), split_data.val);
      write_text((fs::path(out_path) / "synth_config.json").string(),
                 synth_config_to_json(config).dump(2) + "\n");
      std::cout << "wrote " << split_data.train.scenes.size() << " train and "
                << split_data.val.scenes.size() << " val scenes to " << out_path << "\n";
    } else if (command == "train") {
      auto config = load_config(config_path);
      if (epochs) config.epochs = *epochs;
      if (seed) config.seed = *seed;
      if (unit_weight) config.unit_positive_weight = true;
      oracle_flags.apply(config);
      config.output_dir = out_path;
      const auto train_data = load_split(split_path(data_dir, "train"));
      std::optional<Dataset> val_data;
      if (fs::exists(split_path(data_dir, "val"))) val_data = load_split(split_path(data_dir, "val"));
      ProgressFn progress;
      if (!quiet) progress = [](const std::string& m) { std::cerr << m << "\n"; };
      auto result = train(config, train_data, val_data ? &*val_data : nullptr, progress);
      for (const auto& id : result.record.skipped_images) {
        warn("image " + id + " skipped: more segments than query slots");
      }
      save_run(out_path, *result.model, config, result.record);
      std::cout << "wrote " << (fs::path(out_path) / kCheckpointFile).string() << " after "
                << result.record.steps.size() << " steps in " << result.record.wall_clock_seconds
                << " s\n";
    } else if (command == "eval") {
      auto config = config_for_checkpoint(ckpt, config_path);
      oracle_flags.apply(config);
      const auto ks = parse_ks(ks_text);
      const auto data = load_split(split_path(data_dir, split));
      std::vector<std::string> skipped;
      const auto images = prepare_dataset(data, config, &skipped);
      for (const auto& id : skipped) warn("image " + id + " skipped: more segments than query slots");
      auto model = load_model(ckpt, config);
      const auto evaluation = evaluate_model(*model, images, config, ks, optimal);
      write_text(out_path, report_to_json(evaluation.report).dump(2) + "\n");
      if (!predictions_out.empty()) save_predictions(predictions_out, evaluation);
      std::cout << report_table(evaluation.report);
    } else if (command == "inspect") {
      auto config = config_for_checkpoint(ckpt, config_path);
      oracle_flags.apply(config);
      std::optional<Dataset> found;
      for (const char* name : {"val", "train"}) {
        const auto path = split_path(data_dir, name);
        if (!fs::exists(path)) continue;
        auto data = load_split(path);
        const auto it = std::find_if(data.scenes.begin(), data.scenes.end(),
                                     [&](const PanopticScene& s) { return s.image_id == image_id; });
        if (it == data.scenes.end()) continue;
        const auto i = static_cast<std::size_t>(it - data.scenes.begin());
        Dataset single = data;
        single.scenes = {data.scenes[i]};
        single.graphs = {data.graphs[i]};
        found = std::move(single);
        break;
      }
      if (!found) throw std::invalid_argument("image " + image_id + " not found in " + data_dir);
      const auto images = prepare_dataset(*found, config);
      if (images.empty()) throw std::invalid_argument("image " + image_id + " has more segments than query slots");
      auto model = load_model(ckpt, config);
      const auto result = inspect_image(*model, images.front(), *found, out_path);
      for (const auto& f : result.files) std::cout << f << "\n";
    } else if (command == "report") {
      const auto ks = parse_ks(ks_text);
      Dataset gt;
      if (fs::is_directory(gt_path)) {
        bool any = false;
        for (const char* name : {"train", "val"}) {
          const auto path = split_path(gt_path, name);
          if (!fs::exists(path)) continue;
          auto part = load_split(path);
          if (!any) {
            gt = std::move(part);
            any = true;
          } else {
            gt.scenes.insert(gt.scenes.end(), part.scenes.begin(), part.scenes.end());
            gt.graphs.insert(gt.graphs.end(), part.graphs.begin(), part.graphs.end());
          }
        }
        if (!any) throw std::invalid_argument("no train.json or val.json in " + gt_path);
      } else {
        gt = load_split(gt_path);
      }
      const auto loaded = load_predictions(pred_path);
      const auto report = report_predictions(loaded, gt, ks, optimal);
      if (!out_path.empty()) write_text(out_path, report_to_json(report).dump(2) + "\n");
      std::cout << report_table(report);
    } else if (command == "calibrate") {
      const auto config = load_config(config_path);
      const auto data = load_split(split_path(data_dir, split));
      const auto table = make_embedding_table(config.model.object_classes, config.model.dim,
                                              config.model.num_queries, config.oracle.seed);
      const auto c = calibrate_mask_perturbation(data.scenes, data.graphs, table,
                                                 config.effective_oracle(), target);
      std::cout << json{{"mask_perturbation", c.mask_perturbation}, {"subject_iou", c.subject_iou}}.dump()
                << "\n";
    }
  } catch (const std::exception& e) {
    fail(command, e.what());
  }
  return 0;
}
