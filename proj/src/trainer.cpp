#include "pairnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pairnet/checkpoint.hpp"
#include "pairnet/pgm.hpp"

namespace pairnet {

using nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (eval_ks.empty()) throw std::invalid_argument("eval_ks must not be empty");
  optimizer.validate();
  model.validate();
  effective_oracle().validate();
  for (double w : {loss_weights.subject, loss_weights.object, loss_weights.relation,
                   loss_weights.ppn, loss_weights.original}) {
    if (w < 0.0) throw std::invalid_argument("loss weights must be non-negative");
  }
}

OracleConfig TrainConfig::effective_oracle() const {
  OracleConfig o = oracle;
  o.num_queries = model.num_queries;
  o.dim = model.dim;
  return o;
}

TrainConfig desk_config() {
  TrainConfig c;
  c.model.num_queries = 16;
  c.model.dim = 32;
  c.model.num_relation_queries = 20;
  c.model.decoder_layers = 2;
  c.model.heads = 4;
  c.oracle.embedding_noise = 0.1;
  return c;
}

namespace {

// Copies j[key] into out when present.
template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw std::invalid_argument("unknown config field " + where + "." + k);
  }
}

}  // namespace

json config_to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon},
                    {"milestones", c.optimizer.milestones},
                    {"decay_factor", c.optimizer.decay_factor}};
  j["loss_weights"] = {{"subject", c.loss_weights.subject},
                       {"object", c.loss_weights.object},
                       {"relation", c.loss_weights.relation},
                       {"ppn", c.loss_weights.ppn},
                       {"original", c.loss_weights.original}};
  j["relation_loss"] = {{"kind", relation_loss_name(c.relation_loss.kind)},
                        {"focal_gamma", c.relation_loss.focal_gamma},
                        {"seesaw_p", c.relation_loss.seesaw_p},
                        {"seesaw_q", c.relation_loss.seesaw_q}};
  j["model"] = {{"object_classes", c.model.object_classes},
                {"relation_classes", c.model.relation_classes},
                {"num_queries", c.model.num_queries},
                {"dim", c.model.dim},
                {"num_relation_queries", c.model.num_relation_queries},
                {"decoder_layers", c.model.decoder_layers},
                {"heads", c.model.heads},
                {"ffn_multiplier", c.model.ffn_multiplier},
                {"learner", learner_kind_name(c.model.learner)},
                {"learner_channels", c.model.learner_channels},
                {"kernel", c.model.kernel}};
  j["oracle"] = {{"embedding_noise", c.oracle.embedding_noise},
                 {"class_flip", c.oracle.class_flip},
                 {"mask_perturbation", c.oracle.mask_perturbation},
                 {"class_confidence", c.oracle.class_confidence},
                 {"seed", c.oracle.seed}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["unit_positive_weight"] = c.unit_positive_weight;
  j["include_pair_score"] = c.include_pair_score;
  j["eval_ks"] = c.eval_ks;
  j["evaluate_each_epoch"] = c.evaluate_each_epoch;
  return j;
}

TrainConfig config_from_json(const json& j) {
  reject_unknown(j, {"preset", "epochs", "batch_size", "optimizer", "loss_weights", "relation_loss",
                     "model", "oracle", "seed", "output_dir", "unit_positive_weight",
                     "include_pair_score", "eval_ks", "evaluate_each_epoch"},
                 "config");
  TrainConfig c;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "desk") {
      c = desk_config();
    } else if (preset != "full") {
      throw std::invalid_argument("unknown preset '" + preset + "' (expected desk or full)");
    }
  }
  try {
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon",
                         "milestones", "decay_factor"}, "optimizer");
      read(o, "learning_rate", c.optimizer.learning_rate);
      read(o, "weight_decay", c.optimizer.weight_decay);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "epsilon", c.optimizer.epsilon);
      read(o, "milestones", c.optimizer.milestones);
      read(o, "decay_factor", c.optimizer.decay_factor);
    }
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      reject_unknown(w, {"subject", "object", "relation", "ppn", "original"}, "loss_weights");
      read(w, "subject", c.loss_weights.subject);
      read(w, "object", c.loss_weights.object);
      read(w, "relation", c.loss_weights.relation);
      read(w, "ppn", c.loss_weights.ppn);
      read(w, "original", c.loss_weights.original);
    }
    if (j.contains("relation_loss")) {
      const auto& r = j.at("relation_loss");
      reject_unknown(r, {"kind", "focal_gamma", "seesaw_p", "seesaw_q"}, "relation_loss");
      if (r.contains("kind")) c.relation_loss.kind = parse_relation_loss(r.at("kind").get<std::string>());
      read(r, "focal_gamma", c.relation_loss.focal_gamma);
      read(r, "seesaw_p", c.relation_loss.seesaw_p);
      read(r, "seesaw_q", c.relation_loss.seesaw_q);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, {"object_classes", "relation_classes", "num_queries", "dim",
                         "num_relation_queries", "decoder_layers", "heads", "ffn_multiplier",
                         "learner", "learner_channels", "kernel"}, "model");
      read(m, "object_classes", c.model.object_classes);
      read(m, "relation_classes", c.model.relation_classes);
      read(m, "num_queries", c.model.num_queries);
      read(m, "dim", c.model.dim);
      read(m, "num_relation_queries", c.model.num_relation_queries);
      read(m, "decoder_layers", c.model.decoder_layers);
      read(m, "heads", c.model.heads);
      read(m, "ffn_multiplier", c.model.ffn_multiplier);
      if (m.contains("learner")) c.model.learner = parse_learner_kind(m.at("learner").get<std::string>());
      read(m, "learner_channels", c.model.learner_channels);
      read(m, "kernel", c.model.kernel);
    }
    if (j.contains("oracle")) {
      const auto& o = j.at("oracle");
      reject_unknown(o, {"embedding_noise", "class_flip", "mask_perturbation", "class_confidence",
                         "seed"}, "oracle");
      read(o, "embedding_noise", c.oracle.embedding_noise);
      read(o, "class_flip", c.oracle.class_flip);
      read(o, "mask_perturbation", c.oracle.mask_perturbation);
      read(o, "class_confidence", c.oracle.class_confidence);
      read(o, "seed", c.oracle.seed);
    }
    read(j, "seed", c.seed);
    read(j, "output_dir", c.output_dir);
    read(j, "unit_positive_weight", c.unit_positive_weight);
    read(j, "include_pair_score", c.include_pair_score);
    read(j, "eval_ks", c.eval_ks);
    read(j, "evaluate_each_epoch", c.evaluate_each_epoch);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

json run_record_to_json(const RunRecord& r) {
  json j;
  j["config"] = r.config;
  j["seed"] = r.seed;
  j["initial_validation"] = r.initial_validation ? report_to_json(*r.initial_validation) : json(nullptr);
  json steps = json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"epoch", s.epoch}, {"total", s.total}, {"subject", s.subject},
                     {"object", s.object}, {"relation", s.relation}, {"ppn", s.ppn}});
  }
  j["steps"] = steps;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"learning_rate", e.learning_rate},
                      {"mean_total", e.mean_total},
                      {"mean_ppn", e.mean_ppn},
                      {"validation", e.validation ? report_to_json(*e.validation) : json(nullptr)}});
  }
  j["epochs"] = epochs;
  j["skipped_images"] = r.skipped_images;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

std::vector<PreparedImage> prepare_dataset(const Dataset& data, const TrainConfig& config,
                                           std::vector<std::string>* skipped) {
  const auto oracle = config.effective_oracle();
  const auto table = make_embedding_table(config.model.object_classes, config.model.dim,
                                          config.model.num_queries, oracle.seed);
  std::vector<PreparedImage> out;
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    const auto& scene = data.scenes[i];
    if (scene.segments.size() > oracle.num_queries) {
      if (skipped) skipped->push_back(scene.image_id);
      continue;
    }
    auto generated = oracle_queries(scene, table, oracle);
    out.push_back(prepare_image(scene, data.graphs[i], std::move(generated.query_set)));
  }
  return out;
}

namespace {

void check_dataset(const Dataset& data, const ModelConfig& model, const char* what) {
  if (data.num_object_classes() != model.object_classes ||
      data.num_relation_classes() != model.relation_classes) {
    throw std::invalid_argument(std::string(what) + " dataset has x=" +
                                std::to_string(data.num_object_classes()) + ", y=" +
                                std::to_string(data.num_relation_classes()) +
                                " but the model expects x=" + std::to_string(model.object_classes) +
                                ", y=" + std::to_string(model.relation_classes));
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& train_data, const Dataset* val_data,
                  const ProgressFn& progress) {
  config.validate();
  check_dataset(train_data, config.model, "training");
  if (val_data) check_dataset(*val_data, config.model, "validation");
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  auto& record = result.record;
  record.config = config_to_json(config);
  record.seed = config.seed;

  const auto train_images = prepare_dataset(train_data, config, &record.skipped_images);
  std::vector<PreparedImage> val_images;
  if (val_data) val_images = prepare_dataset(*val_data, config, &record.skipped_images);
  if (train_images.empty()) throw std::invalid_argument("no usable training images");

  result.model = std::make_unique<PairNet>(config.model, config.seed);
  PairNet& model = *result.model;
  const auto params = model.parameters();
  RelationLoss relation_loss(config.relation_loss, config.model.relation_classes + 1);
  LossOptions loss_options;
  loss_options.weights = config.loss_weights;
  if (config.unit_positive_weight) loss_options.ppn_positive_weight = 1.0;

  if (val_data && config.evaluate_each_epoch) {
    record.initial_validation = evaluate_model(model, val_images, config, config.eval_ks).report;
  }

  Rng shuffle_rng(mix_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(train_images.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord epoch_record;
    epoch_record.epoch = epoch;
    epoch_record.learning_rate = learning_rate_at(config.optimizer, epoch);
    double total_sum = 0.0, ppn_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double n = static_cast<double>(end - start);
      zero_grads(params);
      StepRecord step;
      step.epoch = epoch;
      std::vector<std::size_t> batch_targets;
      for (std::size_t b = start; b < end; ++b) {
        Tape tape;
        auto loss = image_loss(tape, model, train_images[order[b]], relation_loss, loss_options);
        const double total = loss.total.value().item();
        if (!std::isfinite(total)) {
          throw std::runtime_error("non-finite loss at step " + std::to_string(record.steps.size()) +
                                   " (image " + train_images[order[b]].queries.image_id + ")");
        }
        tape.backward(ops::scale(loss.total, 1.0 / n));
        step.total += total / n;
        step.subject += loss.subject / n;
        step.object += loss.object / n;
        step.relation += loss.relation / n;
        step.ppn += loss.ppn / n;
        batch_targets.insert(batch_targets.end(), loss.relation_targets.begin(),
                             loss.relation_targets.end());
      }
      try {
        optimizer_step(params, config.optimizer, epoch);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("step " + std::to_string(record.steps.size()) + ": " + e.what());
      }
      relation_loss.observe(batch_targets);
      total_sum += step.total * n;
      ppn_sum += step.ppn * n;
      record.steps.push_back(step);
    }
    epoch_record.mean_total = total_sum / static_cast<double>(order.size());
    epoch_record.mean_ppn = ppn_sum / static_cast<double>(order.size());
    if (val_data && config.evaluate_each_epoch) {
      epoch_record.validation = evaluate_model(model, val_images, config, config.eval_ks).report;
    }
    if (progress) {
      std::ostringstream msg;
      msg << "epoch " << epoch << " lr " << epoch_record.learning_rate << " loss "
          << epoch_record.mean_total << " ppn " << epoch_record.mean_ppn;
      if (epoch_record.validation) {
        const std::size_t k = config.eval_ks.front();
        msg << " val R@" << k << " " << epoch_record.validation->recall.at(k) << " pair-R@" << k
            << " " << epoch_record.validation->pair_recall.at(k);
      }
      progress(msg.str());
    }
    record.epochs.push_back(std::move(epoch_record));
  }
  result.relation_counts = relation_loss.counts();
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

Evaluation evaluate_model(PairNet& model, const std::vector<PreparedImage>& images,
                          const TrainConfig& config, const std::vector<std::size_t>& ks,
                          bool include_optimal, const SlotOverride& override) {
  Evaluation ev;
  for (const auto& image : images) {
    Tape tape(false);
    const auto f = model.forward(tape, image.queries);
    const auto slots = override ? override(image, f) : slot_predictions(f, image.queries);
    ev.ranked.push_back(rank_triplets(slots, config.include_pair_score));
    ev.predictions.push_back(to_image_prediction(image.queries, ev.ranked.back()));
    ev.query_sets.push_back(image.queries);
  }
  std::vector<EvaluationImage> inputs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    inputs.push_back({images[i].scene, images[i].graph, &ev.predictions[i], &images[i].queries,
                      &images[i].assignment});
  }
  EvaluationOptions options;
  options.ks = ks;
  options.relation_classes = config.model.relation_classes;
  options.include_optimal = include_optimal;
  ev.report = evaluate_predictions(inputs, options);
  return ev;
}

double random_pair_baseline(const Dataset& data, std::size_t k, std::size_t num_queries) {
  const double cells = static_cast<double>(num_queries * num_queries - num_queries);
  const double chosen = std::min(static_cast<double>(k), cells) / cells;
  double sum = 0.0;
  std::size_t images = 0;
  for (const auto& g : data.graphs) {
    if (g.triplets.empty()) continue;
    std::set<std::pair<int, int>> pairs;
    for (const auto& t : g.triplets) pairs.insert({t.subject, t.object});
    sum += chosen * static_cast<double>(pairs.size()) / static_cast<double>(g.triplets.size());
    ++images;
  }
  return images == 0 ? 0.0 : sum / static_cast<double>(images);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_run(const std::string& dir, PairNet& model, const TrainConfig& config,
              const RunRecord& record) {
  fs::create_directories(dir);
  save_checkpoint((fs::path(dir) / kCheckpointFile).string(), model.parameters());
  write_text(fs::path(dir) / kConfigFile, config_to_json(config).dump(2) + "\n");
  write_text(fs::path(dir) / kRunFile, run_record_to_json(record).dump(2) + "\n");
}

std::unique_ptr<PairNet> load_model(const std::string& checkpoint_path, const TrainConfig& config) {
  auto records = load_checkpoint(checkpoint_path);
  auto model = std::make_unique<PairNet>(config.model, config.seed);
  try {
    restore_parameters(records, model->parameters());
  } catch (const std::exception& e) {
    throw std::invalid_argument(checkpoint_path + ": " + e.what());
  }
  return model;
}

json predictions_to_json(const Evaluation& evaluation, const std::string& mask_file) {
  json images = json::array();
  for (const auto& p : evaluation.predictions) {
    json triplets = json::array();
    for (const auto& t : p.triplets) {
      triplets.push_back({{"sub_query", t.subject_mask},
                          {"obj_query", t.object_mask},
                          {"sub_class", t.subject_class},
                          {"obj_class", t.object_class},
                          {"rel_class", t.relation_class},
                          {"score", t.score}});
    }
    images.push_back({{"image_id", p.image_id}, {"triplets", triplets}});
  }
  return {{"mask_file", mask_file}, {"images", images}};
}

void save_predictions(const std::string& json_path, const Evaluation& evaluation) {
  const fs::path path(json_path);
  const auto mask_name = path.stem().string() + ".pnqs";
  save_query_sets((path.parent_path() / mask_name).string(), evaluation.query_sets);
  write_text(path, predictions_to_json(evaluation, mask_name).dump(2) + "\n");
}

LoadedPredictions load_predictions(const std::string& json_path) {
  const json j = read_json(json_path);
  LoadedPredictions out;
  try {
    const auto mask_file = fs::path(json_path).parent_path() / j.at("mask_file").get<std::string>();
    auto bytes = read_binary_file(mask_file.string());
    // Extents come from the file itself; decode validates them against the
    // first record.
    BinaryReader probe(bytes);
    probe.expect_magic("PNQS");
    probe.u32();
    std::size_t n = 0, d = 0;
    if (probe.u64() > 0) {
      probe.string();
      const auto q = probe.tensor();
      if (q.rank() != 2) throw std::runtime_error("query tensor is not a matrix");
      n = q.dim(0);
      d = q.dim(1);
    }
    out.query_sets = decode_query_sets(std::move(bytes), n, d);
    const auto& images = j.at("images");
    if (images.size() != out.query_sets.size()) {
      throw std::runtime_error("prediction file lists " + std::to_string(images.size()) +
                               " images but the mask file holds " +
                               std::to_string(out.query_sets.size()));
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& im = images[i];
      ImagePrediction p;
      p.image_id = im.at("image_id").get<std::string>();
      const auto& qs = out.query_sets[i];
      if (qs.image_id != p.image_id) {
        throw std::runtime_error("mask record " + std::to_string(i) + " is for image " +
                                 qs.image_id + ", expected " + p.image_id);
      }
      for (std::size_t q = 0; q < qs.num_queries(); ++q) p.masks.push_back(qs.binary_mask(q));
      for (const auto& t : im.at("triplets")) {
        ScoredTriplet s;
        s.subject_mask = t.at("sub_query").get<std::size_t>();
        s.object_mask = t.at("obj_query").get<std::size_t>();
        s.subject_class = t.at("sub_class").get<int>();
        s.object_class = t.at("obj_class").get<int>();
        s.relation_class = t.at("rel_class").get<int>();
        s.score = t.at("score").get<double>();
        if (s.subject_mask >= p.masks.size() || s.object_mask >= p.masks.size()) {
          throw std::runtime_error("image " + p.image_id + ": triplet references a missing query");
        }
        p.triplets.push_back(s);
      }
      out.predictions.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(json_path + ": malformed prediction file: " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(json_path + ": " + e.what());
  }
  return out;
}

MetricsReport report_predictions(const LoadedPredictions& loaded, const Dataset& gt,
                                 const std::vector<std::size_t>& ks, bool include_optimal) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < gt.scenes.size(); ++i) index[gt.scenes[i].image_id] = i;
  std::vector<QueryAssignment> assignments;
  std::vector<std::size_t> scene_of;
  for (const auto& p : loaded.predictions) {
    const auto it = index.find(p.image_id);
    if (it == index.end()) throw std::invalid_argument("no annotation for image " + p.image_id);
    scene_of.push_back(it->second);
  }
  for (std::size_t i = 0; i < loaded.predictions.size(); ++i) {
    assignments.push_back(assign_queries(gt.scenes[scene_of[i]], loaded.query_sets[i]));
  }
  std::vector<EvaluationImage> inputs;
  for (std::size_t i = 0; i < loaded.predictions.size(); ++i) {
    inputs.push_back({&gt.scenes[scene_of[i]], &gt.graphs[scene_of[i]], &loaded.predictions[i],
                      &loaded.query_sets[i], &assignments[i]});
  }
  EvaluationOptions options;
  options.ks = ks;
  options.relation_classes = gt.num_relation_classes();
  options.include_optimal = include_optimal;
  return evaluate_predictions(inputs, options);
}

namespace {

std::string class_label(const std::vector<std::string>& names, std::size_t index) {
  return index < names.size() ? names[index] : "none";
}

}  // namespace

InspectResult inspect_image(PairNet& model, const PreparedImage& image, const Dataset& data,
                            const std::string& out_dir) {
  fs::create_directories(out_dir);
  Tape tape(false);
  const auto f = model.forward(tape, image.queries);

  const Tensor& q = image.queries.queries;
  const std::size_t n = q.dim(0), d = q.dim(1);
  Tensor qqt({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q.at(i, c) * q.at(j, c);
      qqt.at(i, j) = s;
    }
  }
  Tensor filtered = f.filtered.value();
  for (auto& v : filtered.values()) v = 1.0 / (1.0 + std::exp(-v));
  const Tensor& last = f.decoded.cross_attention.back();
  const std::size_t heads = last.dim(0), rows = last.dim(1), cols = last.dim(2);
  Tensor attention({rows, cols});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) attention.at(r, c) += last.at(h, r, c) / static_cast<double>(heads);
    }
  }

  InspectResult result;
  json maps = json::object();
  const std::vector<std::pair<std::string, const Tensor*>> outputs{
      {"qqt", &qqt}, {"rough", &f.rough.value()}, {"filtered", &filtered},
      {"gt", &image.gt_matrix}, {"attention", &attention}};
  for (const auto& [name, matrix] : outputs) {
    const auto heat = to_heatmap(*matrix);
    const auto file = (fs::path(out_dir) / (name + ".pgm")).string();
    write_pgm(file, heat.image);
    result.files.push_back(file);
    maps[name] = {{"file", name + ".pgm"}, {"min", heat.min}, {"max", heat.max}};
  }

  const auto slots = slot_predictions(f, image.queries);
  json labels = json::array();
  for (const auto& s : slots) {
    const auto sub = std::max_element(s.subject_probs.begin(), s.subject_probs.end()) - s.subject_probs.begin();
    const auto obj = std::max_element(s.object_probs.begin(), s.object_probs.end()) - s.object_probs.begin();
    const auto rel = std::max_element(s.relation_probs.begin(), s.relation_probs.end()) - s.relation_probs.begin();
    labels.push_back({{"slot", s.slot},
                      {"subject_query", s.subject_query},
                      {"object_query", s.object_query},
                      {"subject", class_label(data.object_classes, static_cast<std::size_t>(sub))},
                      {"relation", rel == 0 ? std::string("no_relation")
                                            : class_label(data.relation_classes, static_cast<std::size_t>(rel - 1))},
                      {"object", class_label(data.object_classes, static_cast<std::size_t>(obj))}});
  }
  result.sidecar = {{"image_id", image.queries.image_id}, {"heatmaps", maps}, {"slots", labels}};
  const auto sidecar = (fs::path(out_dir) / "inspect.json").string();
  write_text(sidecar, result.sidecar.dump(2) + "\n");
  result.files.push_back(sidecar);
  return result;
}

}  // namespace pairnet
