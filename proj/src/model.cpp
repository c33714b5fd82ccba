#include "pairnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pairnet {

void ModelConfig::validate() const {
  if (object_classes == 0 || relation_classes == 0) {
    throw std::invalid_argument("class counts must be positive");
  }
  if (num_queries < 2 || dim == 0 || num_relation_queries == 0 || decoder_layers == 0 ||
      heads == 0 || ffn_multiplier == 0) {
    throw std::invalid_argument("model extents must be positive (N_obj >= 2)");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument("dim " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (num_relation_queries > num_queries * num_queries - num_queries) {
    throw std::invalid_argument("N_rel = " + std::to_string(num_relation_queries) +
                                " exceeds N_obj^2 - N_obj = " +
                                std::to_string(num_queries * num_queries - num_queries));
  }
  if (kernel % 2 == 0) throw std::invalid_argument("matrix learner kernel must be odd");
}

namespace {

PairProposalConfig ppn_config(const ModelConfig& c) {
  c.validate();
  PairProposalConfig p;
  p.num_queries = c.num_queries;
  p.dim = c.dim;
  p.learner = c.learner;
  p.learner_channels = c.learner_channels;
  p.kernel = c.kernel;
  return p;
}

RelationDecoderConfig decoder_config(const ModelConfig& c) {
  RelationDecoderConfig d;
  d.num_relation_queries = c.num_relation_queries;
  d.dim = c.dim;
  d.layers = c.decoder_layers;
  d.heads = c.heads;
  d.ffn_multiplier = c.ffn_multiplier;
  return d;
}

std::vector<double> softmax_row(const double* z, std::size_t n) {
  std::vector<double> p(z, z + n);
  const double m = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (auto& v : p) s += (v = std::exp(v - m));
  for (auto& v : p) v /= s;
  return p;
}

Tensor log_softmax_rows(const Tensor& logits, const std::vector<std::size_t>& rows) {
  const std::size_t c = logits.dim(1);
  Tensor out({rows.size(), c});
  for (std::size_t t = 0; t < rows.size(); ++t) {
    auto p = softmax_row(logits.data() + rows[t] * c, c);
    for (std::size_t j = 0; j < c; ++j) out.at(t, j) = std::log(p[j]);
  }
  return out;
}

}  // namespace

PairNet::PairNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      rng_(mix_seed(seed, "pairnet-init")),
      ppn_(ppn_config(config), rng_),
      decoder_(decoder_config(config), rng_),
      head_(config.dim, config.relation_classes, rng_) {}

PairNet::Forward PairNet::forward(Tape& tape, const ObjectQuerySet& queries) {
  if (queries.num_queries() != config_.num_queries || queries.dim() != config_.dim) {
    throw std::invalid_argument("image " + queries.image_id + ": queries " +
                                shape_string(queries.queries.shape()) + " do not match N_obj=" +
                                std::to_string(config_.num_queries) + ", d=" +
                                std::to_string(config_.dim));
  }
  if (queries.class_logits.dim(1) != config_.object_classes + 1) {
    throw std::invalid_argument("image " + queries.image_id + ": class logits have " +
                                std::to_string(queries.class_logits.dim(1)) + " columns, expected " +
                                std::to_string(config_.object_classes + 1));
  }
  Forward f;
  f.q_obj = tape.constant(queries.queries);
  const auto emb = ppn_.project(tape, f.q_obj);
  f.e_sub = emb.subject;
  f.e_obj = emb.object;
  f.rough = rough_matrix(f.e_sub, f.e_obj);
  f.filtered = ppn_.matrix_learner(tape, f.rough);
  f.selection = top_k_pairs(f.filtered.value(), config_.num_relation_queries);
  const auto [q_s, q_o] = select_pairs(f.q_obj, f.selection);
  f.q_pair = concat_pairs(q_s, q_o);
  f.decoded = decoder_.decode(tape, f.q_pair);
  f.relation_logits = head_(tape, f.decoded.decoded);
  return f;
}

ParameterList PairNet::parameters() {
  ParameterList out;
  ppn_.collect(out);
  decoder_.collect(out);
  head_.collect(out);
  return out;
}

PreparedImage prepare_image(const PanopticScene& scene, const SceneGraph& graph,
                            ObjectQuerySet queries) {
  PreparedImage p;
  p.scene = &scene;
  p.graph = &graph;
  p.assignment = assign_queries(scene, queries);
  p.gt_matrix = build_gt_matrix(p.assignment, graph, queries.num_queries());
  for (const auto& t : graph.triplets) {
    p.targets.push_back({static_cast<std::size_t>(scene.segment(t.subject).object_class - 1),
                         static_cast<std::size_t>(scene.segment(t.object).object_class - 1),
                         static_cast<std::size_t>(t.relation)});
  }
  p.queries = std::move(queries);
  return p;
}

ImageLoss image_loss(Tape& tape, PairNet& model, const PreparedImage& image,
                     const RelationLoss& relation_loss, const LossOptions& options) {
  const auto f = model.forward(tape, image.queries);
  const std::size_t k = f.selection.cells.size();

  Var ppn = ppn_loss(f.filtered, image.gt_matrix, options.ppn_positive_weight);

  const auto subjects = f.selection.subjects();
  const auto objects = f.selection.objects();
  const Tensor& logits = image.queries.class_logits;
  const Tensor sub_logp = log_softmax_rows(logits, subjects);
  const Tensor obj_logp = log_softmax_rows(logits, objects);
  const Tensor& rel = f.relation_logits.value();
  std::vector<std::size_t> all(k);
  for (std::size_t t = 0; t < k; ++t) all[t] = t;
  const Tensor rel_logp = log_softmax_rows(rel, all);

  const auto slot_of = match_triplets(sub_logp, obj_logp, rel_logp, image.targets);
  ImageLoss out;
  out.relation_targets = slot_relation_targets(k, slot_of, image.targets);
  Var relation = relation_loss(f.relation_logits, out.relation_targets);

  Var subject = tape.constant(Tensor::scalar(0.0));
  Var object = tape.constant(Tensor::scalar(0.0));
  if (!slot_of.empty()) {
    std::vector<std::size_t> sub_rows, obj_rows, sub_cls, obj_cls;
    for (std::size_t g = 0; g < slot_of.size(); ++g) {
      sub_rows.push_back(subjects[slot_of[g]]);
      obj_rows.push_back(objects[slot_of[g]]);
      sub_cls.push_back(image.targets[g].subject_class);
      obj_cls.push_back(image.targets[g].object_class);
    }
    Var frozen = tape.constant(logits);
    subject = ops::cross_entropy(ops::gather_rows(frozen, sub_rows), sub_cls);
    object = ops::cross_entropy(ops::gather_rows(frozen, obj_rows), obj_cls);
  }
  out.total = total_loss({subject, object, relation, ppn, std::nullopt}, options.weights);
  out.subject = subject.value().item();
  out.object = object.value().item();
  out.relation = relation.value().item();
  out.ppn = ppn.value().item();
  return out;
}

std::vector<SlotPrediction> slot_predictions(const PairNet::Forward& forward,
                                             const ObjectQuerySet& queries) {
  const Tensor& logits = queries.class_logits;
  const Tensor& rel = forward.relation_logits.value();
  const std::size_t c = logits.dim(1), r = rel.dim(1);
  std::vector<SlotPrediction> out;
  for (std::size_t t = 0; t < forward.selection.cells.size(); ++t) {
    const auto& cell = forward.selection.cells[t];
    SlotPrediction s;
    s.slot = t;
    s.subject_query = cell.subject;
    s.object_query = cell.object;
    s.subject_probs = softmax_row(logits.data() + cell.subject * c, c);
    s.object_probs = softmax_row(logits.data() + cell.object * c, c);
    s.relation_probs = softmax_row(rel.data() + t * r, r);
    s.pair_score = 1.0 / (1.0 + std::exp(-cell.score));
    out.push_back(std::move(s));
  }
  return out;
}

ImagePrediction to_image_prediction(const ObjectQuerySet& queries,
                                    const std::vector<RankedTriplet>& ranked) {
  ImagePrediction p;
  p.image_id = queries.image_id;
  for (std::size_t q = 0; q < queries.num_queries(); ++q) p.masks.push_back(queries.binary_mask(q));
  for (const auto& t : ranked) {
    p.triplets.push_back({t.subject_query, t.object_query, t.subject_class, t.object_class,
                          t.relation_class, t.score});
  }
  return p;
}

}  // namespace pairnet
