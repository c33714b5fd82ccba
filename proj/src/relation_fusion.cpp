#include "pairnet/relation_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pairnet/hungarian.hpp"

namespace pairnet {

Var concat_pairs(Var q_s, Var q_o) {
  if (q_s.shape() != q_o.shape()) {
    throw std::invalid_argument("concat_pairs: Q_s " + shape_string(q_s.shape()) +
                                " and Q_o " + shape_string(q_o.shape()) + " differ");
  }
  return ops::concat_rows(q_s, q_o);
}

DecoderLayer::DecoderLayer(const std::string& name, std::size_t dim, std::size_t heads,
                           std::size_t ffn_width, Rng& rng)
    : self_attn_(name + ".self_attn", dim, heads, rng),
      cross_attn_(name + ".cross_attn", dim, heads, rng),
      norm1_(name + ".norm1", dim),
      norm2_(name + ".norm2", dim),
      norm3_(name + ".norm3", dim),
      ffn1_(name + ".ffn.0", dim, ffn_width, rng),
      ffn2_(name + ".ffn.1", ffn_width, dim, rng) {}

DecoderLayer::Output DecoderLayer::operator()(Tape& tape, Var target, Var memory,
                                              Var query_pos, Var key_pos, Var value_pos) {
  Var x = norm1_(tape, target);
  target = ops::add(target, self_attn_(tape, x, x, query_pos, query_pos).output);

  x = norm2_(tape, target);
  auto cross = cross_attn_(tape, x, memory, query_pos, key_pos, value_pos);
  target = ops::add(target, cross.output);

  x = norm3_(tape, target);
  target = ops::add(target, ffn2_(tape, ops::relu(ffn1_(tape, x))));
  return {target, std::move(cross.weights)};
}

void DecoderLayer::collect(ParameterList& out) {
  self_attn_.collect(out);
  cross_attn_.collect(out);
  norm1_.collect(out);
  norm2_.collect(out);
  norm3_.collect(out);
  ffn1_.collect(out);
  ffn2_.collect(out);
}

RelationDecoder::RelationDecoder(const RelationDecoderConfig& config, Rng& rng)
    : config_(config) {
  const std::size_t n = config.num_relation_queries, d = config.dim;
  if (n == 0 || d == 0 || config.layers == 0 || config.heads == 0) {
    throw std::invalid_argument("relation decoder extents must be positive");
  }
  queries_ = Parameter("decoder.relation_queries", scaled_normal({n, d}, d, rng));
  query_pos_ = Parameter("decoder.query_pos", scaled_normal({n, d}, d, rng));
  key_pos_ = Parameter("decoder.key_pos", scaled_normal({2 * n, d}, d, rng));
  value_pos_ = Parameter("decoder.value_pos", scaled_normal({2 * n, d}, d, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    layers_.emplace_back("decoder.layer" + std::to_string(l), d, config.heads,
                         config.ffn_multiplier * d, rng);
  }
}

RelationDecoder::Result RelationDecoder::decode(Tape& tape, Var q_pair) {
  const std::size_t n = config_.num_relation_queries, d = config_.dim;
  if (q_pair.shape() != Shape{2 * n, d}) {
    throw std::invalid_argument("decode: Q_pair must be [" + std::to_string(2 * n) + "," +
                                std::to_string(d) + "], got " + shape_string(q_pair.shape()));
  }
  Var target = tape.parameter(queries_);
  Var qpos = tape.parameter(query_pos_);
  Var kpos = tape.parameter(key_pos_);
  Var vpos = tape.parameter(value_pos_);
  Result result;
  for (auto& layer : layers_) {
    auto out = layer(tape, target, q_pair, qpos, kpos, vpos);
    target = out.target;
    result.cross_attention.push_back(std::move(out.cross_attention));
  }
  result.decoded = target;
  return result;
}

void RelationDecoder::collect(ParameterList& out) {
  out.push_back(&queries_);
  out.push_back(&query_pos_);
  out.push_back(&key_pos_);
  out.push_back(&value_pos_);
  for (auto& l : layers_) l.collect(out);
}

RelationHead::RelationHead(std::size_t dim, std::size_t relation_classes, Rng& rng)
    : linear_("relation_head", dim, relation_classes + 1, rng) {}

std::vector<std::size_t> match_triplets(const Tensor& subject_log_probs,
                                        const Tensor& object_log_probs,
                                        const Tensor& relation_log_probs,
                                        std::span<const TripletTarget> targets) {
  const std::size_t slots = relation_log_probs.dim(0);
  if (subject_log_probs.dim(0) != slots || object_log_probs.dim(0) != slots) {
    throw std::invalid_argument("match_triplets: slot counts of the log-probability tables differ");
  }
  if (targets.empty()) return {};
  if (targets.size() > slots) {
    throw std::invalid_argument("match_triplets: " + std::to_string(targets.size()) +
                                " ground-truth triplets exceed " + std::to_string(slots) +
                                " prediction slots");
  }
  Tensor cost({targets.size(), slots});
  for (std::size_t g = 0; g < targets.size(); ++g) {
    const auto& t = targets[g];
    if (t.subject_class >= subject_log_probs.dim(1) || t.object_class >= object_log_probs.dim(1) ||
        t.relation_class >= relation_log_probs.dim(1)) {
      throw std::invalid_argument("match_triplets: target class index out of range");
    }
    for (std::size_t s = 0; s < slots; ++s) {
      cost.at(g, s) = -subject_log_probs.at(s, t.subject_class) -
                      object_log_probs.at(s, t.object_class) -
                      relation_log_probs.at(s, t.relation_class);
    }
  }
  return hungarian(cost);
}

std::vector<std::size_t> slot_relation_targets(std::size_t slots,
                                               std::span<const std::size_t> slot_of_target,
                                               std::span<const TripletTarget> targets) {
  std::vector<std::size_t> out(slots, 0);
  for (std::size_t g = 0; g < slot_of_target.size(); ++g) {
    out.at(slot_of_target[g]) = targets[g].relation_class;
  }
  return out;
}

RelationLossKind parse_relation_loss(const std::string& name) {
  if (name == "ce" || name == "cross-entropy") return RelationLossKind::kCrossEntropy;
  if (name == "focal") return RelationLossKind::kFocal;
  if (name == "seesaw") return RelationLossKind::kSeesaw;
  throw std::invalid_argument("unknown relation loss '" + name +
                              "' (expected ce, focal or seesaw)");
}

std::string relation_loss_name(RelationLossKind kind) {
  switch (kind) {
    case RelationLossKind::kCrossEntropy: return "ce";
    case RelationLossKind::kFocal: return "focal";
    case RelationLossKind::kSeesaw: return "seesaw";
  }
  return "?";
}

double seesaw_mitigation(double true_count, double negative_count, double p) {
  const double ni = std::max(true_count, 1.0), nj = std::max(negative_count, 1.0);
  return nj < ni ? std::pow(nj / ni, p) : 1.0;
}

RelationLoss::RelationLoss(const RelationLossConfig& config, std::size_t classes)
    : config_(config), counts_(classes, 0.0) {
  if (classes < 2) throw std::invalid_argument("relation loss needs at least two classes");
  if (config.focal_gamma < 0.0 || config.seesaw_p < 0.0 || config.seesaw_q < 0.0) {
    throw std::invalid_argument("relation loss exponents must be >= 0");
  }
}

void RelationLoss::observe(std::span<const std::size_t> targets) {
  for (auto t : targets) counts_.at(t) += 1.0;
}

void RelationLoss::set_counts(std::vector<double> counts) {
  if (counts.size() != counts_.size()) {
    throw std::invalid_argument("relation count vector has " + std::to_string(counts.size()) +
                                " entries, expected " + std::to_string(counts_.size()));
  }
  counts_ = std::move(counts);
}

Tensor RelationLoss::seesaw_weights(const Tensor& logits,
                                    std::span<const std::size_t> targets) const {
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  if (c != counts_.size() || targets.size() != rows) {
    throw std::invalid_argument("seesaw_weights: logits " + shape_string(logits.shape()) +
                                " do not match targets/classes");
  }
  Tensor w({rows, c}, 1.0);
  std::vector<double> prob(c);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * c;
    const double m = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (prob[j] = std::exp(z[j] - m));
    for (auto& p : prob) p /= s;
    const std::size_t i = targets[r];
    if (i >= c) throw std::invalid_argument("seesaw_weights: target out of range");
    for (std::size_t j = 0; j < c; ++j) {
      if (j == i) continue;
      double mitigation = 1.0;
      const bool background =
          config_.background_class && (i == *config_.background_class || j == *config_.background_class);
      if (!background) mitigation = seesaw_mitigation(counts_[i], counts_[j], config_.seesaw_p);
      double compensation = 1.0;
      if (config_.seesaw_q > 0.0 && prob[j] > prob[i]) {
        compensation = std::pow(prob[j] / std::max(prob[i], 1e-300), config_.seesaw_q);
      }
      w.at(r, j) = mitigation * compensation;
    }
  }
  return w;
}

Var RelationLoss::operator()(Var logits, std::span<const std::size_t> targets) const {
  switch (config_.kind) {
    case RelationLossKind::kCrossEntropy:
      return ops::cross_entropy(logits, targets);
    case RelationLossKind::kFocal:
      return ops::focal_cross_entropy(logits, targets, config_.focal_gamma);
    case RelationLossKind::kSeesaw:
      return ops::weighted_softmax_cross_entropy(logits, targets,
                                                 seesaw_weights(logits.value(), targets));
  }
  throw std::logic_error("unhandled relation loss kind");
}

Var total_loss(const LossTerms& terms, const LossWeights& weights) {
  std::vector<Var> parts{terms.subject, terms.object, terms.relation, terms.ppn};
  std::vector<double> w{weights.subject, weights.object, weights.relation, weights.ppn};
  if (terms.original) {
    parts.push_back(*terms.original);
    w.push_back(weights.original);
  }
  return ops::weighted_sum(parts, w);
}

namespace {

std::pair<std::size_t, double> best_of(const std::vector<double>& probs, std::size_t begin,
                                       std::size_t end) {
  std::size_t arg = begin;
  for (std::size_t c = begin + 1; c < end; ++c) {
    if (probs[c] > probs[arg]) arg = c;
  }
  return {arg, probs[arg]};
}

}  // namespace

std::vector<RankedTriplet> rank_triplets(const std::vector<SlotPrediction>& slots,
                                         bool include_pair_score) {
  std::vector<RankedTriplet> out;
  out.reserve(slots.size());
  for (const auto& s : slots) {
    if (s.subject_probs.size() < 2 || s.object_probs.size() != s.subject_probs.size() ||
        s.relation_probs.size() < 2) {
      throw std::invalid_argument("rank_triplets: malformed probability vectors for slot " +
                                  std::to_string(s.slot));
    }
    const auto [sc, sp] = best_of(s.subject_probs, 0, s.subject_probs.size() - 1);
    const auto [oc, op] = best_of(s.object_probs, 0, s.object_probs.size() - 1);
    const auto [rc, rp] = best_of(s.relation_probs, 1, s.relation_probs.size());
    RankedTriplet t;
    t.slot = s.slot;
    t.subject_query = s.subject_query;
    t.object_query = s.object_query;
    t.subject_class = static_cast<int>(sc) + 1;
    t.object_class = static_cast<int>(oc) + 1;
    t.relation_class = static_cast<int>(rc);
    t.score = sp * op * rp * (include_pair_score ? s.pair_score : 1.0);
    out.push_back(t);
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedTriplet& a, const RankedTriplet& b) {
    return a.score > b.score || (a.score == b.score && a.slot < b.slot);
  });
  return out;
}

}  // namespace pairnet
