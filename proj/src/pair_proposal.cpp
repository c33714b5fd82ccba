#include "pairnet/pair_proposal.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pairnet {

LearnerKind parse_learner_kind(const std::string& name) {
  if (name == "cnn-tiny") return LearnerKind::kCnnTiny;
  if (name == "cnn-base") return LearnerKind::kCnnBase;
  if (name == "mlp") return LearnerKind::kMlp;
  throw std::invalid_argument("unknown matrix learner '" + name +
                              "' (expected cnn-tiny, cnn-base or mlp)");
}

std::string learner_kind_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kCnnTiny: return "cnn-tiny";
    case LearnerKind::kCnnBase: return "cnn-base";
    case LearnerKind::kMlp: return "mlp";
  }
  return "?";
}

std::size_t PairProposalConfig::inner_width() const {
  if (learner_channels != 0) return learner_channels;
  return learner == LearnerKind::kCnnBase ? 256 : 64;
}

PairProposalNetwork::PairProposalNetwork(const PairProposalConfig& config, Rng& rng)
    : config_(config) {
  const std::size_t d = config.dim;
  subject_proj_ = Mlp("ppn.subject_projector", {d, d, d, d}, rng);
  object_proj_ = Mlp("ppn.object_projector", {d, d, d, d}, rng);
  const std::size_t c = config.inner_width();
  if (config.learner == LearnerKind::kMlp) {
    const std::size_t n = config.num_queries;
    row_mlp_ = Mlp("ppn.learner", {n, c, c, n}, rng);
  } else {
    convs_.emplace_back("ppn.learner.0", 1, c, config.kernel, rng);
    convs_.emplace_back("ppn.learner.1", c, c, config.kernel, rng);
    convs_.emplace_back("ppn.learner.2", c, 1, config.kernel, rng);
  }
}

PairProposalNetwork::Embeddings PairProposalNetwork::project(Tape& tape, Var q_obj) {
  if (q_obj.shape().size() != 2 || q_obj.shape()[1] != config_.dim) {
    throw std::invalid_argument("project: Q_obj must be [N, " + std::to_string(config_.dim) +
                                "], got " + shape_string(q_obj.shape()));
  }
  return {subject_proj_(tape, q_obj), object_proj_(tape, q_obj)};
}

Var PairProposalNetwork::matrix_learner(Tape& tape, Var rough) {
  const auto shape = rough.shape();
  if (shape.size() != 2 || shape[0] != shape[1]) {
    throw std::invalid_argument("matrix learner expects a square matrix, got " +
                                shape_string(shape));
  }
  if (config_.learner == LearnerKind::kMlp) return row_mlp_(tape, rough);
  Var x = ops::reshape(rough, {1, shape[0], shape[1]});
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i](tape, x);
    if (i + 1 < convs_.size()) x = ops::relu(x);
  }
  return ops::reshape(x, shape);
}

void PairProposalNetwork::collect(ParameterList& out) {
  subject_proj_.collect(out);
  object_proj_.collect(out);
  for (auto& c : convs_) c.collect(out);
  if (config_.learner == LearnerKind::kMlp) row_mlp_.collect(out);
}

Var rough_matrix(Var e_sub, Var e_obj) { return ops::cosine_matrix(e_sub, e_obj, 1e-8); }

Tensor build_gt_matrix(const QueryAssignment& assignment, const SceneGraph& graph,
                       std::size_t num_queries) {
  Tensor gt({num_queries, num_queries});
  for (const auto& t : graph.triplets) {
    if (!assignment.has(t.subject) || !assignment.has(t.object)) {
      throw std::invalid_argument("triplet (" + std::to_string(t.subject) + ", " +
                                  std::to_string(t.relation) + ", " +
                                  std::to_string(t.object) +
                                  ") references an unassigned segment");
    }
    const std::size_t s = assignment.query(t.subject), o = assignment.query(t.object);
    if (s >= num_queries || o >= num_queries) {
      throw std::invalid_argument("assigned query index exceeds " + std::to_string(num_queries));
    }
    gt.at(s, o) = 1.0;
  }
  return gt;
}

double pair_positive_weight(const Tensor& gt) {
  double positives = 0.0;
  for (double v : gt.values()) positives += v;
  return positives > 0.0 ? static_cast<double>(gt.size()) / positives : 0.0;
}

Var ppn_loss(Var logits, const Tensor& gt, std::optional<double> positive_weight_override) {
  const double p = positive_weight_override ? *positive_weight_override : pair_positive_weight(gt);
  return ops::positive_weighted_bce(logits, gt, p);
}

std::vector<std::size_t> TopKSelection::subjects() const {
  std::vector<std::size_t> out;
  for (const auto& c : cells) out.push_back(c.subject);
  return out;
}

std::vector<std::size_t> TopKSelection::objects() const {
  std::vector<std::size_t> out;
  for (const auto& c : cells) out.push_back(c.object);
  return out;
}

TopKSelection top_k_pairs(const Tensor& logits, std::size_t k) {
  if (logits.rank() != 2 || logits.dim(0) != logits.dim(1)) {
    throw std::invalid_argument("top_k_pairs expects a square matrix, got " +
                                shape_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  const std::size_t off_diagonal = n * n - n;
  if (k > off_diagonal) {
    throw std::invalid_argument("top_k_pairs: k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(off_diagonal) + " off-diagonal cells");
  }
  std::vector<std::size_t> cells;
  cells.reserve(off_diagonal);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) cells.push_back(i * n + j);
    }
  }
  const double* v = logits.data();
  std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(k), cells.end(),
                    [v](std::size_t a, std::size_t b) {
                      return v[a] > v[b] || (v[a] == v[b] && a < b);
                    });
  TopKSelection sel;
  for (std::size_t t = 0; t < k; ++t) {
    sel.cells.push_back({cells[t] / n, cells[t] % n, v[cells[t]]});
  }
  return sel;
}

std::pair<Var, Var> select_pairs(Var q_obj, const TopKSelection& selection) {
  const auto subjects = selection.subjects();
  const auto objects = selection.objects();
  return {ops::gather_rows(q_obj, subjects), ops::gather_rows(q_obj, objects)};
}

}  // namespace pairnet
