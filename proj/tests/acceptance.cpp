// Acceptance run: one line per criterion, exit code = number of failures.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "pairnet/dataset_io.hpp"
#include "pairnet/hungarian.hpp"
#include "pairnet/metrics.hpp"
#include "pairnet/pgm.hpp"
#include "pairnet/synth.hpp"
#include "pairnet/trainer.hpp"
#include "support.hpp"

using namespace pairnet;
using testing::gradcheck;
using testing::project;
using testing::random_tensor;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kGradBudgetSeconds = 120.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Cost of an assignment with the chosen entries summed in ascending order, so
// tied optima reached through different permutations compare bit-equal.
double canonical_cost(const Tensor& cost, const std::vector<std::size_t>& cols) {
  std::vector<double> picked;
  for (std::size_t r = 0; r < cols.size(); ++r) picked.push_back(cost.at(r, cols[r]));
  std::sort(picked.begin(), picked.end());
  return std::accumulate(picked.begin(), picked.end(), 0.0);
}

// Minimum canonical cost over all injections rows -> columns.
double brute_force_min(const Tensor& cost) {
  std::vector<std::size_t> perm(cost.dim(1));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    best = std::min(best, canonical_cost(cost, {perm.begin(), perm.begin() + static_cast<long>(cost.dim(0))}));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Tensor log_softmax_table(const Tensor& z) {
  Tensor out(z.shape());
  const std::size_t c = z.dim(1);
  for (std::size_t r = 0; r < z.dim(0); ++r) {
    double m = -1e300;
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, z.at(r, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z.at(r, j) - m);
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) = z.at(r, j) - m - std::log(s);
  }
  return out;
}

ImagePrediction exact_masks(const PanopticScene& s) {
  ImagePrediction p;
  p.image_id = s.image_id;
  for (const auto& seg : s.segments) p.masks.push_back(mask_of(s, seg.id));
  return p;
}

// ---------------------------------------------------------------- criterion 1

struct GradFamily {
  std::string name;
  std::function<double(Rng&)> instance;  // max relative error of one instance
};

// Moves parameters off their initial values. Zero-initialized biases put a
// fully inactive ReLU row exactly on the kink at 0.
void jitter(const ParameterList& params, Rng& rng) {
  std::uniform_real_distribution<double> d(-0.1, 0.1);
  for (auto* p : params) {
    for (auto& v : p->value.values()) v += d(rng);
  }
}

PairProposalConfig ppn_config(Rng& rng, LearnerKind kind) {
  PairProposalConfig c;
  c.num_queries = uniform(rng, 2, 6);
  c.dim = uniform(rng, 3, 8);
  c.learner = kind;
  c.learner_channels = uniform(rng, 2, 4);
  c.kernel = uniform(rng, 0, 1) == 0 ? 3 : 5;
  return c;
}

constexpr double kTopkMargin = 1e-3;

double topk_margin(PairNet& model, const PreparedImage& image, std::size_t k) {
  Tape tape(false);
  const auto forward = model.forward(tape, image.queries);
  const Tensor& m = forward.filtered.value();
  std::vector<double> v;
  for (std::size_t a = 0; a < m.dim(0); ++a) {
    for (std::size_t b = 0; b < m.dim(1); ++b) {
      if (a != b) v.push_back(m.at(a, b));
    }
  }
  std::sort(v.rbegin(), v.rend());
  return k < v.size() ? v[k - 1] - v[k] : 1.0;
}

double composite_instance(Rng& rng, int index, int& redraws) {
  TrainConfig c;
  c.model.num_queries = 10;
  c.model.dim = 16;
  c.model.num_relation_queries = uniform(rng, 6, 9);
  c.model.decoder_layers = uniform(rng, 1, 2);
  c.model.heads = 2;
  c.model.learner = static_cast<LearnerKind>(index % 3);
  c.model.learner_channels = 2;
  c.model.kernel = 3;
  c.oracle.embedding_noise = 0.1;
  c.relation_loss.seesaw_q = 0.0;

  SynthConfig s;
  s.train_scenes = 6;
  s.val_scenes = 0;
  s.height = 8;
  s.width = 8;
  s.max_segments = 6;
  s.mean_relations = 3.0;
  s.max_relations = 6;
  s.seed = static_cast<std::uint64_t>(index);
  const Dataset d = synthesize(s);
  const auto prepared = prepare_dataset(d, c);
  const PreparedImage* image = nullptr;
  for (const auto& p : prepared) {
    if (!p.targets.empty()) {
      image = &p;
      break;
    }
  }
  if (image == nullptr) throw std::runtime_error("no annotated scene for the composite check");

  RelationLoss loss(c.relation_loss, c.model.relation_classes + 1);
  std::vector<double> counts(c.model.relation_classes + 1);
  for (auto& n : counts) n = static_cast<double>(uniform(rng, 0, 50));
  loss.set_counts(counts);
  // Redraw the model at points where the loss is not smooth: a near-tied top-k
  // selection, or a kink within 2h that makes finite differences step-dependent.
  std::optional<PairNet> model;
  auto f = [&](Tape& t, const std::vector<Var>&) {
    return image_loss(t, *model, *image, loss, {}).total;
  };
  for (int attempt = 0;; ++attempt, ++redraws) {
    if (attempt == 50) throw std::runtime_error("no smooth composite instance in 50 draws");
    model.emplace(c.model, rng());
    jitter(model->parameters(), rng);
    if (topk_margin(*model, *image, c.model.num_relation_queries) < kTopkMargin) continue;
    if (testing::fd_step_spread(f, model->parameters(), 1e-5, 1e-5, 4) <= kGradTolerance) break;
  }
  return gradcheck(f, {}, model->parameters(), 1e-5, 1e-5, 4).max_relative_error;
}

Outcome gradient_integrity() {
  constexpr int kInstances = 20;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GradFamily> families;
  families.push_back({"linear", [](Rng& rng) {
    const std::size_t rows = uniform(rng, 1, 5), in = uniform(rng, 1, 6), out = uniform(rng, 1, 6);
    const Tensor w = random_tensor({rows * out}, rng);
    auto f = [&](Tape&, const std::vector<Var>& x) { return project(ops::linear(x[0], x[1], x[2]), w); };
    return gradcheck(f, {random_tensor({rows, in}, rng), random_tensor({out, in}, rng),
                         random_tensor({out}, rng)}).max_relative_error;
  }});
  families.push_back({"conv2d", [](Rng& rng) {
    const std::size_t cin = uniform(rng, 1, 3), cout = uniform(rng, 1, 3);
    const std::size_t h = uniform(rng, 3, 7), w = uniform(rng, 3, 7), k = 2 * uniform(rng, 0, 2) + 1;
    const Tensor proj = random_tensor({cout * h * w}, rng);
    auto f = [&](Tape&, const std::vector<Var>& x) { return project(ops::conv2d(x[0], x[1], x[2]), proj); };
    return gradcheck(f, {random_tensor({cin, h, w}, rng), random_tensor({cout, cin, k, k}, rng),
                         random_tensor({cout}, rng)}).max_relative_error;
  }});
  families.push_back({"attention", [](Rng& rng) {
    const std::size_t heads = uniform(rng, 1, 2), d = heads * uniform(rng, 2, 4);
    const std::size_t lq = uniform(rng, 1, 5), lkv = uniform(rng, 1, 5);
    MultiHeadAttention mha("a", d, heads, rng);
    ParameterList params;
    mha.collect(params);
    jitter(params, rng);
    const Tensor proj = random_tensor({lq * d}, rng);
    auto f = [&](Tape& tape, const std::vector<Var>& x) {
      return project(mha(tape, x[0], x[1], x[2], x[3], x[4]).output, proj);
    };
    return gradcheck(f, {random_tensor({lq, d}, rng), random_tensor({lkv, d}, rng),
                         random_tensor({lq, d}, rng), random_tensor({lkv, d}, rng),
                         random_tensor({lkv, d}, rng)},
                     params).max_relative_error;
  }});
  families.push_back({"projectors", [](Rng& rng) {
    const auto c = ppn_config(rng, LearnerKind::kCnnTiny);
    PairProposalNetwork ppn(c, rng);
    ParameterList params;
    for (auto& l : ppn.subject_projector().layers()) l.collect(params);
    for (auto& l : ppn.object_projector().layers()) l.collect(params);
    jitter(params, rng);
    const std::size_t n = c.num_queries * c.dim;
    const Tensor w1 = random_tensor({n}, rng), w2 = random_tensor({n}, rng);
    auto f = [&](Tape& tape, const std::vector<Var>& x) {
      const auto e = ppn.project(tape, x[0]);
      return ops::add(project(e.subject, w1), project(e.object, w2));
    };
    return gradcheck(f, {random_tensor({c.num_queries, c.dim}, rng)}, params).max_relative_error;
  }});
  families.push_back({"matrix learner", [](Rng& rng) {
    double worst = 0.0;
    for (auto kind : {LearnerKind::kCnnTiny, LearnerKind::kCnnBase, LearnerKind::kMlp}) {
      const auto c = ppn_config(rng, kind);
      PairProposalNetwork ppn(c, rng);
      ParameterList all, learner;
      ppn.collect(all);
      ParameterList projector;
      for (auto& l : ppn.subject_projector().layers()) l.collect(projector);
      for (auto& l : ppn.object_projector().layers()) l.collect(projector);
      for (auto* p : all) {
        if (std::find(projector.begin(), projector.end(), p) == projector.end()) learner.push_back(p);
      }
      jitter(learner, rng);
      const std::size_t n = c.num_queries;
      const Tensor w = random_tensor({n * n}, rng);
      auto f = [&](Tape& tape, const std::vector<Var>& x) { return project(ppn.matrix_learner(tape, x[0]), w); };
      worst = std::max(worst, gradcheck(f, {random_tensor({n, n}, rng)}, learner).max_relative_error);
    }
    return worst;
  }});

  std::ostringstream detail;
  bool pass = true;
  Rng rng(2024);
  for (const auto& family : families) {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) worst = std::max(worst, family.instance(rng));
    pass = pass && worst < kGradTolerance;
    detail << family.name << " " << fmt(worst, 2) << ", ";
  }
  double worst = 0.0;
  int redraws = 0;
  for (int i = 0; i < kInstances; ++i) worst = std::max(worst, composite_instance(rng, i, redraws));
  pass = pass && worst < kGradTolerance;
  detail << "composite loss " << fmt(worst, 2) << ", " << redraws << " non-smooth draws replaced";
  const double elapsed = seconds_since(t0);
  pass = pass && elapsed < kGradBudgetSeconds;
  detail << " (max rel. error over " << kInstances << " instances each, tol " << kGradTolerance
         << "; " << fmt(elapsed, 3) << " s of " << kGradBudgetSeconds << " s)";
  return {pass, detail.str()};
}

// ---------------------------------------------------------------- criterion 2

Outcome assignment_optimality() {
  constexpr int kInstances = 200;
  Rng rng(77);
  int assign_ok = 0, match_ok = 0;
  for (int trial = 0; trial < kInstances; ++trial) {
    const std::size_t n = uniform(rng, 1, 5);
    std::vector<int> map(4 * 5), classes(n);
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<int>(i % n) + 1;
    for (auto& c : classes) c = static_cast<int>(uniform(rng, 1, 3));
    const auto scene = testing::make_scene(4, 5, map, classes);
    OracleConfig cfg;
    cfg.num_queries = 6;
    cfg.dim = 8;
    cfg.embedding_noise = 0.5;
    cfg.class_flip = 0.5;
    cfg.mask_perturbation = 0.6;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto table = make_embedding_table(3, cfg.dim, cfg.num_queries, 5);
    const auto qs = oracle_queries(scene, table, cfg).query_set;
    const Tensor cost = assignment_costs(scene, qs);
    if (canonical_cost(cost, assign_queries(scene, qs).query_of_segment) == brute_force_min(cost)) ++assign_ok;

    const std::size_t k = 5, g = uniform(rng, 1, 5);
    const Tensor s = log_softmax_table(random_tensor({k, 4}, rng, -3, 3));
    const Tensor o = log_softmax_table(random_tensor({k, 4}, rng, -3, 3));
    const Tensor r = log_softmax_table(random_tensor({k, 3}, rng, -3, 3));
    std::vector<TripletTarget> targets;
    for (std::size_t t = 0; t < g; ++t) targets.push_back({uniform(rng, 0, 3), uniform(rng, 0, 3), uniform(rng, 1, 2)});
    Tensor match_cost({g, k});
    for (std::size_t t = 0; t < g; ++t) {
      for (std::size_t slot = 0; slot < k; ++slot) {
        match_cost.at(t, slot) = -s.at(slot, targets[t].subject_class) - o.at(slot, targets[t].object_class) -
                                 r.at(slot, targets[t].relation_class);
      }
    }
    if (canonical_cost(match_cost, match_triplets(s, o, r, targets)) == brute_force_min(match_cost)) ++match_ok;
  }
  return {assign_ok == kInstances && match_ok == kInstances,
          "query assignment " + std::to_string(assign_ok) + "/" + std::to_string(kInstances) +
              ", triplet matching " + std::to_string(match_ok) + "/" + std::to_string(kInstances) +
              " equal the enumerated optimum exactly (n <= 5)"};
}

// ---------------------------------------------------------------- criterion 3

Outcome loss_identities() {
  Rng rng(5);
  double focal_gap = 0.0, seesaw_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = uniform(rng, 1, 8), classes = uniform(rng, 2, 7);
    const Tensor z = random_tensor({rows, classes}, rng, -4, 4);
    std::vector<std::size_t> t(rows);
    for (auto& v : t) v = uniform(rng, 0, classes - 1);
    Tape tape(false);
    const double ce = ops::cross_entropy(tape.constant(z), t).value().item();
    RelationLossConfig focal;
    focal.kind = RelationLossKind::kFocal;
    focal.focal_gamma = 0.0;
    focal_gap = std::max(focal_gap, std::abs(RelationLoss(focal, classes)(tape.constant(z), t).value().item() - ce));
    RelationLossConfig seesaw;
    seesaw.seesaw_q = 0.0;
    RelationLoss loss(seesaw, classes);
    loss.set_counts(std::vector<double>(classes, static_cast<double>(uniform(rng, 0, 1000))));
    seesaw_gap = std::max(seesaw_gap, std::abs(loss(tape.constant(z), t).value().item() - ce));
  }
  double ppn_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = uniform(rng, 2, 12), cells = n * n;
    const std::size_t s = uniform(rng, 0, cells);
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Tensor gt({n, n});
    for (std::size_t i = 0; i < s; ++i) gt[order[i]] = 1.0;
    const double p = s == 0 ? 0.0 : static_cast<double>(cells) / static_cast<double>(s);
    const double closed = std::log(2.0) * (static_cast<double>(cells - s) + p * static_cast<double>(s)) /
                          static_cast<double>(cells);
    Tape tape(false);
    ppn_gap = std::max(ppn_gap, std::abs(ppn_loss(tape.constant(Tensor({n, n})), gt).value().item() - closed));
  }
  const bool pass = focal_gap <= kIdentityTolerance && seesaw_gap <= kIdentityTolerance &&
                    ppn_gap <= kIdentityTolerance;
  return {pass, "max |focal(0) - CE| " + fmt(focal_gap, 2) + ", |seesaw(equal, q=0) - CE| " + fmt(seesaw_gap, 2) +
                    ", |L_ppn(0) - closed form| " + fmt(ppn_gap, 2) + " over 50 instances (tol 1e-12)"};
}

// ---------------------------------------------------------------- criterion 4

std::size_t max_matching(const ImagePrediction& p, const PanopticScene& s, const SceneGraph& g,
                         std::size_t k, bool require_relation) {
  const std::size_t n = std::min(k, p.triplets.size());
  auto eligible = [&](std::size_t i, std::size_t t) {
    const auto& pr = p.triplets[i];
    const auto& gt = g.triplets[t];
    if (pr.subject_class != s.segment(gt.subject).object_class ||
        pr.object_class != s.segment(gt.object).object_class) {
      return false;
    }
    if (require_relation && pr.relation_class != gt.relation) return false;
    return mask_iou(p.masks[pr.subject_mask], mask_of(s, gt.subject)) >= 0.5 &&
           mask_iou(p.masks[pr.object_mask], mask_of(s, gt.object)) >= 0.5;
  };
  std::vector<bool> used(g.triplets.size(), false);
  std::function<std::size_t(std::size_t)> best = [&](std::size_t i) -> std::size_t {
    if (i == n) return 0;
    std::size_t b = best(i + 1);
    for (std::size_t t = 0; t < g.triplets.size(); ++t) {
      if (!used[t] && eligible(i, t)) {
        used[t] = true;
        b = std::max(b, 1 + best(i + 1));
        used[t] = false;
      }
    }
    return b;
  };
  return best(0);
}

Outcome metric_oracle() {
  Rng rng(404);
  int agree = 0, checks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // Six 2x2 cells of a 4x6 grid; neighbouring cells merge at random.
    std::vector<int> cell_segment{1, 2, 3, 4, 5, 6};
    for (auto& c : cell_segment) {
      if (uniform(rng, 0, 3) == 0 && c > 1) c -= 1;
    }
    std::vector<int> ids;
    for (int c : cell_segment) if (std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
    std::vector<int> map(24);
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 6; ++x) {
        const int cell = static_cast<int>((y / 2) * 3 + x / 2);
        map[y * 6 + x] = static_cast<int>(std::find(ids.begin(), ids.end(), cell_segment[cell]) - ids.begin()) + 1;
      }
    }
    std::vector<int> classes(ids.size());
    for (auto& c : classes) c = static_cast<int>(uniform(rng, 1, 3));
    const auto s = testing::make_scene(4, 6, map, classes);
    const int n = static_cast<int>(ids.size());
    SceneGraph g;
    std::set<Triplet> used;
    const std::size_t want = uniform(rng, 1, 6);
    for (int attempt = 0; attempt < 200 && g.triplets.size() < want; ++attempt) {
      const Triplet t{static_cast<int>(uniform(rng, 1, n)), static_cast<int>(uniform(rng, 1, 2)),
                      static_cast<int>(uniform(rng, 1, n))};
      if (t.subject != t.object && used.insert(t).second) g.triplets.push_back(t);
    }
    ImagePrediction p = exact_masks(s);
    for (int i = 0; i + 1 < n; ++i) {
      BinaryMask m = mask_of(s, i + 1);
      const BinaryMask o = mask_of(s, i + 2);
      for (std::size_t q = 0; q < m.bits.size(); ++q) m.bits[q] |= o.bits[q];
      p.masks.push_back(m);
    }
    const std::size_t preds = uniform(rng, 1, 10);
    for (std::size_t i = 0; i < preds; ++i) {
      // Half the guesses copy a ground-truth triplet so that matches occur.
      if (!g.triplets.empty() && uniform(rng, 0, 1) == 0) {
        const auto& t = g.triplets[uniform(rng, 0, g.triplets.size() - 1)];
        p.triplets.push_back({static_cast<std::size_t>(t.subject - 1), static_cast<std::size_t>(t.object - 1),
                              s.segment(t.subject).object_class, s.segment(t.object).object_class,
                              static_cast<int>(uniform(rng, 1, 2)), 1.0 - 0.01 * static_cast<double>(i)});
      } else {
        p.triplets.push_back({uniform(rng, 0, p.masks.size() - 1), uniform(rng, 0, p.masks.size() - 1),
                              static_cast<int>(uniform(rng, 1, 3)), static_cast<int>(uniform(rng, 1, 3)),
                              static_cast<int>(uniform(rng, 1, 2)), 1.0 - 0.01 * static_cast<double>(i)});
      }
    }
    for (bool require_relation : {true, false}) {
      for (std::size_t k : {3u, 10u}) {
        MatchOptions options;
        options.require_relation = require_relation;
        const auto r = image_recall(p, s, g, k, options);
        const double expected = static_cast<double>(max_matching(p, s, g, k, require_relation)) /
                                static_cast<double>(g.triplets.size());
        ++checks;
        if (r && *r == expected) ++agree;
      }
    }
  }

  // Fuzzed datasets: monotonicity in K and pair recall bounding recall.
  int ordered = 0, fuzz = 0;
  for (int round = 0; round < 20; ++round) {
    std::vector<PanopticScene> scenes;
    std::vector<SceneGraph> graphs;
    std::vector<ImagePrediction> preds;
    for (int i = 0; i < 10; ++i) {
      scenes.push_back(testing::make_scene(2, 2, {1, 2, 3, 4},
                                           {static_cast<int>(uniform(rng, 1, 2)), static_cast<int>(uniform(rng, 1, 2)),
                                            static_cast<int>(uniform(rng, 1, 2)), static_cast<int>(uniform(rng, 1, 2))}));
      SceneGraph g;
      std::set<Triplet> used;
      for (int t = 0; t < 6; ++t) {
        const Triplet x{static_cast<int>(uniform(rng, 1, 4)), static_cast<int>(uniform(rng, 1, 3)),
                        static_cast<int>(uniform(rng, 1, 4))};
        if (x.subject != x.object && used.insert(x).second) g.triplets.push_back(x);
      }
      graphs.push_back(g);
      ImagePrediction p = exact_masks(scenes.back());
      for (int t = 0; t < 150; ++t) {
        p.triplets.push_back({uniform(rng, 0, 3), uniform(rng, 0, 3), static_cast<int>(uniform(rng, 1, 2)),
                              static_cast<int>(uniform(rng, 1, 2)), static_cast<int>(uniform(rng, 1, 3)),
                              1.0 / (t + 1)});
      }
      preds.push_back(p);
    }
    std::vector<EvaluationImage> images;
    for (std::size_t i = 0; i < scenes.size(); ++i) images.push_back({&scenes[i], &graphs[i], &preds[i]});
    EvaluationOptions opts;
    opts.relation_classes = 3;
    const auto r = evaluate_predictions(images, opts);
    ++fuzz;
    bool ok = r.recall.at(20) <= r.recall.at(50) && r.recall.at(50) <= r.recall.at(100);
    for (std::size_t k : {20u, 50u, 100u}) ok = ok && r.pair_recall.at(k) >= r.recall.at(k);
    if (ok) ++ordered;
  }
  return {agree == checks && ordered == fuzz,
          std::to_string(agree) + "/" + std::to_string(checks) +
              " recall and pair-recall values equal the maximum-matching oracle on 50 instances; " +
              std::to_string(ordered) + "/" + std::to_string(fuzz) + " fuzzed datasets monotone with pair-R >= R"};
}

// ---------------------------------------------------------------- criterion 5

Outcome pipeline_upper_bound(const Dataset& val) {
  TrainConfig c = desk_config();
  c.oracle.embedding_noise = 0.0;
  c.oracle.class_flip = 0.0;
  c.oracle.mask_perturbation = 0.0;
  c.model.num_relation_queries = c.model.num_queries * (c.model.num_queries - 1);
  const auto images = prepare_dataset(val, c);
  PairNet model(c.model, c.seed);
  bool covered = true;
  const SlotOverride inject = [&](const PreparedImage& image, const PairNet::Forward& f) {
    const auto slots = slot_predictions(f, image.queries);
    const std::size_t relations = c.model.relation_classes + 1;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> slot_of_cell;
    std::vector<SlotPrediction> out;
    for (const auto& s : slots) {
      slot_of_cell[{s.subject_query, s.object_query}] = s.slot;
      SlotPrediction none = s;
      none.relation_probs.assign(relations, 0.0);
      none.relation_probs[0] = 1.0;
      out.push_back(none);
    }
    for (const auto& t : image.graph->triplets) {
      const auto it = slot_of_cell.find({image.assignment.query(t.subject), image.assignment.query(t.object)});
      if (it == slot_of_cell.end()) {
        covered = false;
        continue;
      }
      SlotPrediction labeled = slots[it->second];
      labeled.slot = out.size();
      labeled.relation_probs.assign(relations, 0.0);
      labeled.relation_probs[static_cast<std::size_t>(t.relation)] = 1.0;
      out.push_back(labeled);
    }
    return out;
  };
  const auto ev = evaluate_model(model, images, c, c.eval_ks, false, inject);
  bool pass = covered && ev.report.pq && *ev.report.pq == 1.0 && images.size() == val.scenes.size();
  std::ostringstream detail;
  for (std::size_t k : c.eval_ks) {
    pass = pass && ev.report.recall.at(k) == 1.0;
    detail << "R@" << k << " " << ev.report.recall.at(k) << ", ";
  }
  detail << "PQ " << (ev.report.pq ? *ev.report.pq : -1.0) << " on " << images.size()
         << " scenes (noiseless oracle, injected relation labels)";
  return {pass, detail.str()};
}

// ---------------------------------------------------------------- criteria 6-9

struct DeskRuns {
  TrainResult weighted;
  TrainResult unit;
};

double final_pair_recall(const RunRecord& r) { return r.epochs.back().validation->pair_recall.at(20); }

Outcome desk_learning(const TrainResult& run, const Dataset& val, std::size_t num_queries) {
  const auto& r = run.record;
  const double untrained = r.initial_validation->pair_recall.at(20);
  const double pair = final_pair_recall(r);
  const double recall = r.epochs.back().validation->recall.at(20);
  const double baseline = random_pair_baseline(val, 20, num_queries);
  const double ppn_first = r.epochs.front().mean_ppn, ppn_last = r.epochs.back().mean_ppn;
  const double drop = 1.0 - ppn_last / ppn_first;
  const bool a = pair >= 3.0 * untrained && pair >= 5.0 * baseline;
  const bool b = recall >= 0.5 * pair;
  const bool c = drop >= 0.5;
  std::ostringstream d;
  d << "(a) " << (a ? "pass" : "FAIL") << " pair-R@20 " << fmt(pair) << " vs untrained " << fmt(untrained)
    << " (x" << fmt(pair / untrained, 3) << ", need 3) and random baseline " << fmt(baseline) << " (x"
    << fmt(pair / baseline, 3) << ", need 5); (b) " << (b ? "pass" : "FAIL") << " R@20 " << fmt(recall)
    << " = " << fmt(recall / pair, 3) << " x pair-R@20 (need 0.5); (c) " << (c ? "pass" : "FAIL")
    << " L_ppn " << fmt(ppn_first) << " -> " << fmt(ppn_last) << " (-" << fmt(100.0 * drop, 3)
    << "%, need 50%); " << r.steps.size() << " steps, " << fmt(r.wall_clock_seconds, 4) << " s";
  return {a && b && c, d.str()};
}

Outcome positive_weight_ablation(const DeskRuns& runs) {
  const double weighted = final_pair_recall(runs.weighted.record);
  const double unit = final_pair_recall(runs.unit.record);
  return {unit <= 0.5 * weighted, "pair-R@20 with p = 1: " + fmt(unit) + " vs weighted " + fmt(weighted) +
                                      " (ratio " + fmt(unit / weighted, 3) + ", need <= 0.5)"};
}

bool same_steps(const RunRecord& a, const RunRecord& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto &x = a.steps[i], &y = b.steps[i];
    if (x.total != y.total || x.subject != y.subject || x.object != y.object || x.relation != y.relation ||
        x.ppn != y.ppn) {
      return false;
    }
  }
  return true;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism_and_persistence(const DeskRuns& runs, const Dataset& train_data, const Dataset& val) {
  TrainConfig c = desk_config();
  c.epochs = 1;
  c.evaluate_each_epoch = false;
  Dataset subset = train_data;
  subset.scenes.resize(64);
  subset.graphs.resize(64);
  const auto first = train(c, subset, nullptr);
  const auto second = train(c, subset, nullptr);
  const bool deterministic = same_steps(first.record, second.record) && !first.record.steps.empty();

  TrainConfig desk = desk_config();
  const fs::path dir = fs::temp_directory_path() / "pairnet_acceptance";
  fs::remove_all(dir);
  save_run(dir.string(), *runs.weighted.model, desk, runs.weighted.record);
  const TrainConfig reloaded_cfg = load_config((dir / kConfigFile).string());
  auto reloaded = load_model((dir / kCheckpointFile).string(), reloaded_cfg);
  const auto images = prepare_dataset(val, desk);
  const auto before = evaluate_model(*runs.weighted.model, images, desk, desk.eval_ks, true);
  const auto after = evaluate_model(*reloaded, images, reloaded_cfg, desk.eval_ks, true);
  const bool checkpoint = before.report == after.report &&
                          config_to_json(reloaded_cfg) == config_to_json(desk);

  bool json_ok = report_from_json(report_to_json(before.report)) == before.report;
  const std::string dataset_text = dataset_to_json(val);
  json_ok = json_ok && dataset_to_json(parse_dataset(dataset_text).dataset) == dataset_text;
  save_predictions((dir / "predictions.json").string(), before);
  const auto loaded = load_predictions((dir / "predictions.json").string());
  json_ok = json_ok && report_predictions(loaded, val, desk.eval_ks, true) == before.report;
  const auto run_json = nlohmann::json::parse(read_file(dir / kRunFile));
  json_ok = json_ok && run_json == run_record_to_json(runs.weighted.record);

  const auto inspected = inspect_image(*reloaded, images.front(), val, (dir / "inspect").string());
  std::size_t pgms = 0;
  bool pgm_ok = true;
  for (const auto& f : inspected.files) {
    if (fs::path(f).extension() == ".pgm") {
      ++pgms;
      const std::string bytes = read_file(f);
      pgm_ok = pgm_ok && encode_pgm(decode_pgm(bytes)) == bytes;
    } else {
      json_ok = json_ok && nlohmann::json::parse(read_file(f)) == inspected.sidecar;
    }
  }
  pgm_ok = pgm_ok && pgms == 5;
  fs::remove_all(dir);

  std::ostringstream d;
  d << "same-seed loss sequence " << (deterministic ? "identical" : "DIFFERS") << " over "
    << first.record.steps.size() << " steps; checkpoint reload report " << (checkpoint ? "identical" : "DIFFERS")
    << "; " << pgms << " PGM files " << (pgm_ok ? "re-parse losslessly" : "FAIL to re-parse")
    << "; JSON artifacts " << (json_ok ? "re-parse losslessly" : "FAIL to re-parse");
  return {deterministic && checkpoint && pgm_ok && json_ok, d.str()};
}

Outcome duplicate_resistance(const Dataset& val) {
  std::size_t checked = 0, exact = 0;
  for (std::size_t i = 0; i < val.scenes.size(); ++i) {
    const auto& s = val.scenes[i];
    const auto& g = val.graphs[i];
    for (const auto& t : g.triplets) {
      ImagePrediction p = exact_masks(s);
      for (int r = 0; r < 20; ++r) {
        p.triplets.push_back({static_cast<std::size_t>(t.subject - 1),
                              static_cast<std::size_t>(t.object - 1), s.segment(t.subject).object_class,
                              s.segment(t.object).object_class, t.relation, 0.9});
      }
      ++checked;
      const auto recall = image_recall(p, s, g, 20);
      if (recall && *recall == 1.0 / static_cast<double>(g.triplets.size())) ++exact;
    }
  }
  return {checked > 0 && exact == checked, std::to_string(exact) + "/" + std::to_string(checked) +
                                               " repeated-triplet lists score exactly 1/|GT| at K = 20"};
}

void print(int index, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << index << " " << name << ": " << o.detail << std::endl;
}

}  // namespace

// Runs every criterion, or only those whose numbers are given as arguments.
int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const auto wanted = [&](int index) { return selected.empty() || selected.count(index) > 0; };
  int failures = 0, ran = 0;
  auto run = [&](int index, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(index)) return;
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    print(index, name, o);
  };

  run(1, "gradient integrity", gradient_integrity);
  run(2, "assignment optimality", assignment_optimality);
  run(3, "loss identities", loss_identities);
  run(4, "metric oracle", metric_oracle);

  const auto split = split_dataset(synthesize(SynthConfig{}), SynthConfig{}.val_scenes);
  run(5, "pipeline upper bound", [&] { return pipeline_upper_bound(split.val); });

  std::optional<DeskRuns> runs;
  if (wanted(6) || wanted(7) || wanted(8)) try {
    TrainConfig c = desk_config();
    auto progress = [](const std::string& m) { std::cerr << "  " << m << "\n"; };
    std::cerr << "desk run, dynamic positive weight\n";
    auto weighted = train(c, split.train, &split.val, progress);
    c.unit_positive_weight = true;
    std::cerr << "desk run, positive weight 1\n";
    auto unit = train(c, split.train, &split.val, progress);
    runs = DeskRuns{std::move(weighted), std::move(unit)};
  } catch (const std::exception& e) {
    std::cerr << "desk training failed: " << e.what() << "\n";
  }
  const auto need_runs = [&]() -> const DeskRuns& {
    if (!runs) throw std::runtime_error("desk training failed");
    return *runs;
  };
  run(6, "desk-scale learning",
      [&] { return desk_learning(need_runs().weighted, split.val, desk_config().model.num_queries); });
  run(7, "positive-weight ablation", [&] { return positive_weight_ablation(need_runs()); });
  run(8, "determinism and persistence",
      [&] { return determinism_and_persistence(need_runs(), split.train, split.val); });
  run(9, "duplicate resistance", [&] { return duplicate_resistance(split.val); });

  std::cout << (ran - failures) << "/" << ran << " criteria passed" << std::endl;
  return failures;
}
