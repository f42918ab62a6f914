#pragma once

// Teacher fine-tuning, response-based distillation over cross-validation
// folds (sequential and binary-relevance schedules, optionally with hidden
// state alignment), and a TF-IDF classifier-chains baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distillkit/corpus.hpp"
#include "distillkit/error.hpp"
#include "distillkit/losses.hpp"
#include "distillkit/model.hpp"
#include "distillkit/parallel.hpp"
#include "distillkit/predictions.hpp"
#include "distillkit/random.hpp"

namespace distillkit {

enum class Variant {
  sequential_kd,
  binary_relevance_kd,
  sequential_kd_contrastive,
  binary_relevance_kd_contrastive,
  classifier_chains_baseline,
};

inline constexpr std::array<std::pair<Variant, std::string_view>, 5> kVariantNames{{
    {Variant::sequential_kd, "sequential_kd"},
    {Variant::binary_relevance_kd, "binary_relevance_kd"},
    {Variant::sequential_kd_contrastive, "sequential_kd_contrastive"},
    {Variant::binary_relevance_kd_contrastive, "binary_relevance_kd_contrastive"},
    {Variant::classifier_chains_baseline, "classifier_chains_baseline"},
}};

inline std::string_view to_string(Variant v) {
  for (const auto& [value, name] : kVariantNames)
    if (value == v) return name;
  return "unknown";
}

inline Variant parse_variant(std::string_view name) {
  for (const auto& [value, n] : kVariantNames)
    if (n == name) return value;
  throw UsageError("unknown training mode: " + std::string(name));
}

inline constexpr double kDefaultContrastiveWeight = 0.5;

class TrainingMode {
 public:
  TrainingMode() = default;

  // The contrastive weight exists only for contrastive variants; it defaults
  // to 0.5 there and must be absent otherwise.
  explicit TrainingMode(Variant v, std::optional<double> contrastive_weight = std::nullopt) : variant_(v) {
    if (is_contrastive()) {
      beta_ = contrastive_weight.value_or(kDefaultContrastiveWeight);
      if (!(*beta_ >= 0.0 && *beta_ <= 1.0)) throw UsageError("contrastive weight must lie in [0, 1]");
    } else if (contrastive_weight) {
      throw UsageError("contrastive weight given for non-contrastive mode " + std::string(to_string(v)));
    }
  }

  Variant variant() const noexcept { return variant_; }
  std::optional<double> contrastive_weight() const noexcept { return beta_; }

  bool is_contrastive() const noexcept {
    return variant_ == Variant::sequential_kd_contrastive || variant_ == Variant::binary_relevance_kd_contrastive;
  }
  bool is_sequential() const noexcept {
    return variant_ == Variant::sequential_kd || variant_ == Variant::sequential_kd_contrastive;
  }
  bool is_baseline() const noexcept { return variant_ == Variant::classifier_chains_baseline; }

  friend bool operator==(const TrainingMode&, const TrainingMode&) = default;

 private:
  Variant variant_ = Variant::sequential_kd;
  std::optional<double> beta_;
};

// Step size actually applied is learning_rate * lr_scale. The tuned learning
// rates (1e-5 .. 1e-3) are sized for fine-tuning large pretrained encoders;
// the small from-scratch encoders here need steps about 1e4 times larger.
inline constexpr double kDefaultLrScale = 1e4;
// The linear chain links see unit-norm TF-IDF rows directly and need larger
// steps still.
inline constexpr double kDefaultChainLrScale = 3e5;

struct TrainerOptions {
  double lr_scale = kDefaultLrScale;
  double chain_lr_scale = kDefaultChainLrScale;
  std::vector<std::size_t> label_order;  // empty: vocabulary order
  std::size_t workers = 1;               // concurrent folds
  bool hard_only_student = false;        // train the student on labels alone, no teacher
};

struct DistillOutput {
  PredictionSet student;
  PredictionSet teacher;  // empty when the teacher is skipped
};

namespace detail {

inline std::vector<std::size_t> resolve_label_order(const TrainerOptions& opts, std::size_t num_labels) {
  if (opts.label_order.empty()) {
    std::vector<std::size_t> order(num_labels);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
  }
  std::vector<std::size_t> sorted = opts.label_order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t j = 0; j < sorted.size(); ++j)
    if (sorted[j] != j || sorted.size() != num_labels)
      throw UsageError("label order must be a permutation of 0.." + std::to_string(num_labels - 1));
  return opts.label_order;
}

// Stream tags for derive_seed.
enum : std::uint64_t {
  kTeacherInit = 0x7e1,
  kStudentInit = 0x5e1,
  kProjectionInit = 0x9e1,
  kTeacherShuffle = 0x7e2,
  kStudentShuffle = 0x5e2,
  kChainShuffle = 0xcc2,
};

// Mini-batches of an epoch: a seeded shuffle, last partial batch kept.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({seed, epoch}));
  shuffle(std::span(order), rng);
  return order;
}

template <typename Fn>
void for_each_batch(std::span<const std::size_t> order, std::size_t batch_size, Fn&& fn) {
  for (std::size_t start = 0; start < order.size(); start += batch_size)
    fn(order.subspan(start, std::min(batch_size, order.size() - start)));
}

}  // namespace detail

inline void check_training_inputs(std::span<const SparseVector> features, std::span<const std::uint8_t> targets,
                                  const DistillConfig& cfg) {
  cfg.validate();
  if (features.empty()) throw DataError("training split is empty");
  if (features.size() != targets.size()) throw InvariantError("features and targets differ in length");
}

// Hard-loss fine-tuning of one label head and the shared encoder. Returns the
// mean training loss of each epoch (measured before each batch's update).
inline std::vector<double> fit_teacher(ModelState& teacher, std::span<const SparseVector> features,
                                       std::span<const std::uint8_t> targets, std::size_t label,
                                       const DistillConfig& cfg, double lr_scale, std::uint64_t seed) {
  check_training_inputs(features, targets, cfg);
  const double step = cfg.learning_rate * lr_scale;
  auto grads = Gradients::zeros_like(teacher);
  std::vector<double> epoch_loss;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(features.size(), seed, epoch);
    double total = 0.0;
    detail::for_each_batch(order, cfg.batch_size, [&](std::span<const std::size_t> batch) {
      grads.clear();
      for (auto i : batch) {
        const auto trace = forward_trace(teacher, features[i], label);
        total += hard_loss(trace.logits, targets[i]);
        backward(teacher, features[i], trace, label, hard_loss_grad(trace.logits, targets[i]), grads);
      }
      grads.scale(1.0 / static_cast<double>(batch.size()));
      apply_sgd(teacher, grads, step);
    });
    epoch_loss.push_back(total / static_cast<double>(features.size()));
  }
  return epoch_loss;
}

inline ModelState train_teacher(std::span<const SparseVector> features, std::span<const std::uint8_t> targets,
                                std::size_t label, ModelState teacher, const DistillConfig& cfg,
                                double lr_scale = kDefaultLrScale, std::uint64_t seed = 0) {
  fit_teacher(teacher, features, targets, label, cfg, lr_scale, seed);
  return teacher;
}

// Frozen-teacher outputs over the training split, computed once per label.
struct TeacherSignals {
  std::vector<Logits> logits;
  std::vector<std::vector<double>> hidden;
};

inline TeacherSignals teacher_signals(const ModelState& teacher, std::span<const SparseVector> features,
                                      std::size_t label, bool keep_hidden) {
  TeacherSignals s;
  s.logits.reserve(features.size());
  for (const auto& x : features) {
    auto r = forward(teacher, x, label);
    s.logits.push_back(r.logits);
    if (keep_hidden) s.hidden.push_back(std::move(r.hidden));
  }
  return s;
}

inline Matrix init_projection(std::size_t teacher_width, std::size_t student_width, std::uint64_t seed) {
  Matrix p(teacher_width, student_width);
  Rng rng(derive_seed({seed, 0x9e0ULL}));
  const double a = glorot_bound(student_width, teacher_width);
  for (auto& w : p.data) w = rng.uniform(-a, a);
  return p;
}

struct StudentObjective {
  const TeacherSignals* teacher = nullptr;  // null: hard loss only
  Matrix* projection = nullptr;             // non-null: add hidden-state alignment
  double contrastive_weight = 0.0;
};

// Student training for one label. Per example the loss is kd_loss against the
// frozen teacher (or hard_loss without one); with a projection it becomes
// (1 - beta) * kd_loss + beta * contrastive_loss and P is trained jointly.
inline std::vector<double> fit_student(ModelState& student, std::span<const SparseVector> features,
                                       std::span<const std::uint8_t> targets, std::size_t label,
                                       const DistillConfig& cfg, const StudentObjective& objective,
                                       double lr_scale, std::uint64_t seed) {
  check_training_inputs(features, targets, cfg);
  const auto* teacher = objective.teacher;
  if (teacher && teacher->logits.size() != features.size()) throw InvariantError("teacher signals misaligned");
  Matrix* projection = objective.projection;
  if (projection && (!teacher || teacher->hidden.size() != features.size()))
    throw InvariantError("contrastive training needs teacher hidden states");
  const double beta = projection ? objective.contrastive_weight : 0.0;
  const double step = cfg.learning_rate * lr_scale;

  auto grads = Gradients::zeros_like(student);
  Matrix projection_grad = projection ? Matrix(projection->rows, projection->cols) : Matrix();
  std::vector<double> extra;
  std::vector<double> epoch_loss;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(features.size(), seed, epoch);
    double total = 0.0;
    detail::for_each_batch(order, cfg.batch_size, [&](std::span<const std::size_t> batch) {
      grads.clear();
      std::fill(projection_grad.data.begin(), projection_grad.data.end(), 0.0);
      for (auto i : batch) {
        const auto& x = features[i];
        const auto y = targets[i];
        const auto trace = forward_trace(student, x, label);
        double loss;
        Logits dlogits;
        if (teacher) {
          loss = kd_loss(trace.logits, teacher->logits[i], y, cfg);
          dlogits = kd_loss_grad(trace.logits, teacher->logits[i], y, cfg);
        } else {
          loss = hard_loss(trace.logits, y);
          dlogits = hard_loss_grad(trace.logits, y);
        }
        if (projection) {
          const auto cg = contrastive_loss_grad(trace.hidden(), teacher->hidden[i], *projection);
          loss = (1.0 - beta) * loss + beta * cg.loss;
          dlogits = {(1.0 - beta) * dlogits[0], (1.0 - beta) * dlogits[1]};
          extra.resize(cg.d_student_hidden.size());
          for (std::size_t h = 0; h < extra.size(); ++h) extra[h] = beta * cg.d_student_hidden[h];
          for (std::size_t k = 0; k < projection_grad.data.size(); ++k)
            projection_grad.data[k] += beta * cg.d_projection.data[k];
          backward(student, x, trace, label, dlogits, grads, extra);
        } else {
          backward(student, x, trace, label, dlogits, grads);
        }
        total += loss;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      grads.scale(inv);
      apply_sgd(student, grads, step);
      if (projection) {
        for (std::size_t k = 0; k < projection->data.size(); ++k) {
          projection->data[k] -= step * (projection_grad.data[k] * inv);
          if (!std::isfinite(projection->data[k])) throw InvariantError("non-finite projection after update");
        }
      }
    });
    epoch_loss.push_back(total / static_cast<double>(features.size()));
  }
  return epoch_loss;
}

namespace detail {

inline std::vector<std::uint8_t> label_column(const Corpus& corpus, std::span<const std::size_t> positions,
                                              std::size_t label) {
  std::vector<std::uint8_t> y;
  y.reserve(positions.size());
  for (auto p : positions) y.push_back(corpus.documents[p].labels[label]);
  return y;
}

inline void check_folds(const Corpus& corpus, const FoldAssignment& folds) {
  if (corpus.empty()) throw DataError("corpus is empty");
  if (corpus.vocab.empty()) throw DataError("corpus has no labels");
  if (folds.folds.size() != corpus.size() || folds.k < 2) throw DataError("fold assignment does not cover the corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (folds.doc_ids[i] != corpus.documents[i].id) throw DataError("fold assignment does not match corpus order");
    if (folds.folds[i] >= folds.k) throw DataError("fold index out of range");
  }
}

// Preallocated records in (corpus order, label) layout; each (fold, label)
// pair writes its own disjoint slots, so folds can run concurrently.
inline PredictionSet empty_predictions(const Corpus& corpus, const FoldAssignment& folds) {
  PredictionSet p{corpus.vocab, {}};
  const std::size_t num_labels = corpus.vocab.size();
  p.records.resize(corpus.size() * num_labels);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t j = 0; j < num_labels; ++j) {
      auto& r = p.records[i * num_labels + j];
      r.doc_id = corpus.documents[i].id;
      r.label = j;
      r.truth = corpus.documents[i].labels[j];
      r.fold = folds.folds[i];
    }
  return p;
}

struct FoldData {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  FeatureMatrix train_features;
  FeatureMatrix validation_features;
};

// IDF is fitted on the training portion only.
inline FoldData prepare_fold(const Corpus& corpus, const FoldAssignment& folds, std::size_t fold, std::size_t dim,
                             std::size_t max_length) {
  FoldData d;
  d.train = folds.complement(fold);
  d.validation = folds.members(fold);
  if (d.train.empty()) throw DataError("fold " + std::to_string(fold) + " leaves an empty training split");
  TfidfFeaturizer featurizer(dim, max_length);
  const auto train_corpus = corpus.subset(d.train);
  featurizer.fit(train_corpus);
  d.train_features = featurizer.transform(train_corpus);
  d.validation_features = featurizer.transform(corpus.subset(d.validation));
  return d;
}

}  // namespace detail

// Cross-validated distillation. Sequential variants keep one teacher and one
// student per fold and carry their encoders from label to label; binary
// relevance variants start every (fold, label) pair from fresh models drawn
// with the same per-fold seeds.
inline DistillOutput distill(const Corpus& corpus, const FoldAssignment& folds, const EncoderSpec& teacher_spec,
                             const EncoderSpec& student_spec, const DistillConfig& cfg, const TrainingMode& mode,
                             std::uint64_t seed, const TrainerOptions& opts = {}) {
  if (mode.is_baseline()) throw UsageError("the classifier-chains baseline is not a distillation mode");
  cfg.validate();
  teacher_spec.validate();
  student_spec.validate();
  if (teacher_spec.input_dim != student_spec.input_dim)
    throw UsageError("teacher and student must share the featurization (input_dim)");
  detail::check_folds(corpus, folds);
  const auto order = detail::resolve_label_order(opts, corpus.vocab.size());
  const std::size_t num_labels = corpus.vocab.size();
  const bool use_teacher = !opts.hard_only_student;
  const bool contrastive = mode.is_contrastive() && use_teacher;

  DistillOutput out;
  out.student = detail::empty_predictions(corpus, folds);
  if (use_teacher) out.teacher = detail::empty_predictions(corpus, folds);

  parallel_for(folds.k, opts.workers, [&](std::size_t fold) {
    const auto data = detail::prepare_fold(corpus, folds, fold, teacher_spec.input_dim, cfg.max_length);
    const auto& x_train = data.train_features.rows;
    const auto& x_val = data.validation_features.rows;

    ModelState teacher, student;
    Matrix projection;
    auto fresh_models = [&] {
      if (use_teacher) teacher = init_model(teacher_spec, num_labels, derive_seed({seed, fold, detail::kTeacherInit}));
      student = init_model(student_spec, num_labels, derive_seed({seed, fold, detail::kStudentInit}));
      if (contrastive)
        projection = init_projection(teacher_spec.output_width(), student_spec.output_width(),
                                     derive_seed({seed, fold, detail::kProjectionInit}));
    };
    if (mode.is_sequential()) fresh_models();

    for (auto label : order) {
      if (!mode.is_sequential()) fresh_models();
      const auto y = detail::label_column(corpus, data.train, label);
      TeacherSignals signals;
      StudentObjective objective;
      if (use_teacher) {
        fit_teacher(teacher, x_train, y, label, cfg, opts.lr_scale,
                    derive_seed({seed, fold, label, detail::kTeacherShuffle}));
        signals = teacher_signals(teacher, x_train, label, contrastive);
        objective.teacher = &signals;
        if (contrastive) {
          objective.projection = &projection;
          objective.contrastive_weight = *mode.contrastive_weight();
        }
      }
      fit_student(student, x_train, y, label, cfg, objective, opts.lr_scale,
                  derive_seed({seed, fold, label, detail::kStudentShuffle}));

      for (std::size_t v = 0; v < data.validation.size(); ++v) {
        const auto slot = data.validation[v] * num_labels + label;
        out.student.records[slot].probability = predict_proba(student, x_val[v], label);
        if (use_teacher) out.teacher.records[slot].probability = predict_proba(teacher, x_val[v], label);
      }
    }
  });
  return out;
}

inline DistillOutput distill_sequential(const Corpus& corpus, const FoldAssignment& folds,
                                        const EncoderSpec& teacher_spec, const EncoderSpec& student_spec,
                                        const DistillConfig& cfg, std::uint64_t seed, const TrainerOptions& opts = {},
                                        std::optional<double> contrastive_weight = std::nullopt) {
  const TrainingMode mode(contrastive_weight ? Variant::sequential_kd_contrastive : Variant::sequential_kd,
                          contrastive_weight);
  return distill(corpus, folds, teacher_spec, student_spec, cfg, mode, seed, opts);
}

inline DistillOutput distill_binary_relevance(const Corpus& corpus, const FoldAssignment& folds,
                                              const EncoderSpec& teacher_spec, const EncoderSpec& student_spec,
                                              const DistillConfig& cfg, std::uint64_t seed,
                                              const TrainerOptions& opts = {},
                                              std::optional<double> contrastive_weight = std::nullopt) {
  const TrainingMode mode(
      contrastive_weight ? Variant::binary_relevance_kd_contrastive : Variant::binary_relevance_kd,
      contrastive_weight);
  return distill(corpus, folds, teacher_spec, student_spec, cfg, mode, seed, opts);
}

// ---------------------------------------------------------------------------
// Classifier chains over TF-IDF with logistic-loss linear models.

struct ChainLink {
  std::vector<double> feature_weight;  // one per hashed feature
  std::vector<double> chain_weight;    // one per earlier label in the chain
  double bias = 0.0;

  double score(const SparseVector& x, std::span<const double> chain) const {
    double z = bias;
    for (const auto& e : x.entries) z += feature_weight[e.index] * e.weight;
    for (std::size_t c = 0; c < chain.size(); ++c) z += chain_weight[c] * chain[c];
    return z;
  }

  double probability(const SparseVector& x, std::span<const double> chain) const {
    const double z = score(x, chain);
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
};

inline constexpr double kDecisionThreshold = 0.5;

// Trains one link with mini-batch gradient descent on mean logistic loss.
// chain_inputs holds, per training example, the bits of earlier labels.
inline ChainLink fit_chain_link(std::span<const SparseVector> features,
                                std::span<const std::vector<double>> chain_inputs,
                                std::span<const std::uint8_t> targets, std::size_t dim, const DistillConfig& cfg,
                                double lr_scale, std::uint64_t seed) {
  check_training_inputs(features, targets, cfg);
  const std::size_t chain_len = chain_inputs.empty() ? 0 : chain_inputs.front().size();
  ChainLink link{std::vector<double>(dim, 0.0), std::vector<double>(chain_len, 0.0), 0.0};
  const double step = cfg.learning_rate * lr_scale;

  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<std::uint32_t> rows;
  std::vector<double> g_feature, g_chain(chain_len);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(features.size(), seed, epoch);
    detail::for_each_batch(order, cfg.batch_size, [&](std::span<const std::size_t> batch) {
      slot.clear();
      rows.clear();
      g_feature.clear();
      std::fill(g_chain.begin(), g_chain.end(), 0.0);
      double g_bias = 0.0;
      for (auto i : batch) {
        const std::span<const double> chain =
            chain_len ? std::span<const double>(chain_inputs[i]) : std::span<const double>();
        const double residual = link.probability(features[i], chain) - static_cast<double>(targets[i]);
        for (const auto& e : features[i].entries) {
          auto [it, inserted] = slot.try_emplace(e.index, rows.size());
          if (inserted) {
            rows.push_back(e.index);
            g_feature.push_back(0.0);
          }
          g_feature[it->second] += residual * e.weight;
        }
        for (std::size_t c = 0; c < chain_len; ++c) g_chain[c] += residual * chain[c];
        g_bias += residual;
      }
      const double scale = step / static_cast<double>(batch.size());
      for (std::size_t s = 0; s < rows.size(); ++s) link.feature_weight[rows[s]] -= scale * g_feature[s];
      for (std::size_t c = 0; c < chain_len; ++c) link.chain_weight[c] -= scale * g_chain[c];
      link.bias -= scale * g_bias;
    });
  }
  return link;
}

// Per fold, label j's link sees TF-IDF features plus labels 0..j-1 of the
// chain order: the true bits while training, its own predicted bits on the
// validation fold.
inline PredictionSet baseline_classifier_chains(const Corpus& corpus, const FoldAssignment& folds,
                                                const DistillConfig& cfg, std::size_t dim, std::uint64_t seed,
                                                const TrainerOptions& opts = {}) {
  cfg.validate();
  detail::check_folds(corpus, folds);
  const auto order = detail::resolve_label_order(opts, corpus.vocab.size());
  const std::size_t num_labels = corpus.vocab.size();
  auto out = detail::empty_predictions(corpus, folds);

  parallel_for(folds.k, opts.workers, [&](std::size_t fold) {
    const auto data = detail::prepare_fold(corpus, folds, fold, dim, cfg.max_length);
    std::vector<std::vector<double>> chain_train(data.train.size());
    std::vector<std::vector<double>> chain_val(data.validation.size());
    for (auto label : order) {
      const auto y = detail::label_column(corpus, data.train, label);
      const auto link = fit_chain_link(data.train_features.rows, chain_train, y, dim, cfg, opts.chain_lr_scale,
                                       derive_seed({seed, fold, label, detail::kChainShuffle}));
      for (std::size_t v = 0; v < data.validation.size(); ++v) {
        const double p = link.probability(data.validation_features.rows[v], chain_val[v]);
        out.records[data.validation[v] * num_labels + label].probability = p;
        chain_val[v].push_back(p >= kDecisionThreshold ? 1.0 : 0.0);
      }
      for (std::size_t t = 0; t < data.train.size(); ++t) chain_train[t].push_back(static_cast<double>(y[t]));
    }
  });
  return out;
}

}  // namespace distillkit
