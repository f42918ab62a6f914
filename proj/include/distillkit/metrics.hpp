#pragma once

// Multi-label evaluation: confusion counts, precision/recall/F1,
// example-based F1, micro/macro/weighted F1 and per-label AUC.
//
// Conventions: a label is predicted when its probability is >= 0.5; any 0/0
// quotient in precision, recall or F1 is 0; a document whose true and
// predicted label sets are both empty scores example-F1 1; AUC is absent for
// a label without both classes.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "distillkit/distill.hpp"
#include "distillkit/error.hpp"
#include "distillkit/predictions.hpp"

namespace distillkit {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct PrecisionRecallF1 {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  friend bool operator==(const PrecisionRecallF1&, const PrecisionRecallF1&) = default;
};

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// F1 = 2PR / (P + R), evaluated as 2TP / (2TP + FP + FN) so every score is a
// single rounded quotient of counts.
inline PrecisionRecallF1 prf1(const ConfusionCounts& c) {
  PrecisionRecallF1 r;
  r.precision = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = safe_ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.f1 = safe_ratio(2.0 * static_cast<double>(c.tp), static_cast<double>(2 * c.tp + c.fp + c.fn));
  return r;
}

// Dense document x label view of a PredictionSet. Documents are sorted by id
// so every aggregate is independent of record order.
struct LabelMatrix {
  std::vector<std::string> doc_ids;
  std::size_t num_labels = 0;
  std::vector<double> probability;  // doc-major
  std::vector<std::uint8_t> truth;

  std::size_t docs() const noexcept { return doc_ids.size(); }
  double prob(std::size_t d, std::size_t j) const { return probability[d * num_labels + j]; }
  bool actual(std::size_t d, std::size_t j) const { return truth[d * num_labels + j] != 0; }
  bool predicted(std::size_t d, std::size_t j) const { return prob(d, j) >= kDecisionThreshold; }
};

inline LabelMatrix to_matrix(const PredictionSet& p) {
  if (p.empty()) throw DataError("prediction set is empty");
  validate_complete(p);
  LabelMatrix m;
  m.num_labels = p.vocab.size();
  std::map<std::string, std::size_t> rank;
  for (const auto& r : p.records) rank.emplace(r.doc_id, 0);
  std::size_t next = 0;
  for (auto& [id, pos] : rank) {
    pos = next++;
    m.doc_ids.push_back(id);
  }
  m.probability.assign(m.docs() * m.num_labels, 0.0);
  m.truth.assign(m.docs() * m.num_labels, 0);
  for (const auto& r : p.records) {
    const auto slot = rank[r.doc_id] * m.num_labels + r.label;
    m.probability[slot] = r.probability;
    m.truth[slot] = r.truth;
  }
  return m;
}

inline ConfusionCounts label_counts(const LabelMatrix& m, std::size_t label) {
  ConfusionCounts c;
  for (std::size_t d = 0; d < m.docs(); ++d) {
    const bool y = m.actual(d, label), yhat = m.predicted(d, label);
    if (y && yhat) ++c.tp;
    else if (!y && yhat) ++c.fp;
    else if (y && !yhat) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double example_f1(const LabelMatrix& m) {
  double sum = 0.0;
  for (std::size_t d = 0; d < m.docs(); ++d) {
    std::size_t both = 0, actual = 0, predicted = 0;
    for (std::size_t j = 0; j < m.num_labels; ++j) {
      both += m.actual(d, j) && m.predicted(d, j);
      actual += m.actual(d, j);
      predicted += m.predicted(d, j);
    }
    sum += actual + predicted == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(actual + predicted);
  }
  return sum / static_cast<double>(m.docs());
}

inline double micro_f1(const LabelMatrix& m) {
  ConfusionCounts pooled;
  for (std::size_t j = 0; j < m.num_labels; ++j) pooled += label_counts(m, j);
  return prf1(pooled).f1;
}

inline double macro_f1(const LabelMatrix& m) {
  double sum = 0.0;
  for (std::size_t j = 0; j < m.num_labels; ++j) sum += prf1(label_counts(m, j)).f1;
  return sum / static_cast<double>(m.num_labels);
}

// Support-weighted mean of per-label F1. The default weights are
// positives_j / sum_k positives_k; `per_document` uses positives_j / #docs
// instead, whose weights need not sum to 1 on multi-label data.
enum class WeightScheme { support_normalized, per_document };

inline double weighted_f1(const LabelMatrix& m, WeightScheme scheme = WeightScheme::support_normalized) {
  std::vector<std::size_t> support(m.num_labels, 0);
  std::size_t total = 0;
  for (std::size_t j = 0; j < m.num_labels; ++j) {
    const auto c = label_counts(m, j);
    support[j] = c.tp + c.fn;
    total += support[j];
  }
  const double denom = scheme == WeightScheme::support_normalized ? static_cast<double>(total)
                                                                  : static_cast<double>(m.docs());
  if (denom == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < m.num_labels; ++j) {
    const double w = static_cast<double>(support[j]) / denom;
    sum += w * prf1(label_counts(m, j)).f1;
  }
  return sum;
}

struct ScoredLabel {
  double score = 0.0;
  std::uint8_t truth = 0;
};

// Mann-Whitney form: the fraction of (positive, negative) pairs ranked
// correctly, ties counting one half. Computed from midranks in O(n log n).
inline std::optional<double> auc(std::span<const ScoredLabel> scores) {
  std::vector<ScoredLabel> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  std::size_t positives = 0;
  double rank_sum = 0.0;  // sum of doubled midranks, kept integral
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) group_pos += sorted[j++].truth;
    // Doubled midrank of ranks i+1..j is i + j + 1.
    rank_sum += static_cast<double>(group_pos) * static_cast<double>(i + j + 1);
    positives += group_pos;
    i = j;
  }
  const std::size_t negatives = sorted.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
  // 2U = 2R - P(P+1); AUC = U / (P N)
  const double twice_u = rank_sum - p * (p + 1.0);
  return twice_u / 2.0 / (p * n);
}

inline std::optional<double> label_auc(const LabelMatrix& m, std::size_t label) {
  std::vector<ScoredLabel> s(m.docs());
  for (std::size_t d = 0; d < m.docs(); ++d) s[d] = {m.prob(d, label), m.truth[d * m.num_labels + label]};
  return auc(s);
}

inline double example_f1(const PredictionSet& p) { return example_f1(to_matrix(p)); }
inline double micro_f1(const PredictionSet& p) { return micro_f1(to_matrix(p)); }
inline double macro_f1(const PredictionSet& p) { return macro_f1(to_matrix(p)); }
inline double weighted_f1(const PredictionSet& p, WeightScheme scheme = WeightScheme::support_normalized) {
  return weighted_f1(to_matrix(p), scheme);
}

// ---------------------------------------------------------------------------
// Report

struct LabelReport {
  std::string name;
  ConfusionCounts counts;
  PrecisionRecallF1 scores;
  std::optional<double> auc;
};

struct MetricsReport {
  double example_f1 = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> macro_auc;  // mean over labels where AUC is defined
  std::vector<LabelReport> per_label;
};

inline MetricsReport full_report(const PredictionSet& p, WeightScheme scheme = WeightScheme::support_normalized) {
  const auto m = to_matrix(p);
  MetricsReport r;
  r.example_f1 = example_f1(m);
  r.micro_f1 = micro_f1(m);
  r.macro_f1 = macro_f1(m);
  r.weighted_f1 = weighted_f1(m, scheme);
  double auc_sum = 0.0;
  std::size_t auc_count = 0;
  for (std::size_t j = 0; j < m.num_labels; ++j) {
    LabelReport l{p.vocab.name(j), label_counts(m, j), {}, label_auc(m, j)};
    l.scores = prf1(l.counts);
    if (l.auc) {
      auc_sum += *l.auc;
      ++auc_count;
    }
    r.per_label.push_back(std::move(l));
  }
  if (auc_count) r.macro_auc = auc_sum / static_cast<double>(auc_count);
  return r;
}

inline constexpr std::string_view kMetricsMagic = "# distillkit-metrics v1";

// Indented key/value text; label names are JSON-quoted.
inline void write_report(std::ostream& out, const MetricsReport& r, const std::vector<std::string>& provenance = {}) {
  auto fixed = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
  };
  auto optional_fixed = [&](const std::optional<double>& v) { return v ? fixed(*v) : std::string("absent"); };
  out << kMetricsMagic << '\n';
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << "example_f1: " << fixed(r.example_f1) << '\n'
      << "micro_f1: " << fixed(r.micro_f1) << '\n'
      << "macro_f1: " << fixed(r.macro_f1) << '\n'
      << "weighted_f1: " << fixed(r.weighted_f1) << '\n'
      << "macro_auc: " << optional_fixed(r.macro_auc) << '\n'
      << "labels:\n";
  for (const auto& l : r.per_label) {
    out << "  " << nlohmann::json(l.name).dump() << ":\n"
        << "    precision: " << fixed(l.scores.precision) << '\n'
        << "    recall: " << fixed(l.scores.recall) << '\n'
        << "    f1: " << fixed(l.scores.f1) << '\n'
        << "    auc: " << optional_fixed(l.auc) << '\n'
        << "    tp: " << l.counts.tp << '\n'
        << "    fp: " << l.counts.fp << '\n'
        << "    fn: " << l.counts.fn << '\n'
        << "    tn: " << l.counts.tn << '\n';
  }
}

}  // namespace distillkit
