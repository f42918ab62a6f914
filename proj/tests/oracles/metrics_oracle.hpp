#pragma once

// Naive multi-label metrics straight from a dense probability/truth matrix.
// Per-label and pooled scores are formed as integer ratios and divided once;
// averages accumulate in document or label order. Shares no code with the
// library.

#include <cstdint>
#include <optional>
#include <vector>

namespace oracle {

struct Instance {
  std::size_t docs = 0;
  std::size_t labels = 0;
  std::vector<double> prob;  // doc-major
  std::vector<std::uint8_t> truth;

  bool y(std::size_t d, std::size_t j) const { return truth[d * labels + j] == 1; }
  bool yhat(std::size_t d, std::size_t j) const { return !(prob[d * labels + j] < 0.5); }
};

inline double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

struct Counts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts counts(const Instance& m, std::size_t j) {
  Counts c;
  for (std::size_t d = 0; d < m.docs; ++d) {
    if (m.y(d, j) && m.yhat(d, j)) c.tp++;
    if (!m.y(d, j) && m.yhat(d, j)) c.fp++;
    if (m.y(d, j) && !m.yhat(d, j)) c.fn++;
    if (!m.y(d, j) && !m.yhat(d, j)) c.tn++;
  }
  return c;
}

inline double precision(const Instance& m, std::size_t j) {
  const auto c = counts(m, j);
  return ratio(c.tp, c.tp + c.fp);
}

inline double recall(const Instance& m, std::size_t j) {
  const auto c = counts(m, j);
  return ratio(c.tp, c.tp + c.fn);
}

// 2PR/(P+R) with P = tp/(tp+fp), R = tp/(tp+fn) reduces to 2tp/(2tp+fp+fn).
inline double f1(const Instance& m, std::size_t j) {
  const auto c = counts(m, j);
  return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}

inline double micro_f1(const Instance& m) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t j = 0; j < m.labels; ++j) {
    const auto c = counts(m, j);
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return ratio(2 * tp, 2 * tp + fp + fn);
}

inline double macro_f1(const Instance& m) {
  double sum = 0.0;
  for (std::size_t j = 0; j < m.labels; ++j) sum += f1(m, j);
  return sum / static_cast<double>(m.labels);
}

inline double weighted_f1(const Instance& m) {
  long total = 0;
  std::vector<long> support(m.labels, 0);
  for (std::size_t j = 0; j < m.labels; ++j) {
    for (std::size_t d = 0; d < m.docs; ++d) support[j] += m.y(d, j);
    total += support[j];
  }
  if (total == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < m.labels; ++j) sum += ratio(support[j], total) * f1(m, j);
  return sum;
}

inline double example_f1(const Instance& m) {
  double sum = 0.0;
  for (std::size_t d = 0; d < m.docs; ++d) {
    long inter = 0, truth = 0, pred = 0;
    for (std::size_t j = 0; j < m.labels; ++j) {
      inter += m.y(d, j) && m.yhat(d, j);
      truth += m.y(d, j);
      pred += m.yhat(d, j);
    }
    sum += truth + pred == 0 ? 1.0 : ratio(2 * inter, truth + pred);
  }
  return sum / static_cast<double>(m.docs);
}

// Every (positive, negative) pair; ties count one half, tracked as halves.
inline std::optional<double> auc(const std::vector<double>& score, const std::vector<std::uint8_t>& truth) {
  long pos = 0, neg = 0, halves = 0;
  for (std::size_t i = 0; i < score.size(); ++i) (truth[i] ? pos : neg)++;
  if (pos == 0 || neg == 0) return std::nullopt;
  for (std::size_t i = 0; i < score.size(); ++i)
    for (std::size_t k = 0; k < score.size(); ++k) {
      if (!truth[i] || truth[k]) continue;
      if (score[i] > score[k]) halves += 2;
      if (score[i] == score[k]) halves += 1;
    }
  return static_cast<double>(halves) / static_cast<double>(2 * pos * neg);
}

inline std::optional<double> label_auc(const Instance& m, std::size_t j) {
  std::vector<double> s;
  std::vector<std::uint8_t> t;
  for (std::size_t d = 0; d < m.docs; ++d) {
    s.push_back(m.prob[d * m.labels + j]);
    t.push_back(m.truth[d * m.labels + j]);
  }
  return auc(s, t);
}

}  // namespace oracle
