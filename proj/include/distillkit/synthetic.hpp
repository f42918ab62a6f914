#pragma once

// Keyword-driven synthetic corpora: label j is present exactly when the token
// "kw<j>" occurs in the text. Filler tokens "w<n>" never collide with
// keywords, so every label is linearly separable in TF-IDF space (up to hash
// collisions).

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "distillkit/corpus.hpp"
#include "distillkit/error.hpp"
#include "distillkit/random.hpp"

namespace distillkit {

struct SyntheticSpec {
  std::size_t documents = 1000;
  std::size_t labels = 10;
  double min_prevalence = 0.1;  // label prevalences are spaced linearly
  double max_prevalence = 0.4;  // from min (first label) to max (last)
  double correlation = 0.0;     // P(label j copies label j-1), j > 0
  std::size_t vocabulary = 500;
  std::size_t keyword_repeats = 3;  // occurrences of each present keyword
  std::size_t min_tokens = 20;
  std::size_t max_tokens = 60;
  std::uint64_t seed = 0;

  void validate() const {
    if (documents < 1) throw UsageError("synthetic corpus needs at least one document");
    if (labels < 1) throw UsageError("synthetic corpus needs at least one label");
    if (!(min_prevalence >= 0.0 && max_prevalence <= 1.0 && min_prevalence <= max_prevalence))
      throw UsageError("prevalences must satisfy 0 <= min <= max <= 1");
    if (!(correlation >= 0.0 && correlation <= 1.0)) throw UsageError("correlation must lie in [0, 1]");
    if (vocabulary < 1) throw UsageError("filler vocabulary must be non-empty");
    if (keyword_repeats < 1) throw UsageError("keyword repeats must be at least 1");
    if (min_tokens < 1 || min_tokens > max_tokens) throw UsageError("token counts must satisfy 1 <= min <= max");
  }
};

inline std::string synthetic_label_name(std::size_t j) { return "topic_" + std::to_string(j); }
inline std::string synthetic_keyword(std::size_t j) { return "kw" + std::to_string(j); }

inline Corpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.labels; ++j) names.push_back(synthetic_label_name(j));
  Corpus corpus{LabelVocabulary(names), {}};

  std::vector<double> prevalence(spec.labels, spec.min_prevalence);
  for (std::size_t j = 0; j < spec.labels && spec.labels > 1; ++j)
    prevalence[j] = spec.min_prevalence +
                    (spec.max_prevalence - spec.min_prevalence) * static_cast<double>(j) /
                        static_cast<double>(spec.labels - 1);

  Rng rng(derive_seed({spec.seed, 0x5f47ULL}));
  for (std::size_t d = 0; d < spec.documents; ++d) {
    Document doc;
    doc.id = "doc" + std::to_string(d);
    doc.labels.assign(spec.labels, 0);
    for (std::size_t j = 0; j < spec.labels; ++j) {
      if (j > 0 && rng.uniform() < spec.correlation) {
        doc.labels[j] = doc.labels[j - 1];
      } else {
        doc.labels[j] = rng.uniform() < prevalence[j] ? 1 : 0;
      }
    }
    const auto length = spec.min_tokens + rng.below(spec.max_tokens - spec.min_tokens + 1);
    std::vector<std::string> tokens;
    tokens.reserve(length + spec.labels * spec.keyword_repeats);
    for (std::size_t t = 0; t < length; ++t) tokens.push_back("w" + std::to_string(rng.below(spec.vocabulary)));
    // Keywords land within the first min_tokens + labels * keyword_repeats
    // positions, so a token cap at least that large never removes them.
    for (std::size_t j = 0; j < spec.labels; ++j) {
      if (!doc.labels[j]) continue;
      for (std::size_t r = 0; r < spec.keyword_repeats; ++r) {
        const auto pos = rng.below(std::min(tokens.size(), spec.min_tokens) + 1);
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos), synthetic_keyword(j));
      }
    }
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t) doc.text += ' ';
      doc.text += tokens[t];
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace distillkit
