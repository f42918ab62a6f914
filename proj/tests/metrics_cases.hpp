#pragma once

// Random small prediction/truth matrices, as both an oracle::Instance and a
// PredictionSet whose records are shuffled.

#include <array>

#include "distillkit/predictions.hpp"
#include "distillkit/random.hpp"
#include "oracles/metrics_oracle.hpp"

namespace testing_support {

struct MetricsCase {
  oracle::Instance instance;
  distillkit::PredictionSet predictions;
};

// Scores come from a short grid so ties and the 0.5 threshold are common.
inline MetricsCase random_metrics_case(distillkit::Rng& rng, std::size_t max_docs, std::size_t max_labels) {
  static constexpr std::array<double, 8> grid{0.0, 0.1, 0.25, 0.4999, 0.5, 0.75, 0.9, 1.0};
  MetricsCase c;
  auto& m = c.instance;
  m.docs = 1 + rng.below(max_docs);
  m.labels = 1 + rng.below(max_labels);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < m.labels; ++j) names.push_back("label" + std::to_string(j));
  c.predictions.vocab = distillkit::LabelVocabulary(names);
  for (std::size_t d = 0; d < m.docs; ++d)
    for (std::size_t j = 0; j < m.labels; ++j) {
      const double p = grid[rng.below(grid.size())];
      const auto t = static_cast<std::uint8_t>(rng.below(2));
      m.prob.push_back(p);
      m.truth.push_back(t);
      c.predictions.records.push_back({"doc" + std::to_string(d), j, p, t, d % 2});
    }
  distillkit::shuffle(std::span(c.predictions.records), rng);
  return c;
}

}  // namespace testing_support
