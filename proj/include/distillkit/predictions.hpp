#pragma once

// Per-(document, label) predicted probabilities accumulated over folds, and
// their tab-separated file form:
//
//   # distillkit-predictions v1
//   # <free-form provenance lines>
//   doc_id<TAB>label<TAB>probability<TAB>true<TAB>fold
//   d17<TAB>Resisting cell death<TAB>0.93125...<TAB>1<TAB>3
//
// Probabilities are written in shortest round-trip form, so a write/read
// cycle reproduces every double exactly.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "distillkit/corpus.hpp"
#include "distillkit/error.hpp"

namespace distillkit {

struct Prediction {
  std::string doc_id;
  std::size_t label = 0;
  double probability = 0.0;
  std::uint8_t truth = 0;
  std::size_t fold = 0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct PredictionSet {
  LabelVocabulary vocab;
  std::vector<Prediction> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

// Every document carries every label exactly once, probabilities in [0, 1].
inline void validate_complete(const PredictionSet& p) {
  const std::size_t num_labels = p.vocab.size();
  std::unordered_map<std::string, std::vector<std::uint8_t>> seen;
  for (const auto& r : p.records) {
    if (r.label >= num_labels) throw DataError("prediction label index out of range");
    if (!(r.probability >= 0.0 && r.probability <= 1.0))
      throw DataError("probability outside [0, 1] for document \"" + r.doc_id + "\"");
    if (r.truth > 1) throw DataError("true bit must be 0 or 1");
    auto& mask = seen[r.doc_id];
    mask.resize(num_labels, 0);
    if (mask[r.label]++)
      throw DataError("duplicate prediction for (\"" + r.doc_id + "\", \"" + p.vocab.name(r.label) + "\")");
  }
  for (const auto& [id, mask] : seen)
    for (std::size_t j = 0; j < num_labels; ++j)
      if (!mask[j]) throw DataError("document \"" + id + "\" has no prediction for label \"" + p.vocab.name(j) + "\"");
}

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw InvariantError("failed to format number");
  return std::string(buf, end);
}

inline constexpr std::string_view kPredictionsMagic = "# distillkit-predictions v1";
inline constexpr std::string_view kPredictionsHeader = "doc_id\tlabel\tprobability\ttrue\tfold";

inline void write_predictions(std::ostream& out, const PredictionSet& p,
                              const std::vector<std::string>& provenance = {}) {
  out << kPredictionsMagic << '\n';
  for (const auto& line : provenance) out << "# " << line << '\n';
  out << kPredictionsHeader << '\n';
  for (const auto& r : p.records) {
    if (r.doc_id.find_first_of("\t\n\r") != std::string::npos)
      throw DataError("document id contains a tab or newline: \"" + r.doc_id + "\"");
    out << r.doc_id << '\t' << p.vocab.name(r.label) << '\t' << format_double(r.probability) << '\t'
        << static_cast<int>(r.truth) << '\t' << r.fold << '\n';
  }
}

namespace detail {

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && end == s.data() + s.size();
}

}  // namespace detail

// Reads a predictions file. With a vocabulary, label names must belong to it
// and it fixes label order; without one, labels are indexed by first
// appearance. The result is checked for completeness.
inline PredictionSet read_predictions(std::istream& in, const std::optional<LabelVocabulary>& vocab = std::nullopt) {
  std::vector<std::string> names;
  std::unordered_map<std::string, std::size_t> index;
  if (vocab) {
    names = vocab->names();
    for (std::size_t j = 0; j < names.size(); ++j) index.emplace(names[j], j);
  }
  PredictionSet p;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen && line == kPredictionsHeader) {
      header_seen = true;
      continue;
    }
    const auto where = "line " + std::to_string(line_no) + ": ";
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (auto tab = rest.find('\t'); tab != std::string_view::npos; tab = rest.find('\t')) {
      fields.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 5) throw DataError(where + "expected 5 tab-separated fields, got " + std::to_string(fields.size()));

    Prediction r;
    r.doc_id = std::string(fields[0]);
    if (r.doc_id.empty()) throw DataError(where + "empty document id");
    const std::string label(fields[1]);
    auto it = index.find(label);
    if (it == index.end()) {
      if (vocab || label.empty()) throw DataError(where + "unknown label \"" + label + "\"");
      it = index.emplace(label, names.size()).first;
      names.push_back(label);
    }
    r.label = it->second;
    if (!detail::parse_number(fields[2], r.probability) || !std::isfinite(r.probability) || r.probability < 0.0 ||
        r.probability > 1.0)
      throw DataError(where + "probability must be a number in [0, 1]");
    if (fields[3] == "0") {
      r.truth = 0;
    } else if (fields[3] == "1") {
      r.truth = 1;
    } else {
      throw DataError(where + "true bit must be 0 or 1");
    }
    if (!detail::parse_number(fields[4], r.fold)) throw DataError(where + "fold must be a non-negative integer");
    p.records.push_back(std::move(r));
  }
  p.vocab = LabelVocabulary(names);
  validate_complete(p);
  return p;
}

}  // namespace distillkit
