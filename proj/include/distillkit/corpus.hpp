#pragma once

// Labeled corpora: ingestion, tokenization, hashed TF-IDF features and
// multi-label stratified splitting.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "distillkit/error.hpp"
#include "distillkit/random.hpp"
#include "distillkit/tensor.hpp"

namespace distillkit {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::ifstream open_input(const std::string& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + std::string(what) + " file: " + path);
  return in;
}

}  // namespace detail

class LabelVocabulary {
 public:
  LabelVocabulary() = default;

  explicit LabelVocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (std::size_t j = 0; j < labels_.size(); ++j) {
      if (labels_[j].empty()) throw DataError("label names must be non-empty");
      if (!index_.emplace(labels_[j], j).second) throw DataError("duplicate label: " + labels_[j]);
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const std::string& name(std::size_t j) const { return labels_.at(j); }
  const std::vector<std::string>& names() const noexcept { return labels_; }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const LabelVocabulary& a, const LabelVocabulary& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Document {
  std::string id;
  std::string text;
  std::vector<std::uint8_t> labels;  // one bit per vocabulary entry

  std::size_t label_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  }
  friend bool operator==(const Document&, const Document&) = default;
};

struct Corpus {
  LabelVocabulary vocab;
  std::vector<Document> documents;

  std::size_t size() const noexcept { return documents.size(); }
  bool empty() const noexcept { return documents.empty(); }

  std::size_t positives(std::size_t label) const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.labels.at(label);
    return n;
  }

  double prevalence(std::size_t label) const {
    return documents.empty() ? 0.0 : static_cast<double>(positives(label)) / static_cast<double>(documents.size());
  }

  // Documents at the given positions, in the given order.
  Corpus subset(std::span<const std::size_t> positions) const {
    Corpus out{vocab, {}};
    out.documents.reserve(positions.size());
    for (auto p : positions) out.documents.push_back(documents.at(p));
    return out;
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

// ---------------------------------------------------------------------------
// Ingestion

inline LabelVocabulary read_vocabulary(std::istream& in) {
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    auto name = detail::trim(line);
    if (!name.empty()) labels.emplace_back(name);
  }
  if (labels.empty()) throw DataError("vocabulary file has no labels");
  return LabelVocabulary(std::move(labels));
}

inline LabelVocabulary load_vocabulary(const std::string& path) {
  auto in = detail::open_input(path, "vocabulary");
  return read_vocabulary(in);
}

// One JSON object per line: {"id": "...", "text": "...", "labels": [...]}.
// Blank lines are skipped but still count toward line numbers.
inline Corpus read_corpus(std::istream& in, const LabelVocabulary& vocab) {
  using nlohmann::json;
  Corpus corpus{vocab, {}};
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto where = "line " + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    if (!record.is_object()) throw DataError(where + ": record must be a JSON object");

    Document doc;
    if (auto it = record.find("id"); it != record.end()) {
      if (!it->is_string()) throw DataError(where + ": field 'id' must be a string");
      doc.id = it->get<std::string>();
    } else {
      doc.id = std::to_string(line_no - 1);
    }

    auto text = record.find("text");
    if (text == record.end() || !text->is_string()) throw DataError(where + ": missing string field 'text'");
    doc.text = text->get<std::string>();
    if (detail::trim(doc.text).empty()) throw DataError(where + ": empty text");

    auto labels = record.find("labels");
    if (labels == record.end() || !labels->is_array()) throw DataError(where + ": missing list field 'labels'");
    doc.labels.assign(vocab.size(), 0);
    for (const auto& l : *labels) {
      if (!l.is_string()) throw DataError(where + ": label entries must be strings");
      const auto name = l.get<std::string>();
      auto j = vocab.find(name);
      if (!j) throw DataError(where + ": unknown label \"" + name + "\"");
      doc.labels[*j] = 1;
    }

    if (!seen_ids.insert(doc.id).second) throw DataError(where + ": duplicate document id \"" + doc.id + "\"");
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path, const LabelVocabulary& vocab) {
  auto in = detail::open_input(path, "corpus");
  return read_corpus(in, vocab);
}

inline Corpus load_corpus(const std::string& path, const std::string& vocab_path) {
  return load_corpus(path, load_vocabulary(vocab_path));
}

inline void write_vocabulary(std::ostream& out, const LabelVocabulary& vocab) {
  for (const auto& name : vocab.names()) out << name << '\n';
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus.documents) {
    nlohmann::json labels = nlohmann::json::array();
    for (std::size_t j = 0; j < doc.labels.size(); ++j)
      if (doc.labels[j]) labels.push_back(corpus.vocab.name(j));
    nlohmann::ordered_json record;
    record["id"] = doc.id;
    record["text"] = doc.text;
    record["labels"] = std::move(labels);
    out << record.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tokenization and features

// Lowercases ASCII and splits on every non-alphanumeric byte.
inline std::vector<std::string> tokenize(std::string_view text, std::size_t max_length = 0) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (max_length != 0 && tokens.size() == max_length) break;
    if (c < 0x80 && std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  if (max_length == 0 || tokens.size() < max_length) flush();
  return tokens;
}

struct HashedToken {
  std::uint32_t bucket;
  double sign;
};

inline HashedToken hash_token(std::string_view token, std::size_t dim) {
  const std::uint64_t h = mix64(detail::fnv1a(token));
  return {static_cast<std::uint32_t>(h % dim), (h >> 63) ? -1.0 : 1.0};
}

inline constexpr std::size_t kDefaultFeatureDim = 32768;

struct FeatureMatrix {
  std::size_t dim = 0;
  std::vector<SparseVector> rows;
  std::vector<std::string> doc_ids;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Smoothed inverse document frequencies fitted on one corpus and applied to
// any other (the validation fold during cross-validation).
class TfidfFeaturizer {
 public:
  TfidfFeaturizer(std::size_t dim, std::size_t max_length) : dim_(dim), max_length_(max_length) {
    if (dim < 2) throw UsageError("feature dimension must be at least 2");
    if (dim > (std::size_t{1} << 32)) throw UsageError("feature dimension too large");
  }

  void fit(const Corpus& corpus) {
    if (corpus.empty()) throw DataError("cannot featurize an empty corpus");
    doc_count_ = corpus.size();
    df_.clear();
    for (const auto& doc : corpus.documents) {
      auto tokens = tokenize(doc.text, max_length_);
      std::sort(tokens.begin(), tokens.end());
      tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
      for (auto& t : tokens) ++df_[std::move(t)];
    }
  }

  double idf(const std::string& token) const {
    auto it = df_.find(token);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    return std::log((1.0 + static_cast<double>(doc_count_)) / (1.0 + df)) + 1.0;
  }

  SparseVector transform(std::string_view text) const {
    std::map<std::string, std::size_t> tf;
    for (auto& t : tokenize(text, max_length_)) ++tf[std::move(t)];
    std::map<std::uint32_t, double> acc;
    for (const auto& [token, count] : tf) {
      const auto h = hash_token(token, dim_);
      acc[h.bucket] += h.sign * static_cast<double>(count) * idf(token);
    }
    SparseVector row{dim_, {}};
    double sq = 0.0;
    for (const auto& [index, w] : acc) {
      if (w == 0.0) continue;
      row.entries.push_back({index, w});
      sq += w * w;
    }
    if (sq > 0.0) {
      const double norm = std::sqrt(sq);
      for (auto& e : row.entries) e.weight /= norm;
    }
    return row;
  }

  FeatureMatrix transform(const Corpus& corpus) const {
    FeatureMatrix m{dim_, {}, {}};
    m.rows.reserve(corpus.size());
    m.doc_ids.reserve(corpus.size());
    for (const auto& doc : corpus.documents) {
      m.rows.push_back(transform(doc.text));
      m.doc_ids.push_back(doc.id);
    }
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t max_length() const noexcept { return max_length_; }

 private:
  std::size_t dim_;
  std::size_t max_length_;
  std::size_t doc_count_ = 0;
  std::map<std::string, std::size_t> df_;
};

// Hashed TF-IDF with IDF fitted on the same corpus. max_length 0 = no cap.
inline FeatureMatrix featurize(const Corpus& corpus, std::size_t dim, std::size_t max_length) {
  TfidfFeaturizer f(dim, max_length);
  f.fit(corpus);
  return f.transform(corpus);
}

// ---------------------------------------------------------------------------
// Stratification

// Greedy iterative stratification into subsets with fixed capacities
// (capacities must sum to the document count). Documents are taken label by
// label, rarest remaining label first; each goes to the open subset with the
// largest outstanding demand for that label, then the most free capacity,
// then the lowest index. The seed only permutes the order in which documents
// sharing a label are visited.
inline std::vector<std::size_t> iterative_stratify(const Corpus& corpus, std::span<const std::size_t> capacities,
                                                   std::uint64_t seed) {
  const std::size_t n = corpus.size();
  const std::size_t subsets = capacities.size();
  const std::size_t num_labels = corpus.vocab.size();
  if (std::accumulate(capacities.begin(), capacities.end(), std::size_t{0}) != n)
    throw InvariantError("stratification capacities must sum to the corpus size");

  std::vector<std::size_t> visit(n);
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  Rng rng(derive_seed({seed, 0x57a7ULL}));
  shuffle(std::span(visit), rng);

  std::vector<std::size_t> remaining_positives(num_labels, 0);
  for (std::size_t j = 0; j < num_labels; ++j) remaining_positives[j] = corpus.positives(j);

  // demand[s][j]: positives of label j still wanted by subset s.
  std::vector<std::vector<double>> demand(subsets, std::vector<double>(num_labels));
  for (std::size_t s = 0; s < subsets; ++s)
    for (std::size_t j = 0; j < num_labels; ++j)
      demand[s][j] = static_cast<double>(remaining_positives[j] * capacities[s]) / static_cast<double>(n);

  std::vector<std::size_t> free(capacities.begin(), capacities.end());
  constexpr auto unassigned = static_cast<std::size_t>(-1);
  std::vector<std::size_t> assignment(n, unassigned);

  auto place = [&](std::size_t doc, std::size_t s) {
    assignment[doc] = s;
    --free[s];
    const auto& bits = corpus.documents[doc].labels;
    for (std::size_t j = 0; j < num_labels; ++j) {
      if (!bits[j]) continue;
      demand[s][j] -= 1.0;
      --remaining_positives[j];
    }
  };

  auto best_subset = [&](std::optional<std::size_t> label) {
    std::size_t best = unassigned;
    for (std::size_t s = 0; s < subsets; ++s) {
      if (free[s] == 0) continue;
      if (best == unassigned) {
        best = s;
        continue;
      }
      if (label) {
        const double ds = demand[s][*label], db = demand[best][*label];
        if (ds != db) {
          if (ds > db) best = s;
          continue;
        }
      }
      if (free[s] > free[best]) best = s;
    }
    if (best == unassigned) throw InvariantError("stratification ran out of capacity");
    return best;
  };

  while (true) {
    std::optional<std::size_t> rarest;
    for (std::size_t j = 0; j < num_labels; ++j) {
      if (remaining_positives[j] == 0) continue;
      if (!rarest || remaining_positives[j] < remaining_positives[*rarest]) rarest = j;
    }
    if (!rarest) break;
    for (std::size_t doc : visit) {
      if (assignment[doc] != unassigned || !corpus.documents[doc].labels[*rarest]) continue;
      place(doc, best_subset(*rarest));
    }
  }
  for (std::size_t doc : visit)
    if (assignment[doc] == unassigned) place(doc, best_subset(std::nullopt));
  return assignment;
}

// Topic-distribution-preserving subset of `size` documents, in corpus order.
inline Corpus stratified_sample(const Corpus& corpus, std::size_t size, std::uint64_t seed) {
  if (size < 1 || size > corpus.size())
    throw UsageError("sample size must be in [1, " + std::to_string(corpus.size()) + "], got " +
                     std::to_string(size));
  const std::size_t capacities[] = {size, corpus.size() - size};
  const auto assignment = iterative_stratify(corpus, capacities, seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(size);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (assignment[i] == 0) chosen.push_back(i);
  return corpus.subset(chosen);
}

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::string> doc_ids;  // corpus order
  std::vector<std::size_t> folds;    // parallel to doc_ids

  std::size_t fold_of(std::string_view id) const {
    for (std::size_t i = 0; i < doc_ids.size(); ++i)
      if (doc_ids[i] == id) return folds[i];
    throw DataError("document not in fold assignment: " + std::string(id));
  }

  std::vector<std::size_t> members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < folds.size(); ++i)
      if (folds[i] == fold) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> complement(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < folds.size(); ++i)
      if (folds[i] != fold) out.push_back(i);
    return out;
  }

  // Stable fingerprint of the (id, fold) pairs, printed in manifests.
  std::string fingerprint() const {
    std::uint64_t h = derive_seed({k});
    for (std::size_t i = 0; i < doc_ids.size(); ++i) h = derive_seed({h, detail::fnv1a(doc_ids[i]), folds[i]});
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
  }

  friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

inline FoldAssignment stratified_kfold(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > corpus.size())
    throw UsageError("fold count must be in [2, " + std::to_string(corpus.size()) + "], got " + std::to_string(k));
  std::vector<std::size_t> capacities(k, corpus.size() / k);
  for (std::size_t f = 0; f < corpus.size() % k; ++f) ++capacities[f];
  FoldAssignment fa;
  fa.k = k;
  fa.folds = iterative_stratify(corpus, capacities, seed);
  fa.doc_ids.reserve(corpus.size());
  for (const auto& d : corpus.documents) fa.doc_ids.push_back(d.id);
  return fa;
}

}  // namespace distillkit
