#pragma once

// Feed-forward text encoders over sparse features with one two-logit head per
// label. The same code serves as teacher and student; only EncoderSpec
// differs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "distillkit/error.hpp"
#include "distillkit/random.hpp"
#include "distillkit/tensor.hpp"

namespace distillkit {

enum class Activation : std::uint8_t { tanh = 0, relu = 1 };
enum class ModelRole : std::uint8_t { teacher = 0, student = 1 };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
inline const char* to_string(ModelRole r) { return r == ModelRole::teacher ? "teacher" : "student"; }

struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_sizes;
  Activation activation = Activation::tanh;
  ModelRole role = ModelRole::student;

  std::size_t output_width() const { return hidden_sizes.back(); }

  void validate() const {
    if (input_dim == 0) throw UsageError("encoder input_dim must be positive");
    if (hidden_sizes.empty()) throw UsageError("encoder needs at least one hidden layer");
    for (auto h : hidden_sizes)
      if (h == 0) throw UsageError("hidden layer widths must be positive");
  }

  static EncoderSpec teacher_default(std::size_t input_dim) {
    return {input_dim, {128, 64}, Activation::tanh, ModelRole::teacher};
  }
  static EncoderSpec student_default(std::size_t input_dim) {
    return {input_dim, {32}, Activation::tanh, ModelRole::student};
  }

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

// weight is fan_in x fan_out, so a sparse input selects rows.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Task head: logits = weight^T h + bias, weight is H x 2.
struct LabelHead {
  Matrix weight;
  std::array<double, 2> bias{0.0, 0.0};
  friend bool operator==(const LabelHead&, const LabelHead&) = default;
};

struct ModelState {
  EncoderSpec spec;
  std::vector<DenseLayer> layers;
  std::vector<LabelHead> heads;

  std::size_t num_labels() const noexcept { return heads.size(); }
  friend bool operator==(const ModelState&, const ModelState&) = default;
};

using Logits = std::array<double, 2>;
using Probabilities = std::array<double, 2>;

struct ForwardResult {
  std::vector<double> hidden;
  Logits logits{};
};

// Post-activation output of every layer; kept for backpropagation.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;
  Logits logits{};

  const std::vector<double>& hidden() const { return activations.back(); }
};

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline ModelState init_model(const EncoderSpec& spec, std::size_t num_labels, std::uint64_t seed) {
  spec.validate();
  if (num_labels < 1) throw UsageError("a model needs at least one label head");
  Rng rng(derive_seed({seed, 0x1e7ULL}));
  ModelState m{spec, {}, {}};
  std::size_t fan_in = spec.input_dim;
  for (auto width : spec.hidden_sizes) {
    DenseLayer layer{Matrix(fan_in, width), std::vector<double>(width, 0.0)};
    const double a = glorot_bound(fan_in, width);
    for (auto& w : layer.weight.data) w = rng.uniform(-a, a);
    m.layers.push_back(std::move(layer));
    fan_in = width;
  }
  const double a = glorot_bound(fan_in, 2);
  for (std::size_t j = 0; j < num_labels; ++j) {
    LabelHead head{Matrix(fan_in, 2), {0.0, 0.0}};
    for (auto& w : head.weight.data) w = rng.uniform(-a, a);
    m.heads.push_back(std::move(head));
  }
  return m;
}

namespace detail {

inline void activate(std::span<double> v, Activation act) {
  if (act == Activation::tanh) {
    for (auto& x : v) x = std::tanh(x);
  } else {
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
  }
}

// d(activation)/d(pre-activation) expressed through the post-activation value.
inline double activation_slope(double post, Activation act) {
  return act == Activation::tanh ? 1.0 - post * post : (post > 0.0 ? 1.0 : 0.0);
}

inline void check_input(const ModelState& model, const SparseVector& x, std::size_t label) {
  if (x.dim != model.spec.input_dim)
    throw InvariantError("feature dimension " + std::to_string(x.dim) + " does not match encoder input " +
                         std::to_string(model.spec.input_dim));
  if (label >= model.heads.size())
    throw InvariantError("label index " + std::to_string(label) + " out of range");
}

}  // namespace detail

inline std::vector<double> encode(const ModelState& model, const SparseVector& x, ForwardTrace* trace = nullptr) {
  const auto act = model.spec.activation;
  const auto& first = model.layers.front();
  std::vector<double> a(first.bias);
  for (const auto& e : x.entries) {
    const auto row = first.weight.row(e.index);
    for (std::size_t c = 0; c < a.size(); ++c) a[c] += e.weight * row[c];
  }
  detail::activate(a, act);
  if (trace) trace->activations.push_back(a);
  for (std::size_t l = 1; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    std::vector<double> next(layer.bias);
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (a[r] == 0.0) continue;
      const auto row = layer.weight.row(r);
      for (std::size_t c = 0; c < next.size(); ++c) next[c] += a[r] * row[c];
    }
    detail::activate(next, act);
    if (trace) trace->activations.push_back(next);
    a = std::move(next);
  }
  return a;
}

inline Logits head_logits(const LabelHead& head, std::span<const double> hidden) {
  Logits z = head.bias;
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    z[0] += hidden[h] * head.weight(h, 0);
    z[1] += hidden[h] * head.weight(h, 1);
  }
  return z;
}

inline ForwardResult forward(const ModelState& model, const SparseVector& x, std::size_t label) {
  detail::check_input(model, x, label);
  ForwardResult r;
  r.hidden = encode(model, x);
  r.logits = head_logits(model.heads[label], r.hidden);
  return r;
}

inline ForwardTrace forward_trace(const ModelState& model, const SparseVector& x, std::size_t label) {
  detail::check_input(model, x, label);
  ForwardTrace t;
  t.activations.reserve(model.layers.size());
  encode(model, x, &t);
  t.logits = head_logits(model.heads[label], t.hidden());
  return t;
}

// Temperature softmax over two logits, shifted by the max for stability.
inline Probabilities softmax_t(const Logits& z, double temperature) {
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  const double a = z[0] / temperature, b = z[1] / temperature;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  const double s = ea + eb;
  return {ea / s, eb / s};
}

// log softmax_t, computed without forming the probabilities.
inline Probabilities log_softmax_t(const Logits& z, double temperature) {
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  const double a = z[0] / temperature, b = z[1] / temperature;
  const double m = std::max(a, b);
  const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
  return {a - lse, b - lse};
}

inline constexpr std::size_t kPositiveClass = 1;

inline double predict_proba(const ModelState& model, const SparseVector& x, std::size_t label) {
  return softmax_t(forward(model, x, label).logits, 1.0)[kPositiveClass];
}

// ---------------------------------------------------------------------------
// Gradients

// Gradient of the first (sparse-input) weight matrix: only rows whose input
// feature was nonzero somewhere in the batch are materialized. Row order is
// insertion order, which keeps updates deterministic.
class SparseRowGradient {
 public:
  explicit SparseRowGradient(std::size_t cols = 0) : cols_(cols) {}

  std::size_t cols() const noexcept { return cols_; }
  std::size_t touched() const noexcept { return rows_.size(); }
  std::uint32_t row_index(std::size_t slot) const { return rows_[slot]; }
  std::span<double> slot(std::size_t s) { return {values_.data() + s * cols_, cols_}; }
  std::span<const double> slot(std::size_t s) const { return {values_.data() + s * cols_, cols_}; }

  std::span<double> row(std::uint32_t r) {
    auto [it, inserted] = slots_.try_emplace(r, rows_.size());
    if (inserted) {
      rows_.push_back(r);
      values_.resize(values_.size() + cols_, 0.0);
    }
    return slot(it->second);
  }

  // Dense lookup, zero for untouched rows.
  double at(std::uint32_t r, std::size_t c) const {
    auto it = slots_.find(r);
    return it == slots_.end() ? 0.0 : values_[it->second * cols_ + c];
  }

  void clear() {
    rows_.clear();
    values_.clear();
    slots_.clear();
  }

  void scale(double s) {
    for (auto& v : values_) v *= s;
  }

 private:
  std::size_t cols_;
  std::vector<std::uint32_t> rows_;
  std::vector<double> values_;
  std::unordered_map<std::uint32_t, std::size_t> slots_;
};

struct Gradients {
  SparseRowGradient first_weight;
  std::vector<Matrix> weights;  // layers 1.. (index 0 unused, left empty)
  std::vector<std::vector<double>> biases;
  std::vector<LabelHead> heads;

  static Gradients zeros_like(const ModelState& m) {
    Gradients g;
    g.first_weight = SparseRowGradient(m.layers.front().weight.cols);
    g.weights.resize(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      if (l > 0) g.weights[l] = Matrix(m.layers[l].weight.rows, m.layers[l].weight.cols);
      g.biases.emplace_back(m.layers[l].bias.size(), 0.0);
    }
    for (const auto& h : m.heads) g.heads.push_back({Matrix(h.weight.rows, h.weight.cols), {0.0, 0.0}});
    return g;
  }

  void clear() {
    first_weight.clear();
    for (auto& w : weights) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
    for (auto& h : heads) {
      std::fill(h.weight.data.begin(), h.weight.data.end(), 0.0);
      h.bias = {0.0, 0.0};
    }
  }

  void scale(double s) {
    first_weight.scale(s);
    for (auto& w : weights)
      for (auto& v : w.data) v *= s;
    for (auto& b : biases)
      for (auto& v : b) v *= s;
    for (auto& h : heads) {
      for (auto& v : h.weight.data) v *= s;
      h.bias[0] *= s;
      h.bias[1] *= s;
    }
  }
};

// Accumulates the gradient of one example into `grads`, given dL/dlogits and
// an optional extra dL/dhidden (used by representation-level losses).
inline void backward(const ModelState& model, const SparseVector& x, const ForwardTrace& trace, std::size_t label,
                     const Logits& dlogits, Gradients& grads, std::span<const double> extra_dhidden = {}) {
  const auto act = model.spec.activation;
  const auto& hidden = trace.hidden();
  const auto& head = model.heads[label];
  auto& ghead = grads.heads[label];

  std::vector<double> dpost(hidden.size(), 0.0);
  for (std::size_t h = 0; h < hidden.size(); ++h) {
    ghead.weight(h, 0) += hidden[h] * dlogits[0];
    ghead.weight(h, 1) += hidden[h] * dlogits[1];
    dpost[h] = head.weight(h, 0) * dlogits[0] + head.weight(h, 1) * dlogits[1];
  }
  ghead.bias[0] += dlogits[0];
  ghead.bias[1] += dlogits[1];
  if (!extra_dhidden.empty())
    for (std::size_t h = 0; h < dpost.size(); ++h) dpost[h] += extra_dhidden[h];

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& post = trace.activations[l];
    std::vector<double> dpre(post.size());
    for (std::size_t c = 0; c < post.size(); ++c) dpre[c] = dpost[c] * detail::activation_slope(post[c], act);
    auto& gb = grads.biases[l];
    for (std::size_t c = 0; c < dpre.size(); ++c) gb[c] += dpre[c];

    if (l == 0) {
      for (const auto& e : x.entries) {
        auto row = grads.first_weight.row(e.index);
        for (std::size_t c = 0; c < dpre.size(); ++c) row[c] += e.weight * dpre[c];
      }
      break;
    }
    const auto& below = trace.activations[l - 1];
    const auto& w = model.layers[l].weight;
    auto& gw = grads.weights[l];
    std::vector<double> dbelow(below.size(), 0.0);
    for (std::size_t r = 0; r < below.size(); ++r) {
      const auto wrow = w.row(r);
      auto grow = gw.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < dpre.size(); ++c) {
        grow[c] += below[r] * dpre[c];
        acc += wrow[c] * dpre[c];
      }
      dbelow[r] = acc;
    }
    dpost = std::move(dbelow);
  }
}

namespace detail {

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void check_gradient_shapes(const ModelState& m, const Gradients& g) {
  bool ok = g.first_weight.cols() == m.layers.front().weight.cols && g.weights.size() == m.layers.size() &&
            g.biases.size() == m.layers.size() && g.heads.size() == m.heads.size();
  for (std::size_t l = 0; ok && l < m.layers.size(); ++l) {
    ok = g.biases[l].size() == m.layers[l].bias.size();
    if (ok && l > 0)
      ok = g.weights[l].rows == m.layers[l].weight.rows && g.weights[l].cols == m.layers[l].weight.cols;
  }
  for (std::size_t j = 0; ok && j < m.heads.size(); ++j)
    ok = g.heads[j].weight.rows == m.heads[j].weight.rows && g.heads[j].weight.cols == m.heads[j].weight.cols;
  for (std::size_t s = 0; ok && s < g.first_weight.touched(); ++s)
    ok = g.first_weight.row_index(s) < m.layers.front().weight.rows;
  if (!ok) throw InvariantError("gradient shapes do not match the model");
}

inline void check_gradients_finite(const Gradients& g) {
  for (std::size_t s = 0; s < g.first_weight.touched(); ++s)
    if (!all_finite(g.first_weight.slot(s))) throw InvariantError("non-finite gradient in layer 0 weight");
  for (std::size_t l = 0; l < g.biases.size(); ++l) {
    if (l > 0 && !all_finite(g.weights[l].data))
      throw InvariantError("non-finite gradient in layer " + std::to_string(l) + " weight");
    if (!all_finite(g.biases[l])) throw InvariantError("non-finite gradient in layer " + std::to_string(l) + " bias");
  }
  for (std::size_t j = 0; j < g.heads.size(); ++j)
    if (!all_finite(g.heads[j].weight.data) || !all_finite(g.heads[j].bias))
      throw InvariantError("non-finite gradient in head " + std::to_string(j));
}

}  // namespace detail

// p <- p - lr * g for every parameter, in place. Validates the whole
// gradient before touching the model.
inline void apply_sgd(ModelState& model, const Gradients& g, double lr) {
  detail::check_gradient_shapes(model, g);
  detail::check_gradients_finite(g);
  if (lr == 0.0) return;

  auto& w0 = model.layers.front().weight;
  for (std::size_t s = 0; s < g.first_weight.touched(); ++s) {
    auto row = w0.row(g.first_weight.row_index(s));
    const auto grow = g.first_weight.slot(s);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] -= lr * grow[c];
    if (!detail::all_finite(row)) throw InvariantError("non-finite parameter in layer 0 weight after update");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& layer = model.layers[l];
    if (l > 0)
      for (std::size_t i = 0; i < layer.weight.data.size(); ++i) layer.weight.data[i] -= lr * g.weights[l].data[i];
    for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= lr * g.biases[l][i];
    if ((l > 0 && !detail::all_finite(layer.weight.data)) || !detail::all_finite(layer.bias))
      throw InvariantError("non-finite parameter in layer " + std::to_string(l) + " after update");
  }
  for (std::size_t j = 0; j < model.heads.size(); ++j) {
    auto& head = model.heads[j];
    for (std::size_t i = 0; i < head.weight.data.size(); ++i) head.weight.data[i] -= lr * g.heads[j].weight.data[i];
    head.bias[0] -= lr * g.heads[j].bias[0];
    head.bias[1] -= lr * g.heads[j].bias[1];
    if (!detail::all_finite(head.weight.data) || !detail::all_finite(head.bias))
      throw InvariantError("non-finite parameter in head " + std::to_string(j) + " after update");
  }
}

inline ModelState sgd_step(ModelState model, const Gradients& g, double lr) {
  apply_sgd(model, g, lr);
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints: "DKMODEL\0", u32 version, u32 byte-order mark, spec, then every
// parameter array as raw IEEE-754 doubles.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'D', 'K', 'M', 'O', 'D', 'E', 'L', '\0'};
inline constexpr std::uint32_t kByteOrderMark = 0x01020304U;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw DataError("truncated checkpoint");
  return value;
}

inline void get_doubles(std::istream& in, std::span<double> v) {
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes())))
    throw DataError("truncated checkpoint");
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const ModelState& m) {
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, detail::kByteOrderMark);
  detail::put<std::uint64_t>(out, m.spec.input_dim);
  detail::put<std::uint64_t>(out, m.spec.hidden_sizes.size());
  for (auto h : m.spec.hidden_sizes) detail::put<std::uint64_t>(out, h);
  detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.spec.activation));
  detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(m.spec.role));
  detail::put<std::uint64_t>(out, m.heads.size());
  for (const auto& layer : m.layers) {
    detail::put_doubles(out, layer.weight.data);
    detail::put_doubles(out, layer.bias);
  }
  for (const auto& head : m.heads) {
    detail::put_doubles(out, head.weight.data);
    detail::put_doubles(out, head.bias);
  }
  if (!out) throw DataError("failed to write checkpoint");
}

inline ModelState read_checkpoint(std::istream& in) {
  char magic[sizeof(detail::kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("not a model checkpoint");
  if (auto v = detail::get<std::uint32_t>(in); v != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(v));
  if (detail::get<std::uint32_t>(in) != detail::kByteOrderMark) throw DataError("checkpoint byte order mismatch");

  EncoderSpec spec;
  spec.input_dim = detail::get<std::uint64_t>(in);
  const auto depth = detail::get<std::uint64_t>(in);
  if (depth == 0 || depth > 64) throw DataError("implausible checkpoint depth");
  for (std::uint64_t i = 0; i < depth; ++i) spec.hidden_sizes.push_back(detail::get<std::uint64_t>(in));
  const auto act = detail::get<std::uint8_t>(in);
  const auto role = detail::get<std::uint8_t>(in);
  if (act > 1 || role > 1) throw DataError("corrupt checkpoint header");
  spec.activation = static_cast<Activation>(act);
  spec.role = static_cast<ModelRole>(role);
  const auto labels = detail::get<std::uint64_t>(in);
  spec.validate();
  if (labels == 0) throw DataError("checkpoint has no label heads");

  ModelState m{spec, {}, {}};
  std::size_t fan_in = spec.input_dim;
  for (auto width : spec.hidden_sizes) {
    DenseLayer layer{Matrix(fan_in, width), std::vector<double>(width)};
    detail::get_doubles(in, layer.weight.data);
    detail::get_doubles(in, layer.bias);
    m.layers.push_back(std::move(layer));
    fan_in = width;
  }
  for (std::uint64_t j = 0; j < labels; ++j) {
    LabelHead head{Matrix(fan_in, 2), {}};
    detail::get_doubles(in, head.weight.data);
    detail::get_doubles(in, head.bias);
    m.heads.push_back(std::move(head));
  }
  return m;
}

}  // namespace distillkit
