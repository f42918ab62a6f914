#pragma once

// Distillation losses and their gradients with respect to student outputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distillkit/error.hpp"
#include "distillkit/model.hpp"
#include "distillkit/tensor.hpp"

namespace distillkit {

// The six tunable hyperparameters.
struct DistillConfig {
  double temperature = 2.0;
  double alpha = 0.5;
  double learning_rate = 2e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 5;
  std::size_t max_length = 128;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw UsageError("temperature must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be positive");
    if (batch_size < 1) throw UsageError("batch size must be at least 1");
    if (epochs < 1) throw UsageError("epochs must be at least 1");
  }

  friend bool operator==(const DistillConfig&, const DistillConfig&) = default;
};

// T^2 * KL(teacher || student) on temperature-softened distributions.
inline double soft_loss(const Logits& student, const Logits& teacher, double temperature) {
  const auto log_s = log_softmax_t(student, temperature);
  const auto log_t = log_softmax_t(teacher, temperature);
  double kl = 0.0;
  for (std::size_t i = 0; i < 2; ++i) kl += std::exp(log_t[i]) * (log_t[i] - log_s[i]);
  return temperature * temperature * std::max(kl, 0.0);
}

// d soft_loss / d student logits = T * (sigma_s - sigma_t).
inline Logits soft_loss_grad(const Logits& student, const Logits& teacher, double temperature) {
  const auto ps = softmax_t(student, temperature);
  const auto pt = softmax_t(teacher, temperature);
  return {temperature * (ps[0] - pt[0]), temperature * (ps[1] - pt[1])};
}

// Cross-entropy of the untempered student distribution against class y.
inline double hard_loss(const Logits& student, std::size_t y) {
  if (y > 1) throw InvariantError("binary target must be 0 or 1");
  return -log_softmax_t(student, 1.0)[y];
}

inline Logits hard_loss_grad(const Logits& student, std::size_t y) {
  if (y > 1) throw InvariantError("binary target must be 0 or 1");
  auto p = softmax_t(student, 1.0);
  p[y] -= 1.0;
  return p;
}

inline double kd_loss(const Logits& student, const Logits& teacher, std::size_t y, const DistillConfig& cfg) {
  return cfg.alpha * soft_loss(student, teacher, cfg.temperature) + (1.0 - cfg.alpha) * hard_loss(student, y);
}

inline Logits kd_loss_grad(const Logits& student, const Logits& teacher, std::size_t y, const DistillConfig& cfg) {
  const auto gs = soft_loss_grad(student, teacher, cfg.temperature);
  const auto gh = hard_loss_grad(student, y);
  return {cfg.alpha * gs[0] + (1.0 - cfg.alpha) * gh[0], cfg.alpha * gs[1] + (1.0 - cfg.alpha) * gh[1]};
}

// ---------------------------------------------------------------------------
// Contrastive alignment of hidden states: 1 - cos(P h_s, h_t), where P maps
// the student width onto the teacher width (P is dim(h_t) x dim(h_s)).

inline constexpr double kMinAlignNorm = 1e-12;

struct ContrastiveGrad {
  double loss = 1.0;
  std::vector<double> d_student_hidden;
  Matrix d_projection;
};

namespace detail {

inline std::vector<double> project(const Matrix& projection, std::span<const double> h_student,
                                   std::span<const double> h_teacher) {
  if (projection.cols != h_student.size() || projection.rows != h_teacher.size())
    throw InvariantError("projection is " + std::to_string(projection.rows) + "x" + std::to_string(projection.cols) +
                         " but hidden widths are " + std::to_string(h_teacher.size()) + " (teacher) and " +
                         std::to_string(h_student.size()) + " (student)");
  std::vector<double> u(projection.rows, 0.0);
  for (std::size_t i = 0; i < projection.rows; ++i) {
    const auto row = projection.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) u[i] += row[k] * h_student[k];
  }
  return u;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

inline double contrastive_loss(std::span<const double> h_student, std::span<const double> h_teacher,
                               const Matrix& projection) {
  const auto u = detail::project(projection, h_student, h_teacher);
  const double nu = detail::norm2(u), nt = detail::norm2(h_teacher);
  if (nu < kMinAlignNorm || nt < kMinAlignNorm) return 1.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * h_teacher[i];
  return 1.0 - std::clamp(dot / (nu * nt), -1.0, 1.0);
}

inline ContrastiveGrad contrastive_loss_grad(std::span<const double> h_student, std::span<const double> h_teacher,
                                             const Matrix& projection) {
  const auto u = detail::project(projection, h_student, h_teacher);
  ContrastiveGrad g;
  g.d_student_hidden.assign(h_student.size(), 0.0);
  g.d_projection = Matrix(projection.rows, projection.cols);
  const double nu = detail::norm2(u), nt = detail::norm2(h_teacher);
  if (nu < kMinAlignNorm || nt < kMinAlignNorm) return g;

  double dot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * h_teacher[i];
  const double cosine = dot / (nu * nt);
  g.loss = 1.0 - std::clamp(cosine, -1.0, 1.0);

  // dL/du = -(h_t / (|u||h_t|) - cos * u / |u|^2)
  std::vector<double> du(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) du[i] = -(h_teacher[i] / (nu * nt) - cosine * u[i] / (nu * nu));
  for (std::size_t i = 0; i < projection.rows; ++i) {
    const auto prow = projection.row(i);
    auto grow = g.d_projection.row(i);
    for (std::size_t k = 0; k < prow.size(); ++k) {
      grow[k] = du[i] * h_student[k];
      g.d_student_hidden[k] += prow[k] * du[i];
    }
  }
  return g;
}

}  // namespace distillkit
