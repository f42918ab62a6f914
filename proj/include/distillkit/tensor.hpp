#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace distillkit {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct SparseEntry {
  std::uint32_t index = 0;
  double weight = 0.0;
  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

// Sparse vector with strictly increasing indices, all < dim.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<SparseEntry> entries;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

}  // namespace distillkit
