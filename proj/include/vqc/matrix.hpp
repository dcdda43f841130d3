#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vqc {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds a matrix from nested rows; all rows must have equal length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// Reinterprets the storage with a new shape of equal element count.
  Matrix reshaped(std::size_t rows, std::size_t cols) const;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out = a * b^T, the natural product for row-major weights stored (out_dim x in_dim).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Selects rows by index, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

/// Mean of squared elementwise differences.
double mse(const Matrix& a, const Matrix& b);

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace vqc
