#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace npl {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// y = A x
Vector matvec(const Matrix& a, std::span<const double> x);
/// y = A^T x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);
Matrix hadamard(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
/// max |a_ij - b_ij|
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ||a - b||_F / ||b||_F (absolute difference when b is zero)
double relative_frobenius_error(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);

}  // namespace npl
