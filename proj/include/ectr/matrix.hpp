#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ectr {

using Vector = std::vector<double>;

/// Row-major dense matrix. Rows are samples wherever a matrix carries a batch.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vector data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  Vector& data() noexcept { return data_; }
  const Vector& data() const noexcept { return data_; }

  Matrix transpose() const;
  /// Copies the listed rows, in order.
  Matrix select_rows(std::span<const std::size_t> indices) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

/// a (n×k) · b (k×m). Throws ShapeError on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ (k×n)ᵀ · b (k×m) without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a (n×k) · bᵀ (m×k)ᵀ.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double max_abs(std::span<const double> v);
bool all_finite(std::span<const double> v) noexcept;

}  // namespace ectr
