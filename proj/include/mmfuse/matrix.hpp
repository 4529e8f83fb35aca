#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/error.hpp"

namespace mmfuse {

enum class Precision { single, double_ };

inline std::string precision_name(Precision p) {
  return p == Precision::single ? "single" : "double";
}

inline Precision parse_precision(const std::string& s) {
  if (s == "single") return Precision::single;
  if (s == "double") return Precision::double_;
  fail(ErrorKind::invalid_argument, "unknown precision '" + s + "' (expected single|double)");
}

/**
 * Dense row-major matrix. Both dimensions are at least one; vectors are
 * 1xN rows unless noted otherwise.
 */
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() : Matrix(1, 1) {}

  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != checked_size(rows, cols)) {
      fail(ErrorKind::shape_mismatch, "matrix data length " + std::to_string(data_.size()) +
                                          " does not match " + shape_string(rows, cols));
    }
  }

  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    checked_size(rows_, cols_);
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) fail(ErrorKind::shape_mismatch, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  // Construction from external input: rejects NaN and Inf.
  static Matrix checked(std::size_t rows, std::size_t cols, std::vector<T> data) {
    Matrix m(rows, cols, std::move(data));
    for (T v : m.data_) {
      if (!std::isfinite(static_cast<double>(v))) {
        fail(ErrorKind::non_finite, "non-finite entry in external matrix input");
      }
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  template <typename U>
  Matrix<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Matrix<U>(rows_, cols_, std::move(out));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::string shape() const { return shape_string(rows_, cols_); }
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols_, cols_); }
  const std::vector<T>& storage() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix& o) const = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
  }

 private:
  static std::size_t checked_size(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
      fail(ErrorKind::shape_mismatch, "matrix dimensions must be >= 1, got " + shape_string(rows, cols));
    }
    return rows * cols;
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// Elementwise mean over rows: [L x n] -> [1 x n].
template <typename T>
Matrix<T> row_mean(const Matrix<T>& a) {
  Matrix<T> out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  const T n = static_cast<T>(a.rows());
  for (std::size_t j = 0; j < a.cols(); ++j) out[j] /= n;
  return out;
}

template <typename T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  if (!a.same_shape(b)) fail(ErrorKind::shape_mismatch, "max_abs_diff " + a.shape() + " vs " + b.shape());
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mmfuse
