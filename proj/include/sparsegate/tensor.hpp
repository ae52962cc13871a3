#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparsegate/errors.hpp"
#include "sparsegate/rng.hpp"

namespace sparsegate {

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
class BasicVector {
 public:
  using value_type = T;

  BasicVector() = default;
  explicit BasicVector(std::size_t len) : data_(len, T{0}) {}
  BasicVector(std::initializer_list<T> values) : BasicVector(std::vector<T>(values)) {}
  explicit BasicVector(std::vector<T> values) : data_(std::move(values)) {
    if (!all_finite<T>(data_)) throw NumericError("vector contains non-finite values");
  }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }

  std::span<const T> span() const { return data_; }
  std::span<T> mutable_span() { return data_; }
  operator std::span<const T>() const { return data_; }  // NOLINT(google-explicit-constructor)

  const T* data() const { return data_.data(); }
  T* data() { return data_.data(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }
  const std::vector<T>& values() const { return data_; }

  friend bool operator==(const BasicVector&, const BasicVector&) = default;

 private:
  std::vector<T> data_;
};

/// Dense row-major matrix.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    if (!all_finite<T>(data_)) throw NumericError("matrix contains non-finite values");
  }

  static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return BasicMatrix(r, c, std::move(data));
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const T> span() const { return data_; }
  std::span<T> mutable_span() { return data_; }
  const T* data() const { return data_.data(); }
  T* data() { return data_.data(); }
  const std::vector<T>& values() const { return data_; }

  BasicMatrix transposed() const {
    BasicMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Vector = BasicVector<float>;
using Matrix = BasicMatrix<float>;
using VectorF64 = BasicVector<double>;
using MatrixF64 = BasicMatrix<double>;

/// Sequential dot product; terms are accumulated in ascending index order
/// starting from +0. Sparse kernels rely on this exact order.
template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// out[i] = sum_j m[i,j] * x[j], accumulated over j in ascending order.
template <typename T>
BasicVector<T> matvec(const BasicMatrix<T>& m, std::span<const T> x) {
  if (x.size() != m.cols()) {
    throw ShapeError("matvec: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " but vector has length " + std::to_string(x.size()));
  }
  BasicVector<T> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot<T>(m.row(i), x);
  if (!all_finite<T>(out.span())) throw NumericError("matvec produced non-finite values");
  return out;
}

/// out[j] = sum_i m[i,j] * x[i] (product with the transpose, no copy).
template <typename T>
BasicVector<T> matvec_transposed(const BasicMatrix<T>& m, std::span<const T> x) {
  if (x.size() != m.rows()) throw ShapeError("matvec_transposed: dimension mismatch");
  BasicVector<T> out(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j] * x[i];
  }
  if (!all_finite<T>(out.span())) throw NumericError("matvec_transposed produced non-finite values");
  return out;
}

/// Rank-one product a * b^T.
template <typename T>
BasicMatrix<T> outer(std::span<const T> a, std::span<const T> b) {
  BasicMatrix<T> m(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
  return m;
}

/// Entries i.i.d. normal(0, std^2), drawn in row-major order from rng.
template <typename T>
BasicMatrix<T> gaussian_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  if (rows == 0 || cols == 0) throw DomainError("gaussian_matrix: rows and cols must be >= 1");
  if (!(std > 0.0) || !std::isfinite(std)) throw DomainError("gaussian_matrix: std must be positive");
  std::vector<T> data(rows * cols);
  for (auto& v : data) v = static_cast<T>(std * rng.normal());
  return BasicMatrix<T>(rows, cols, std::move(data));
}

template <typename T>
BasicVector<T> gaussian_vector(std::size_t len, double std, Rng& rng) {
  if (!(std > 0.0) || !std::isfinite(std)) throw DomainError("gaussian_vector: std must be positive");
  std::vector<T> data(len);
  for (auto& v : data) v = static_cast<T>(std * rng.normal());
  return BasicVector<T>(std::move(data));
}

/// Euclidean norm accumulated in double.
template <typename T>
double l2_norm(std::span<const T> v) {
  double acc = 0.0;
  for (T x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

template <typename T>
double l2_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("l2_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// ||reference - approx|| / ||reference||; 0 when both are zero, +inf when
/// only the reference is zero.
template <typename T>
double relative_l2(std::span<const T> reference, std::span<const T> approx) {
  const double diff = l2_distance(reference, approx);
  const double ref = l2_norm(reference);
  if (ref == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
  return diff / ref;
}

template <typename T>
double frobenius_norm(const BasicMatrix<T>& m) {
  return l2_norm(m.span());
}

}  // namespace sparsegate
