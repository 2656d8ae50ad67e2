#pragma once

// Minimal dense row-major matrix over an arbitrary scalar, used where Eigen's
// custom-scalar machinery would be heavier than the algorithms need (the
// approximations run on both double and Dual).

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "macml/dual.hpp"
#include "macml/error.hpp"

namespace macml {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, const T& fill = T(0.0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  const std::vector<T>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <class T, class U>
auto multiply(const Matrix<T>& a, const Matrix<U>& b) {
  using R = decltype(T() * U());
  require(a.cols() == b.rows(), "matrix multiply: dimension mismatch");
  Matrix<R> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const auto& aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <class T>
Matrix<double> values_of(const Matrix<T>& a) {
  Matrix<double> v(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) v(i, j) = value_of(a(i, j));
  return v;
}

// Lower Cholesky factor; returns false when a pivot is not positive.
template <class T>
bool cholesky(const Matrix<T>& a, Matrix<T>& l) {
  using std::sqrt;
  const std::size_t n = a.rows();
  l = Matrix<T>(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    T diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(value_of(diag) > 0.0)) return false;
    l(j, j) = sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      T s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

// Solves (L L') x = rhs given the lower factor.
template <class T, class U>
std::vector<T> cholesky_solve(const Matrix<T>& l, const std::vector<U>& rhs) {
  const std::size_t n = l.rows();
  std::vector<T> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    T s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    T s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * y[k];
    y[ii] = s / l(ii, ii);
  }
  return y;
}

}  // namespace macml
