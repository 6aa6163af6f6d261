#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace srcmix {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. The whole numeric core runs in double
/// precision; nothing here is clever, it just keeps loops contiguous.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

/// C = A * B. i-k-j loop order so the inner loop streams both B and C rows.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.rows());
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// C += alpha * A^T * B, accumulating into an existing matrix (gradient use).
inline void add_transposed_product(Matrix& c, double alpha, const Matrix& a, const Matrix& b) {
  assert(a.rows() == b.rows() && c.rows() == a.cols() && c.cols() == b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double v = alpha * ak[i];
      if (v == 0.0) continue;
      double* ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += v * bk[j];
    }
  }
}

/// y += alpha * M * x  (matrix-vector).
inline void add_matvec(double* y, double alpha, const Matrix& m, const double* x) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* mi = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += mi[j] * x[j];
    y[i] += alpha * acc;
  }
}

/// y += alpha * M^T * x  (transposed matrix-vector).
inline void add_matvec_transposed(double* y, double alpha, const Matrix& m, const double* x) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double v = alpha * x[i];
    if (v == 0.0) continue;
    const double* mi = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += v * mi[j];
  }
}

/// Rank-1 update M += alpha * u v^T.
inline void add_outer(Matrix& m, double alpha, const double* u, const double* v) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double ui = alpha * u[i];
    if (ui == 0.0) continue;
    double* mi = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) mi[j] += ui * v[j];
  }
}

inline bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data()); }

}  // namespace srcmix
