#include "steel/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef STEEL_USE_CBLAS
#include <cblas.h>
#endif

namespace steel {

Matrix::Matrix(std::int64_t rows, std::int64_t cols, double fill)
    : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("negative matrix dims");
  data_.assign(static_cast<std::size_t>(rows * cols), fill);
}

bool Matrix::all_finite() const { return steel::all_finite(data_); }

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {

void gemm_naive(bool trans_a, bool trans_b, double alpha, const Matrix& a,
                const Matrix& b, double beta, Matrix& c) {
  const std::int64_t m = c.rows();
  const std::int64_t n = c.cols();
  const std::int64_t k = trans_a ? a.rows() : a.cols();
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      for (std::int64_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = alpha * (trans_a ? a(p, i) : a(i, p));
      if (av == 0.0) continue;
      if (!trans_b) {
        const double* brow = b.data() + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * b(j, p);
      }
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a,
          const Matrix& b, double beta, Matrix& c) {
  const std::int64_t m = trans_a ? a.cols() : a.rows();
  const std::int64_t ka = trans_a ? a.rows() : a.cols();
  const std::int64_t kb = trans_b ? b.cols() : b.rows();
  const std::int64_t n = trans_b ? b.rows() : b.cols();
  if (ka != kb || c.rows() != m || c.cols() != n)
    throw std::invalid_argument("gemm shape mismatch");
  if (m == 0 || n == 0) return;

#ifdef STEEL_USE_CBLAS
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(ka), alpha, a.data(),
              static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()),
              beta, c.data(), static_cast<int>(c.cols()));
#else
  gemm_naive(trans_a, trans_b, alpha, a, b, beta, c);
#endif
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double nrm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double sqdist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace steel
