#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace steel {

// Row-major dense matrix of doubles. All internal math is 64-bit; 32-bit
// floats appear only at serialization boundaries.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::int64_t rows, std::int64_t cols, double fill = 0.0);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t size() const { return rows_ * cols_; }
  bool empty() const { return size() == 0; }

  double& operator()(std::int64_t r, std::int64_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::int64_t r, std::int64_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::int64_t r) {
    return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<const double> row(std::int64_t r) const {
    return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool all_finite() const;
  void fill(double v);

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<double> data_;
};

// C = alpha * op(A) * op(B) + beta * C, row-major. Dispatches to CBLAS when
// built with it; otherwise a plain blocked kernel.
void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a,
          const Matrix& b, double beta, Matrix& c);

double dot(std::span<const double> x, std::span<const double> y);
double nrm2(std::span<const double> x);
double sqdist(std::span<const double> x, std::span<const double> y);
void axpy(double a, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> x);

}  // namespace steel
