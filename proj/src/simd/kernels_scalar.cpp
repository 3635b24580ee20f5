#include "kinfer/simd/kernels.hpp"

namespace kinfer::simd {
namespace {

void gram_accumulate_scalar(const double* P, std::size_t rows, std::size_t cols,
                            std::size_t ld, double* G) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = P + r * ld;
    for (std::size_t a = 0; a < cols; ++a) {
      const double s = row[a];
      if (s == 0.0) continue;
      double* g = G + a * cols;
      for (std::size_t b = 0; b < cols; ++b) g[b] += s * row[b];
    }
  }
}

void gemv_t_accumulate_scalar(const double* P, std::size_t rows, std::size_t cols,
                              std::size_t ld, const double* y, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = P + r * ld;
    const double yr = y[r];
    for (std::size_t a = 0; a < cols; ++a) out[a] += row[a] * yr;
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += x[k] * y[k];
  return s;
}

double weighted_sum_squares_scalar(const double* w, const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += w[k] * x[k] * x[k];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar,       gram_accumulate_scalar,
                                 gemv_t_accumulate_scalar, dot_scalar,
                                 weighted_sum_squares_scalar, axpy_scalar};
  return table;
}

}  // namespace kinfer::simd
