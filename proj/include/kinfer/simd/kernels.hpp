#pragma once

// Dense inner loops used by the regression assembly and the error norms.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA variant. The active table is chosen once at first
// use from CPU capabilities; KINFER_SIMD=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace kinfer::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;

  // G(cols x cols, row-major) += P^T P for P(rows x cols, row stride ld).
  void (*gram_accumulate)(const double* P, std::size_t rows, std::size_t cols,
                          std::size_t ld, double* G);

  // out(cols) += P^T y for P(rows x cols, row stride ld).
  void (*gemv_t_accumulate)(const double* P, std::size_t rows, std::size_t cols,
                            std::size_t ld, const double* y, double* out);

  double (*dot)(const double* x, const double* y, std::size_t n);

  // sum_k w[k] * x[k]^2
  double (*weighted_sum_squares)(const double* w, const double* x, std::size_t n);

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();

// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();

// The table selected for this process.
const KernelTable& active();

std::string_view isa_name(Isa isa);

}  // namespace kinfer::simd
