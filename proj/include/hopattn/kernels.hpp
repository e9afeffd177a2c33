#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hopattn {

// Dense inner-loop kernels behind the matrix layer. Every SIMD variant
// accumulates each output element in the same order as the scalar
// reference, so all variants return bit-identical results and the
// runtime selection never changes numerics.
struct Kernels {
  const char* name;

  // c (m x n) = a (m x k) * b (k x n), row-major; c must not alias a or b.
  void (*matmul)(const double* a, const double* b, double* c, int m, int k, int n);
  // out = sa*a + sb*b
  void (*lerp)(double sa, const double* a, double sb, const double* b, double* out,
               std::size_t n);
  void (*scale)(double s, const double* a, double* out, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*hadamard)(const double* a, const double* b, double* out, std::size_t n);
  // a (rows x cols) with `row` (cols) added to / subtracted from every row
  void (*add_row)(const double* a, const double* row, double* out, int rows, int cols);
  void (*sub_row)(const double* a, const double* row, double* out, int rows, int cols);
  // out[j] = sum_i |a(i,j)|; accumulates down each column in row order
  void (*abs_colsum)(const double* a, double* out, int rows, int cols);
};

const Kernels& scalar_kernels();

#if defined(HOPATTN_HAVE_AVX2)
bool avx2_available();
const Kernels& avx2_kernels();
#endif
#if defined(HOPATTN_HAVE_NEON)
const Kernels& neon_kernels();
#endif

// Active kernel set. Picks the widest supported variant at startup;
// the HOPATTN_KERNELS env var (scalar|avx2|neon) overrides the choice.
const Kernels& kernels();

// Force a variant by name. Throws std::invalid_argument when the name is
// unknown or the CPU lacks it.
void set_kernels(const std::string& name);

std::vector<std::string> available_kernel_names();

}  // namespace hopattn
