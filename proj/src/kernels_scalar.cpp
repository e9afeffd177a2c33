#include "hopattn/kernels.hpp"

#include <cmath>
#include <cstring>

namespace hopattn {
namespace {

void matmul_scalar(const double* a, const double* b, double* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        ci[j] += aip * bp[j];
      }
    }
  }
}

void lerp_scalar(double sa, const double* a, double sb, const double* b, double* out,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = sa * a[i] + sb * b[i];
}

void scale_scalar(double s, const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s * a[i];
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void hadamard_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void add_row_scalar(const double* a, const double* row, double* out, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    double* oi = out + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) oi[j] = ai[j] + row[j];
  }
}

void sub_row_scalar(const double* a, const double* row, double* out, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    double* oi = out + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) oi[j] = ai[j] - row[j];
  }
}

void abs_colsum_scalar(const double* a, double* out, int rows, int cols) {
  for (int j = 0; j < cols; ++j) out[j] = 0.0;
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) out[j] += std::fabs(ai[j]);
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {
      "scalar",     matmul_scalar, lerp_scalar,    scale_scalar,      add_scalar,
      sub_scalar,   hadamard_scalar, add_row_scalar, sub_row_scalar, abs_colsum_scalar,
  };
  return k;
}

}  // namespace hopattn
