// NEON variants (aarch64, 2 doubles per lane). Mirrors the AVX2 file:
// lanes cover adjacent output elements so results match the scalar
// reference bit for bit.

#if defined(__aarch64__) || defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>
#include <cstring>

#include "hopattn/kernels.hpp"

namespace hopattn {
namespace {

void matmul_neon(const double* a, const double* b, double* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  const int n2 = n - (n % 2);
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      const float64x2_t va = vdupq_n_f64(aip);
      int j = 0;
      for (; j < n2; j += 2) {
        const float64x2_t vb = vld1q_f64(bp + j);
        const float64x2_t vc = vld1q_f64(ci + j);
        vst1q_f64(ci + j, vaddq_f64(vc, vmulq_f64(va, vb)));
      }
      for (; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void lerp_neon(double sa, const double* a, double sb, const double* b, double* out,
               std::size_t n) {
  const float64x2_t vsa = vdupq_n_f64(sa);
  const float64x2_t vsb = vdupq_n_f64(sb);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t va = vmulq_f64(vsa, vld1q_f64(a + i));
    const float64x2_t vb = vmulq_f64(vsb, vld1q_f64(b + i));
    vst1q_f64(out + i, vaddq_f64(va, vb));
  }
  for (; i < n; ++i) out[i] = sa * a[i] + sb * b[i];
}

void scale_neon(double s, const double* a, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s * a[i];
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void hadamard_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void add_row_neon(const double* a, const double* row, double* out, int rows, int cols) {
  const int c2 = cols - (cols % 2);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    double* oi = out + static_cast<std::size_t>(i) * cols;
    int j = 0;
    for (; j < c2; j += 2) vst1q_f64(oi + j, vaddq_f64(vld1q_f64(ai + j), vld1q_f64(row + j)));
    for (; j < cols; ++j) oi[j] = ai[j] + row[j];
  }
}

void sub_row_neon(const double* a, const double* row, double* out, int rows, int cols) {
  const int c2 = cols - (cols % 2);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    double* oi = out + static_cast<std::size_t>(i) * cols;
    int j = 0;
    for (; j < c2; j += 2) vst1q_f64(oi + j, vsubq_f64(vld1q_f64(ai + j), vld1q_f64(row + j)));
    for (; j < cols; ++j) oi[j] = ai[j] - row[j];
  }
}

void abs_colsum_neon(const double* a, double* out, int rows, int cols) {
  for (int j = 0; j < cols; ++j) out[j] = 0.0;
  const int c2 = cols - (cols % 2);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    int j = 0;
    for (; j < c2; j += 2) {
      vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vabsq_f64(vld1q_f64(ai + j))));
    }
    for (; j < cols; ++j) out[j] += std::fabs(ai[j]);
  }
}

}  // namespace

const Kernels& neon_kernels() {
  static const Kernels k = {
      "neon",   matmul_neon, lerp_neon,    scale_neon,   add_neon,
      sub_neon, hadamard_neon, add_row_neon, sub_row_neon, abs_colsum_neon,
  };
  return k;
}

}  // namespace hopattn

#endif  // __aarch64__ || __ARM_NEON
