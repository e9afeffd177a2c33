// AVX2 variants of the dense kernels. Lanes map to adjacent output
// elements, never to partial sums of one element, so each element sees
// the exact operation sequence of the scalar reference.

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "hopattn/kernels.hpp"

namespace hopattn {
namespace {

void matmul_avx2(const double* a, const double* b, double* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  const int n4 = n - (n % 4);
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      const __m256d va = _mm256_set1_pd(aip);
      int j = 0;
      for (; j < n4; j += 4) {
        const __m256d vb = _mm256_loadu_pd(bp + j);
        const __m256d vc = _mm256_loadu_pd(ci + j);
        _mm256_storeu_pd(ci + j, _mm256_add_pd(vc, _mm256_mul_pd(va, vb)));
      }
      for (; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void lerp_avx2(double sa, const double* a, double sb, const double* b, double* out,
               std::size_t n) {
  const __m256d vsa = _mm256_set1_pd(sa);
  const __m256d vsb = _mm256_set1_pd(sb);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_mul_pd(vsa, _mm256_loadu_pd(a + i));
    const __m256d vb = _mm256_mul_pd(vsb, _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(va, vb));
  }
  for (; i < n; ++i) out[i] = sa * a[i] + sb * b[i];
}

void scale_avx2(double s, const double* a, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, _mm256_loadu_pd(a + i)));
  }
  for (; i < n; ++i) out[i] = s * a[i];
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void hadamard_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void add_row_avx2(const double* a, const double* row, double* out, int rows, int cols) {
  const int c4 = cols - (cols % 4);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    double* oi = out + static_cast<std::size_t>(i) * cols;
    int j = 0;
    for (; j < c4; j += 4) {
      _mm256_storeu_pd(oi + j, _mm256_add_pd(_mm256_loadu_pd(ai + j), _mm256_loadu_pd(row + j)));
    }
    for (; j < cols; ++j) oi[j] = ai[j] + row[j];
  }
}

void sub_row_avx2(const double* a, const double* row, double* out, int rows, int cols) {
  const int c4 = cols - (cols % 4);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    double* oi = out + static_cast<std::size_t>(i) * cols;
    int j = 0;
    for (; j < c4; j += 4) {
      _mm256_storeu_pd(oi + j, _mm256_sub_pd(_mm256_loadu_pd(ai + j), _mm256_loadu_pd(row + j)));
    }
    for (; j < cols; ++j) oi[j] = ai[j] - row[j];
  }
}

void abs_colsum_avx2(const double* a, double* out, int rows, int cols) {
  for (int j = 0; j < cols; ++j) out[j] = 0.0;
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const int c4 = cols - (cols % 4);
  for (int i = 0; i < rows; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * cols;
    int j = 0;
    for (; j < c4; j += 4) {
      const __m256d va = _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(ai + j));
      _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_loadu_pd(out + j), va));
    }
    for (; j < cols; ++j) out[j] += std::fabs(ai[j]);
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels k = {
      "avx2",   matmul_avx2, lerp_avx2,    scale_avx2,   add_avx2,
      sub_avx2, hadamard_avx2, add_row_avx2, sub_row_avx2, abs_colsum_avx2,
  };
  return k;
}

}  // namespace hopattn

#endif  // __AVX2__
