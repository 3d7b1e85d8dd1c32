// AVX2/FMA variants. Elementwise kernels avoid FMA contraction so they round
// exactly like the scalar reference; matmul/dot/sum use FMA and multiple
// accumulators and are compared to the reference up to roundoff.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "stitchlab/kernels.hpp"

namespace stitchlab::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_add_avx2(const double* a, const double* b, double* out,
                  std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod =
        _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), prod));
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(const double* x, double alpha, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(_mm256_add_pd(acc0, acc1)) + tail;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i];
  return hsum(_mm256_add_pd(acc0, acc1)) + tail;
}

// Inner microkernel shared by matmul and matmul_tn: C rows stay in registers
// across the whole k loop, A is read through a caller-supplied stride.
template <bool kAccumulate>
void gemm_broadcast(const double* a, std::size_t a_row_stride,
                    std::size_t a_col_stride, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* abase = a + i * a_row_stride;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d c0, c1, c2, c3;
      if (kAccumulate) {
        c0 = _mm256_loadu_pd(crow + j);
        c1 = _mm256_loadu_pd(crow + j + 4);
        c2 = _mm256_loadu_pd(crow + j + 8);
        c3 = _mm256_loadu_pd(crow + j + 12);
      } else {
        c0 = c1 = c2 = c3 = _mm256_setzero_pd();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(abase[p * a_col_stride]);
        const double* brow = b + p * n + j;
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
        c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
        c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + 4, c1);
      _mm256_storeu_pd(crow + j + 8, c2);
      _mm256_storeu_pd(crow + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 =
          kAccumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(abase[p * a_col_stride]);
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * n + j), c0);
      }
      _mm256_storeu_pd(crow + j, c0);
    }
    for (; j < n; ++j) {
      double acc = kAccumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += abase[p * a_col_stride] * b[p * n + j];
      }
      crow[j] = acc;
    }
  }
}

void matmul_avx2(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate) {
  if (accumulate) {
    gemm_broadcast<true>(a, k, 1, b, c, m, k, n);
  } else {
    gemm_broadcast<false>(a, k, 1, b, c, m, k, n);
  }
}

void matmul_tn_avx2(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  // A stored [k,m]; row i of the logical A^T walks column i with stride m.
  if (accumulate) {
    gemm_broadcast<true>(a, 1, m, b, c, m, k, n);
  } else {
    gemm_broadcast<false>(a, 1, m, b, c, m, k, n);
  }
}

void matmul_nt_avx2(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double acc = dot_avx2(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void adam_update_avx2(double* param, const double* grad, double* m1,
                      double* m2, std::size_t n, double lr, double beta1,
                      double beta2, double eps, double weight_decay,
                      bool decoupled, double bias_corr1, double bias_corr2) {
  // Mirrors the scalar update op-for-op (mul/add, no FMA) so results are
  // bit-equal across backends.
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vomb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d vomb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vbc1 = _mm256_set1_pd(bias_corr1);
  const __m256d vbc2 = _mm256_set1_pd(bias_corr2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vwd = _mm256_set1_pd(weight_decay);
  const __m256d vlrwd = _mm256_set1_pd(lr * weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d g = _mm256_loadu_pd(grad + i);
    __m256d p = _mm256_loadu_pd(param + i);
    if (weight_decay != 0.0 && !decoupled) {
      g = _mm256_add_pd(g, _mm256_mul_pd(vwd, p));
    }
    __m256d m = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m1 + i)),
                              _mm256_mul_pd(vomb1, g));
    __m256d v = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(m2 + i)),
                              _mm256_mul_pd(vomb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m1 + i, m);
    _mm256_storeu_pd(m2 + i, v);
    const __m256d mhat = _mm256_div_pd(m, vbc1);
    const __m256d vhat = _mm256_div_pd(v, vbc2);
    if (weight_decay != 0.0 && decoupled) {
      p = _mm256_sub_pd(p, _mm256_mul_pd(vlrwd, p));
    }
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    p = _mm256_sub_pd(p, _mm256_mul_pd(vlr, _mm256_div_pd(mhat, denom)));
    _mm256_storeu_pd(param + i, p);
  }
  for (; i < n; ++i) {
    double g = grad[i];
    if (weight_decay != 0.0 && !decoupled) g = g + weight_decay * param[i];
    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
    m2[i] = beta2 * m2[i] + (1.0 - beta2) * (g * g);
    const double mhat = m1[i] / bias_corr1;
    const double vhat = m2[i] / bias_corr2;
    double p = param[i];
    if (weight_decay != 0.0 && decoupled) p = p - lr * weight_decay * p;
    param[i] = p - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table = {
      add_avx2,    sub_avx2,       mul_avx2,       mul_add_avx2,
      axpy_avx2,   scale_avx2,     dot_avx2,       sum_avx2,
      matmul_avx2, matmul_tn_avx2, matmul_nt_avx2, adam_update_avx2,
  };
  return table;
}

}  // namespace stitchlab::kernels

#else

#include "stitchlab/kernels.hpp"

namespace stitchlab::kernels {

// Non-x86 builds fall back to the scalar reference.
const KernelTable& avx2_table() { return scalar_table(); }

}  // namespace stitchlab::kernels

#endif
