#include <cmath>
#include <cstring>

#include "stitchlab/kernels.hpp"

// Reference kernels. Plain loops, one accumulator, no FMA contraction; the
// SIMD variants are checked against these.

namespace stitchlab::kernels {
namespace {

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void mul_add_scalar(const double* a, const double* b, double* out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(const double* x, double alpha, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void matmul_scalar(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// A stored [k,m]; C[i,j] = sum_p A[p,i] * B[p,j].
void matmul_tn_scalar(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// B stored [n,k]; C[i,j] = dot(A row i, B row j).
void matmul_nt_scalar(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n,
                      bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void adam_update_scalar(double* param, const double* grad, double* m1,
                        double* m2, std::size_t n, double lr, double beta1,
                        double beta2, double eps, double weight_decay,
                        bool decoupled, double bias_corr1, double bias_corr2) {
  for (std::size_t i = 0; i < n; ++i) {
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

const KernelTable& scalar_table() {
  static const KernelTable table = {
      add_scalar,    sub_scalar,       mul_scalar,       mul_add_scalar,
      axpy_scalar,   scale_scalar,     dot_scalar,       sum_scalar,
      matmul_scalar, matmul_tn_scalar, matmul_nt_scalar, adam_update_scalar,
  };
  return table;
}

bool all_finite(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return false;
  }
  return true;
}

}  // namespace stitchlab::kernels
