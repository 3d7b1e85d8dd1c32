#pragma once

#include <cstddef>

// Dense double-precision kernels behind the tensor library. Every kernel has
// a scalar reference implementation and an AVX2 variant; the backend is
// picked once at startup from cpuid and can be forced for testing. The two
// backends are equivalence-tested: elementwise kernels round identically
// (bit-equal results), reductions and matrix products accumulate in a
// different order and are compared up to roundoff.
namespace stitchlab::kernels {

enum class Backend { kScalar, kAvx2 };

Backend active_backend();
bool avx2_supported();
// Testing hook. Throws ConfigError when the backend is unavailable.
void force_backend(Backend backend);
const char* backend_name(Backend backend);

// Elementwise (bit-equal across backends).
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
// out += a * b elementwise.
void mul_add(const double* a, const double* b, double* out, std::size_t n);
// y += alpha * x.
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(const double* x, double alpha, double* out, std::size_t n);

// Reductions (roundoff-equal across backends).
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);

// C[m,n] = A[m,k] * B[k,n], row-major. accumulate adds into C.
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);
// C[m,n] = A^T * B with A stored row-major as [k,m].
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
// C[m,n] = A * B^T with B stored row-major as [n,k].
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

// Fused Adam/AdamW update. bias_corr1/2 are 1 - beta^t. decoupled selects
// AdamW-style weight decay, otherwise decay is added to the gradient.
// Bit-equal across backends.
void adam_update(double* param, const double* grad, double* m1, double* m2,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double weight_decay, bool decoupled,
                 double bias_corr1, double bias_corr2);

bool all_finite(const double* x, std::size_t n);

// Per-backend tables, used by the dispatcher and the equivalence tests.
struct KernelTable {
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*mul_add)(const double*, const double*, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*matmul)(const double*, const double*, double*, std::size_t,
                 std::size_t, std::size_t, bool);
  void (*matmul_tn)(const double*, const double*, double*, std::size_t,
                    std::size_t, std::size_t, bool);
  void (*matmul_nt)(const double*, const double*, double*, std::size_t,
                    std::size_t, std::size_t, bool);
  void (*adam_update)(double*, const double*, double*, double*, std::size_t,
                      double, double, double, double, double, bool, double,
                      double);
};

const KernelTable& scalar_table();
const KernelTable& avx2_table();  // valid only when avx2_supported()

}  // namespace stitchlab::kernels
