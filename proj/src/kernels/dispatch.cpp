#include <atomic>
#include <cstdlib>
#include <cstring>

#include "stitchlab/errors.hpp"
#include "stitchlab/kernels.hpp"

namespace stitchlab::kernels {
namespace {

bool detect_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  // STITCHLAB_KERNELS=scalar forces the reference path (debugging aid).
  if (const char* env = std::getenv("STITCHLAB_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
  }
  return detect_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<const KernelTable*>& active_table_slot() {
  static std::atomic<const KernelTable*> slot{
      initial_backend() == Backend::kAvx2 ? &avx2_table() : &scalar_table()};
  return slot;
}

std::atomic<Backend>& active_backend_slot() {
  static std::atomic<Backend> slot{initial_backend()};
  return slot;
}

const KernelTable& active() { return *active_table_slot().load(); }

}  // namespace

bool avx2_supported() { return detect_avx2(); }

Backend active_backend() { return active_backend_slot().load(); }

void force_backend(Backend backend) {
  if (backend == Backend::kAvx2 && !avx2_supported()) {
    throw ConfigError("kernels: AVX2 backend not supported on this CPU");
  }
  active_backend_slot().store(backend);
  active_table_slot().store(backend == Backend::kAvx2 ? &avx2_table()
                                                      : &scalar_table());
}

const char* backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  active().add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  active().sub(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  active().mul(a, b, out, n);
}
void mul_add(const double* a, const double* b, double* out, std::size_t n) {
  active().mul_add(a, b, out, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
void scale(const double* x, double alpha, double* out, std::size_t n) {
  active().scale(x, alpha, out, n);
}
double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
double sum(const double* x, std::size_t n) { return active().sum(x, n); }
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  active().matmul(a, b, c, m, k, n, accumulate);
}
void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  active().matmul_tn(a, b, c, m, k, n, accumulate);
}
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  active().matmul_nt(a, b, c, m, k, n, accumulate);
}
void adam_update(double* param, const double* grad, double* m1, double* m2,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double weight_decay, bool decoupled,
                 double bias_corr1, double bias_corr2) {
  active().adam_update(param, grad, m1, m2, n, lr, beta1, beta2, eps,
                       weight_decay, decoupled, bias_corr1, bias_corr2);
}

}  // namespace stitchlab::kernels
