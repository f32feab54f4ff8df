#include "zoomprop/kernels.hpp"

namespace zoomprop::kernels::detail {
namespace {

float max_reduce_scalar(const float* x, std::size_t n) {
  float m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{max_reduce_scalar, dot_scalar, axpy_scalar, relu_scalar};
  return t;
}

}  // namespace zoomprop::kernels::detail
