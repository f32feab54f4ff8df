#pragma once

// Data-parallel inner loops shared by RoI pooling and the SC-Net head.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant. The variant is picked once at startup from CPUID; the
// ZOOMPROP_KERNELS environment variable ("scalar" or "avx2") or
// set_backend() overrides it. max_reduce, axpy and relu are bit-identical
// across backends; dot differs only in summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace zoomprop::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  float (*max_reduce)(const float* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*relu)(double* x, std::size_t n);
};

const KernelTable& table(Backend backend);
bool available(Backend backend);

Backend active_backend();
// Throws std::invalid_argument if the backend is not supported on this CPU.
void set_backend(Backend backend);
std::string_view name(Backend backend);

const KernelTable& active();

inline float max_reduce(std::span<const float> x) { return active().max_reduce(x.data(), x.size()); }
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void relu(std::span<double> x) { active().relu(x.data(), x.size()); }

namespace detail {
const KernelTable& scalar_table();
// nullptr when the AVX2 translation unit was not built for this target.
const KernelTable* avx2_table();
}  // namespace detail

}  // namespace zoomprop::kernels
