#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "zoomprop/kernels.hpp"

namespace zoomprop::kernels {

namespace detail {
#ifndef ZOOMPROP_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() {
#if defined(ZOOMPROP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("ZOOMPROP_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::kScalar;
    if (v == "avx2" && available(Backend::kAvx2)) return Backend::kAvx2;
  }
  return available(Backend::kAvx2) ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

bool available(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2: {
      static const bool ok = detail::avx2_table() != nullptr && cpu_has_avx2();
      return ok;
    }
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!available(backend)) throw std::invalid_argument("kernel backend not available on this CPU");
  return backend == Backend::kAvx2 ? *detail::avx2_table() : detail::scalar_table();
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!available(backend)) throw std::invalid_argument("kernel backend not available on this CPU");
  current().store(backend, std::memory_order_relaxed);
}

std::string_view name(Backend backend) { return backend == Backend::kAvx2 ? "avx2" : "scalar"; }

const KernelTable& active() {
  // Resolved per call: the table pointer is a static, so this is two loads.
  return active_backend() == Backend::kAvx2 ? *detail::avx2_table() : detail::scalar_table();
}

}  // namespace zoomprop::kernels
