#include <atomic>
#include <cstdlib>
#include <string>

#include "statt/errors.hpp"
#include "statt/simd.hpp"

namespace statt::simd {
namespace {

bool cpu_has_avx2() {
#if defined(STATT_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const Isa best = detected_isa();
  if (const char* env = std::getenv("STATT_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && best == Isa::avx2) return Isa::avx2;
  }
  return best;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

template <typename T>
const detail::KernelTable<T>& table() {
  if (active().load(std::memory_order_relaxed) == Isa::avx2) return *detail::avx2_kernels<T>();
  return detail::scalar_kernels<T>();
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  return isa;
}

Isa active_isa() { return active().load(); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) {
    throw ContractError("AVX2 kernels requested but not supported on this CPU/build");
  }
  active().store(isa);
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  table<T>().gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  table<T>().axpy(n, alpha, x, y);
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
  return table<T>().dot(n, x, y);
}

template <typename T>
bool all_finite(std::size_t n, const T* x) {
  return table<T>().all_finite(n, x);
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                          const float*, std::size_t, float*, std::size_t, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                           const double*, std::size_t, double*, std::size_t, bool);
template void axpy<float>(std::size_t, float, const float*, float*);
template void axpy<double>(std::size_t, double, const double*, double*);
template float dot<float>(std::size_t, const float*, const float*);
template double dot<double>(std::size_t, const double*, const double*);
template bool all_finite<float>(std::size_t, const float*);
template bool all_finite<double>(std::size_t, const double*);

}  // namespace statt::simd
