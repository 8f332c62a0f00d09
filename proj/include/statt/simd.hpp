#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation; an AVX2+FMA variant is selected at runtime when
// the CPU supports it. STATT_SIMD=scalar|avx2 overrides the choice.

namespace statt::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
/// Best ISA supported by this CPU and build.
Isa detected_isa();
Isa active_isa();
/// Throws ContractError if the CPU cannot run `isa`.
void set_active_isa(Isa isa);

/// RAII override of the active ISA (tests use it to compare variants).
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

/// C = op(A) * op(B) (+ C when accumulate). op(A) is m x k, op(B) is k x n,
/// all row-major with the given leading dimensions.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

/// y += alpha * x
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);

template <typename T>
T dot(std::size_t n, const T* x, const T* y);

/// True when no element is NaN or infinite.
template <typename T>
bool all_finite(std::size_t n, const T* x);

namespace detail {

template <typename T>
struct KernelTable {
  void (*gemm)(bool, bool, std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*,
               std::size_t, T*, std::size_t, bool);
  void (*axpy)(std::size_t, T, const T*, T*);
  T (*dot)(std::size_t, const T*, const T*);
  bool (*all_finite)(std::size_t, const T*);
};

template <typename T>
const KernelTable<T>& scalar_kernels();
template <typename T>
const KernelTable<T>* avx2_kernels();  // nullptr when not compiled in

}  // namespace detail
}  // namespace statt::simd
