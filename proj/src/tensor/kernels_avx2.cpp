// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only entered after runtime CPU detection.

#include "statt/simd.hpp"

#if defined(STATT_HAVE_AVX2)

#include <immintrin.h>

#include <vector>

namespace statt::simd::detail {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V set1(T v) { return _mm256_set1_ps(v); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V bit_or(V a, V b) { return _mm256_or_ps(a, b); }
  static bool all_zero_bits(V v) { return _mm256_testz_si256(_mm256_castps_si256(v), _mm256_castps_si256(v)); }
  static __m256i mask(std::size_t r) {
    alignas(32) int m[8];
    for (std::size_t i = 0; i < 8; ++i) m[i] = i < r ? -1 : 0;
    return _mm256_load_si256(reinterpret_cast<const __m256i*>(m));
  }
  static V mload(const T* p, __m256i m) { return _mm256_maskload_ps(p, m); }
  static void mstore(T* p, __m256i m, V v) { _mm256_maskstore_ps(p, m, v); }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V set1(T v) { return _mm256_set1_pd(v); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V bit_or(V a, V b) { return _mm256_or_pd(a, b); }
  static bool all_zero_bits(V v) { return _mm256_testz_si256(_mm256_castpd_si256(v), _mm256_castpd_si256(v)); }
  static __m256i mask(std::size_t r) {
    alignas(32) long long m[4];
    for (std::size_t i = 0; i < 4; ++i) m[i] = i < r ? -1 : 0;
    return _mm256_load_si256(reinterpret_cast<const __m256i*>(m));
  }
  static V mload(const T* p, __m256i m) { return _mm256_maskload_pd(p, m); }
  static void mstore(T* p, __m256i m, V v) { _mm256_maskstore_pd(p, m, v); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// Register block: MR rows x NV vectors. The last vector may be partial
// (`tail` lanes valid, 0 means full).
template <typename S, std::size_t MR, std::size_t NV>
inline void micro(std::size_t k, const typename S::T* a, std::size_t lda, const typename S::T* b,
                  std::size_t ldb, typename S::T* c, std::size_t ldc, std::size_t tail, bool accumulate) {
  using V = typename S::V;
  V acc[MR][NV];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t v = 0; v < NV; ++v) acc[r][v] = S::zero();
  const __m256i m = S::mask(tail == 0 ? S::W : tail);
  for (std::size_t p = 0; p < k; ++p) {
    V bv[NV];
    const typename S::T* brow = b + p * ldb;
    for (std::size_t v = 0; v < NV; ++v) {
      bv[v] = (v + 1 == NV && tail) ? S::mload(brow + v * S::W, m) : S::load(brow + v * S::W);
    }
    for (std::size_t r = 0; r < MR; ++r) {
      const V av = S::set1(a[r * lda + p]);
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] = S::fmadd(av, bv[v], acc[r][v]);
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    typename S::T* crow = c + r * ldc;
    for (std::size_t v = 0; v < NV; ++v) {
      const bool partial = (v + 1 == NV && tail);
      V out = acc[r][v];
      if (accumulate) out = S::add(out, partial ? S::mload(crow + v * S::W, m) : S::load(crow + v * S::W));
      if (partial) {
        S::mstore(crow + v * S::W, m, out);
      } else {
        S::store(crow + v * S::W, out);
      }
    }
  }
}

template <typename S, std::size_t MR>
inline void row_block(std::size_t n, std::size_t k, const typename S::T* a, std::size_t lda,
                      const typename S::T* b, std::size_t ldb, typename S::T* c, std::size_t ldc,
                      bool accumulate) {
  constexpr std::size_t W = S::W;
  std::size_t j = 0;
  for (; j + 2 * W <= n; j += 2 * W) micro<S, MR, 2>(k, a, lda, b + j, ldb, c + j, ldc, 0, accumulate);
  for (; j + W <= n; j += W) micro<S, MR, 1>(k, a, lda, b + j, ldb, c + j, ldc, 0, accumulate);
  if (j < n) micro<S, MR, 1>(k, a, lda, b + j, ldb, c + j, ldc, n - j, accumulate);
}

// C = A * B^T reading both operands along contiguous rows, four columns of
// C at a time. Used instead of packing B^T when the shared dimension is long.
template <typename S>
void gemm_nt_rows(std::size_t m, std::size_t n, std::size_t k, const typename S::T* a, std::size_t lda,
                  const typename S::T* b, std::size_t ldb, typename S::T* c, std::size_t ldc, bool accumulate) {
  using T = typename S::T;
  using V = typename S::V;
  for (std::size_t i = 0; i < m; ++i) {
    const T* ar = a + i * lda;
    T* cr = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const T* b0 = b + j * ldb;
      V acc[4] = {S::zero(), S::zero(), S::zero(), S::zero()};
      std::size_t p = 0;
      for (; p + S::W <= k; p += S::W) {
        const V av = S::load(ar + p);
        for (std::size_t q = 0; q < 4; ++q) acc[q] = S::fmadd(av, S::load(b0 + q * ldb + p), acc[q]);
      }
      for (std::size_t q = 0; q < 4; ++q) {
        T s = S::hsum(acc[q]);
        for (std::size_t r = p; r < k; ++r) s += ar[r] * b0[q * ldb + r];
        cr[j + q] = accumulate ? cr[j + q] + s : s;
      }
    }
    for (; j < n; ++j) {
      const T* br = b + j * ldb;
      V acc = S::zero();
      std::size_t p = 0;
      for (; p + S::W <= k; p += S::W) acc = S::fmadd(S::load(ar + p), S::load(br + p), acc);
      T s = S::hsum(acc);
      for (; p < k; ++p) s += ar[p] * br[p];
      cr[j] = accumulate ? cr[j] + s : s;
    }
  }
}

template <typename S>
void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const typename S::T* a, std::size_t lda, const typename S::T* b, std::size_t ldb,
               typename S::T* c, std::size_t ldc, bool accumulate) {
  using T = typename S::T;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = T(0);
    return;
  }
  if (trans_b && !trans_a && k >= 8 * S::W) {
    gemm_nt_rows<S>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    return;
  }
  // Pack transposed operands into plain row-major buffers.
  thread_local std::vector<T> pack_a, pack_b;
  if (trans_a) {
    pack_a.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) pack_a[i * k + p] = a[p * lda + i];
    a = pack_a.data();
    lda = k;
  }
  if (trans_b) {
    pack_b.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) pack_b[p * n + j] = b[j * ldb + p];
    b = pack_b.data();
    ldb = n;
  }
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_block<S, 4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
  for (; i < m; ++i) row_block<S, 1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
}

template <typename S>
void axpy_avx2(std::size_t n, typename S::T alpha, const typename S::T* x, typename S::T* y) {
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) S::store(y + i, S::fmadd(av, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename S>
typename S::T dot_avx2(std::size_t n, const typename S::T* x, const typename S::T* y) {
  auto acc = S::zero();
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) acc = S::fmadd(S::load(x + i), S::load(y + i), acc);
  typename S::T s = S::hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename S>
bool all_finite_avx2(std::size_t n, const typename S::T* x) {
  // x - x is +0 for finite x and NaN otherwise.
  auto acc = S::zero();
  std::size_t i = 0;
  for (; i + S::W <= n; i += S::W) {
    const auto v = S::load(x + i);
    acc = S::bit_or(acc, S::sub(v, v));
  }
  bool ok = S::all_zero_bits(acc);
  for (; i < n; ++i) ok = ok && x[i] - x[i] == 0;
  return ok;
}

}  // namespace

template <>
const KernelTable<float>* avx2_kernels<float>() {
  static const KernelTable<float> table{&gemm_avx2<F32>, &axpy_avx2<F32>, &dot_avx2<F32>, &all_finite_avx2<F32>};
  return &table;
}

template <>
const KernelTable<double>* avx2_kernels<double>() {
  static const KernelTable<double> table{&gemm_avx2<F64>, &axpy_avx2<F64>, &dot_avx2<F64>, &all_finite_avx2<F64>};
  return &table;
}

}  // namespace statt::simd::detail

#else

namespace statt::simd::detail {
template <>
const KernelTable<float>* avx2_kernels<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* avx2_kernels<double>() {
  return nullptr;
}
}  // namespace statt::simd::detail

#endif
