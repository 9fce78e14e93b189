#include <cmath>

#include "mixsynth/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define MIXSYNTH_HAVE_X86 1
#else
#define MIXSYNTH_HAVE_X86 0
#endif

namespace mixsynth::kernels {

#if MIXSYNTH_HAVE_X86
namespace {

#define MIXSYNTH_AVX2 __attribute__((target("avx2,fma")))

MIXSYNTH_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 4 x 8 register tile of C, accumulated over the full inner dimension.
MIXSYNTH_AVX2 void gemm_tile_4x8(const double* a, const double* b, double* c, std::size_t k,
                                 std::size_t lda, std::size_t ldb, std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

MIXSYNTH_AVX2 void gemm_row(const double* arow, const double* b, double* crow, std::size_t k,
                            std::size_t n, std::size_t j0) {
  std::size_t j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(crow + j);
    for (std::size_t p = 0; p < k; ++p) {
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * n + j), acc);
    }
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double acc = crow[j];
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(arow[p], b[p * n + j], acc);
    crow[j] = acc;
  }
}

MIXSYNTH_AVX2 void gemm_acc(const double* a, const double* b, double* c, std::size_t m,
                            std::size_t k, std::size_t n) {
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) gemm_tile_4x8(a + i * k, b + j, c + i * n + j, k, k, n, n);
    if (n8 < n) {
      for (std::size_t r = 0; r < 4; ++r) gemm_row(a + (i + r) * k, b, c + (i + r) * n, k, n, n8);
    }
  }
  for (; i < m; ++i) gemm_row(a + i * k, b, c + i * n, k, n, 0);
}

MIXSYNTH_AVX2 void magnitude(const double* z, double* out, std::size_t n, double eps2) {
  const __m256d e = _mm256_set1_pd(eps2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v0 = _mm256_loadu_pd(z + 2 * i);      // r0 i0 r1 i1
    const __m256d v1 = _mm256_loadu_pd(z + 2 * i + 4);  // r2 i2 r3 i3
    const __m256d sq0 = _mm256_mul_pd(v0, v0);
    const __m256d sq1 = _mm256_mul_pd(v1, v1);
    // hadd -> (s0, s2, s1, s3); permute to (s0, s1, s2, s3)
    __m256d s = _mm256_hadd_pd(sq0, sq1);
    s = _mm256_permute4x64_pd(s, 0b11011000);
    _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_add_pd(s, e)));
  }
  for (; i < n; ++i) {
    const double re = z[2 * i], im = z[2 * i + 1];
    out[i] = std::sqrt(re * re + im * im + eps2);
  }
}

MIXSYNTH_AVX2 void harmonic_forward(const HarmonicSegment& seg, double* out) {
  const std::size_t n4 = seg.count - seg.count % 4;
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d nyq = _mm256_set1_pd(seg.nyquist);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d c1 = _mm256_loadu_pd(seg.cos1 + i);
    const __m256d two_c1 = _mm256_mul_pd(two, c1);
    const __m256d al = _mm256_loadu_pd(seg.alpha + i);
    const __m256d f = _mm256_loadu_pd(seg.freq + i);
    __m256d s_prev = _mm256_setzero_pd();
    __m256d s = _mm256_loadu_pd(seg.sin1 + i);
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < seg.harmonics; ++k) {
      const __m256d kf = _mm256_mul_pd(_mm256_set1_pd(static_cast<double>(k + 1)), f);
      const __m256d mask = _mm256_cmp_pd(kf, nyq, _CMP_LT_OQ);
      const __m256d a0 = _mm256_set1_pd(seg.amp0[k]);
      const __m256d a = _mm256_fmadd_pd(al, _mm256_set1_pd(seg.amp1[k] - seg.amp0[k]), a0);
      acc = _mm256_add_pd(acc, _mm256_and_pd(mask, _mm256_mul_pd(a, s)));
      const __m256d s_next = _mm256_fmsub_pd(two_c1, s, s_prev);
      s_prev = s;
      s = s_next;
    }
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), acc));
  }
  if (n4 < seg.count) {
    HarmonicSegment tail = seg;
    tail.sin1 += n4;
    tail.cos1 += n4;
    tail.freq += n4;
    tail.alpha += n4;
    tail.count -= n4;
    scalar_table().harmonic_forward(tail, out + n4);
  }
}

MIXSYNTH_AVX2 void harmonic_backward(const HarmonicSegment& seg, const double* grad_out,
                                     double* dtheta, double* damp0, double* damp1) {
  constexpr std::size_t kMaxVec = 256;
  const std::size_t n4 = seg.count - seg.count % 4;
  if (seg.harmonics > kMaxVec) {
    scalar_table().harmonic_backward(seg, grad_out, dtheta, damp0, damp1);
    return;
  }
  alignas(32) double acc0[kMaxVec * 4];
  alignas(32) double acc1[kMaxVec * 4];
  for (std::size_t k = 0; k < seg.harmonics * 4; ++k) acc0[k] = acc1[k] = 0.0;
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d nyq = _mm256_set1_pd(seg.nyquist);
  for (std::size_t i = 0; i < n4; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad_out + i);
    const __m256d c1 = _mm256_loadu_pd(seg.cos1 + i);
    const __m256d two_c1 = _mm256_mul_pd(two, c1);
    const __m256d al = _mm256_loadu_pd(seg.alpha + i);
    const __m256d f = _mm256_loadu_pd(seg.freq + i);
    __m256d s_prev = _mm256_setzero_pd(), s = _mm256_loadu_pd(seg.sin1 + i);
    __m256d c_prev = _mm256_set1_pd(1.0), c = c1;
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < seg.harmonics; ++k) {
      const __m256d kk = _mm256_set1_pd(static_cast<double>(k + 1));
      const __m256d mask = _mm256_cmp_pd(_mm256_mul_pd(kk, f), nyq, _CMP_LT_OQ);
      const __m256d a0 = _mm256_set1_pd(seg.amp0[k]);
      const __m256d a = _mm256_fmadd_pd(al, _mm256_set1_pd(seg.amp1[k] - seg.amp0[k]), a0);
      const __m256d gs = _mm256_and_pd(mask, _mm256_mul_pd(g, s));
      const __m256d w1 = _mm256_mul_pd(al, gs);
      _mm256_store_pd(acc0 + 4 * k, _mm256_add_pd(_mm256_load_pd(acc0 + 4 * k), _mm256_sub_pd(gs, w1)));
      _mm256_store_pd(acc1 + 4 * k, _mm256_add_pd(_mm256_load_pd(acc1 + 4 * k), w1));
      acc = _mm256_add_pd(acc, _mm256_and_pd(mask, _mm256_mul_pd(_mm256_mul_pd(a, kk), c)));
      const __m256d s_next = _mm256_fmsub_pd(two_c1, s, s_prev);
      const __m256d c_next = _mm256_fmsub_pd(two_c1, c, c_prev);
      s_prev = s;
      s = s_next;
      c_prev = c;
      c = c_next;
    }
    _mm256_storeu_pd(dtheta + i, _mm256_mul_pd(g, acc));
  }
  for (std::size_t k = 0; k < seg.harmonics; ++k) {
    damp0[k] += hsum(_mm256_load_pd(acc0 + 4 * k));
    damp1[k] += hsum(_mm256_load_pd(acc1 + 4 * k));
  }
  if (n4 < seg.count) {
    HarmonicSegment tail = seg;
    tail.sin1 += n4;
    tail.cos1 += n4;
    tail.freq += n4;
    tail.alpha += n4;
    tail.count -= n4;
    scalar_table().harmonic_backward(tail, grad_out + n4, dtheta + n4, damp0, damp1);
  }
}

MIXSYNTH_AVX2 void fir_forward(const double* x, std::size_t len, const double* taps,
                               std::size_t ntaps, double* out) {
  const std::size_t n4 = len - len % 4;
  for (std::size_t j = 0; j < ntaps; ++j) {
    const __m256d t = _mm256_set1_pd(taps[j]);
    double* o = out + j;
    std::size_t i = 0;
    for (; i < n4; i += 4) {
      _mm256_storeu_pd(o + i, _mm256_fmadd_pd(t, _mm256_loadu_pd(x + i), _mm256_loadu_pd(o + i)));
    }
    for (; i < len; ++i) o[i] = std::fma(taps[j], x[i], o[i]);
  }
}

MIXSYNTH_AVX2 void fir_backward(const double* x, std::size_t len, const double* grad_out,
                                std::size_t ntaps, double* dtaps) {
  const std::size_t n4 = len - len % 4;
  for (std::size_t j = 0; j < ntaps; ++j) {
    const double* g = grad_out + j;
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i < n4; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(g + i), _mm256_loadu_pd(x + i), acc);
    double tail = hsum(acc);
    for (; i < len; ++i) tail = std::fma(g[i], x[i], tail);
    dtaps[j] += tail;
  }
}

MIXSYNTH_AVX2 double l1_distance(const double* a, const double* b, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign, d));
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += std::abs(a[i] - b[i]);
  return total;
}

#undef MIXSYNTH_AVX2

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{Isa::avx2,        gemm_acc,    magnitude,   harmonic_forward,
                             harmonic_backward, fir_forward, fir_backward, l1_distance};
  return t;
}

#else

const KernelTable& avx2_table() { return scalar_table(); }

#endif

}  // namespace mixsynth::kernels
