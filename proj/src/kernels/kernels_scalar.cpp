#include <cmath>

#include "mixsynth/kernels.hpp"

namespace mixsynth::kernels {
namespace {

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void magnitude(const double* z, double* out, std::size_t n, double eps2) {
  for (std::size_t i = 0; i < n; ++i) {
    const double re = z[2 * i];
    const double im = z[2 * i + 1];
    out[i] = std::sqrt(re * re + im * im + eps2);
  }
}

void harmonic_forward(const HarmonicSegment& seg, double* out) {
  for (std::size_t i = 0; i < seg.count; ++i) {
    const double c1 = seg.cos1[i];
    const double al = seg.alpha[i];
    const double f = seg.freq[i];
    double s_prev = 0.0, s = seg.sin1[i];
    double acc = 0.0;
    for (std::size_t k = 0; k < seg.harmonics; ++k) {
      const double kf = static_cast<double>(k + 1) * f;
      if (kf < seg.nyquist) {
        const double a = seg.amp0[k] + al * (seg.amp1[k] - seg.amp0[k]);
        acc += a * s;
      }
      const double s_next = 2.0 * c1 * s - s_prev;
      s_prev = s;
      s = s_next;
    }
    out[i] += acc;
  }
}

void harmonic_backward(const HarmonicSegment& seg, const double* grad_out, double* dtheta,
                       double* damp0, double* damp1) {
  for (std::size_t i = 0; i < seg.count; ++i) {
    const double g = grad_out[i];
    const double c1 = seg.cos1[i];
    const double al = seg.alpha[i];
    const double f = seg.freq[i];
    double s_prev = 0.0, s = seg.sin1[i];
    double c_prev = 1.0, c = c1;
    double acc = 0.0;
    for (std::size_t k = 0; k < seg.harmonics; ++k) {
      const double kk = static_cast<double>(k + 1);
      if (kk * f < seg.nyquist) {
        const double a = seg.amp0[k] + al * (seg.amp1[k] - seg.amp0[k]);
        const double gs = g * s;
        damp0[k] += gs - al * gs;
        damp1[k] += al * gs;
        acc += a * kk * c;
      }
      const double s_next = 2.0 * c1 * s - s_prev;
      const double c_next = 2.0 * c1 * c - c_prev;
      s_prev = s;
      s = s_next;
      c_prev = c;
      c = c_next;
    }
    dtheta[i] = g * acc;
  }
}

void fir_forward(const double* x, std::size_t len, const double* taps, std::size_t ntaps,
                 double* out) {
  for (std::size_t j = 0; j < ntaps; ++j) {
    const double t = taps[j];
    double* o = out + j;
    for (std::size_t i = 0; i < len; ++i) o[i] += t * x[i];
  }
}

void fir_backward(const double* x, std::size_t len, const double* grad_out, std::size_t ntaps,
                  double* dtaps) {
  for (std::size_t j = 0; j < ntaps; ++j) {
    const double* g = grad_out + j;
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += g[i] * x[i];
    dtaps[j] += acc;
  }
}

double l1_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::scalar,      gemm_acc,    magnitude,   harmonic_forward,
                             harmonic_backward, fir_forward, fir_backward, l1_distance};
  return t;
}

}  // namespace mixsynth::kernels
