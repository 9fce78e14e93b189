#pragma once

// Data-parallel inner loops shared by the autodiff ops. Every kernel has a
// portable scalar reference and an AVX2+FMA variant; the variant is picked
// once at startup from CPUID and can be overridden with MIXSYNTH_KERNELS=scalar.
// Variants agree to rounding (they sum in different orders), so one process
// always uses one table to keep results bit-reproducible.

#include <cstddef>
#include <string_view>

namespace mixsynth::kernels {

enum class Isa { scalar, avx2 };

/// One run of samples lying between two consecutive frame centres of the
/// harmonic oscillator bank. Amplitudes are interpolated linearly between
/// the rows `amp0` and `amp1` (K values each) with per-sample weight alpha.
struct HarmonicSegment {
  const double* sin1;   // sin(theta_n)
  const double* cos1;   // cos(theta_n)
  const double* freq;   // instantaneous f0 in Hz, masks harmonics >= nyquist
  const double* alpha;  // interpolation weight toward amp1
  const double* amp0;
  const double* amp1;
  std::size_t count;
  std::size_t harmonics;
  double nyquist;
};

struct KernelTable {
  Isa isa;
  /// c[m x n] += a[m x k] * b[k x n], all row-major and dense.
  void (*gemm_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
  /// out[i] = sqrt(re^2 + im^2 + eps2) for n interleaved complex values.
  void (*magnitude)(const double* interleaved, double* out, std::size_t n, double eps2);
  /// out[i] += sum_k a_k(i) * [k f_i < nyquist] * sin(k theta_i)
  void (*harmonic_forward)(const HarmonicSegment& seg, double* out);
  /// Adjoint of harmonic_forward: dtheta[i] = g_i sum_k a_k k cos(k theta_i) (overwritten),
  /// damp0/damp1 (K each) accumulate.
  void (*harmonic_backward)(const HarmonicSegment& seg, const double* grad_out, double* dtheta,
                            double* damp0, double* damp1);
  /// out[i + j] += taps[j] * x[i]; out has len + ntaps - 1 entries.
  void (*fir_forward)(const double* x, std::size_t len, const double* taps, std::size_t ntaps,
                      double* out);
  /// dtaps[j] += sum_i grad_out[i + j] * x[i]
  void (*fir_backward)(const double* x, std::size_t len, const double* grad_out,
                       std::size_t ntaps, double* dtaps);
  /// sum_i |a_i - b_i|
  double (*l1_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();
/// Only valid to call when isa_available(Isa::avx2).
const KernelTable& avx2_table();

bool isa_available(Isa isa);
const KernelTable& table(Isa isa);

/// The table used by the library.
const KernelTable& active();
void select(Isa isa);
std::string_view isa_name(Isa isa);

}  // namespace mixsynth::kernels
