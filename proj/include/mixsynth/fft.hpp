#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace mixsynth {

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

/// Iterative radix-2 complex FFT of a fixed power-of-two length.
class ComplexFft {
 public:
  explicit ComplexFft(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  /// In place. Forward uses e^{-i...}; inverse uses e^{+i...} and is unnormalised.
  void transform(std::span<Complex> data, bool inverse) const;

 private:
  std::size_t n_;
  std::vector<Complex> twiddles_;  // e^{-2 pi i k / n}, k < n/2
  std::vector<std::size_t> bitrev_;
};

/// Real-input FFT of power-of-two length n built on a complex FFT of n/2.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// spectrum[k] = sum_t x[t] e^{-2 pi i k t / n}, k = 0..n/2.
  void forward(std::span<const double> x, std::span<Complex> spectrum) const;
  /// x[t] = sum_{k=0}^{n-1} H[k] e^{+2 pi i k t / n} with H Hermitian-extended
  /// from the n/2+1 given bins (imaginary parts of DC and Nyquist ignored).
  /// Unnormalised: inverse(forward(x)) == n * x.
  void inverse(std::span<const Complex> spectrum, std::span<double> x) const;

 private:
  std::size_t n_;
  ComplexFft half_;
  std::vector<Complex> twiddles_;  // e^{-2 pi i k / n}, k <= n/2
};

/// Shared, immutable plan for a given length (thread-safe lookup).
std::shared_ptr<const RealFft> real_fft_plan(std::size_t n);

/// O(n^2) reference transform of a real sequence; n need not be a power of two.
std::vector<Complex> direct_dft(std::span<const double> x);

}  // namespace mixsynth
