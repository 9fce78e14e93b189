#include "mixsynth/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "mixsynth/error.hpp"

namespace mixsynth {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

ComplexFft::ComplexFft(std::size_t n) : n_(n) {
  if (!is_power_of_two(n)) throw ValidationError("fft: length " + std::to_string(n) + " is not a power of two");
  twiddles_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = {std::cos(ang), std::sin(ang)};
  }
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void ComplexFft::transform(std::span<Complex> data, bool inverse) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = twiddles_[k * stride];
        if (inverse) w = std::conj(w);
        Complex& lo = data[start + k];
        Complex& hi = data[start + k + half];
        // explicit complex multiply; std::complex operator* carries NaN-recovery branches
        const Complex t{w.real() * hi.real() - w.imag() * hi.imag(),
                        w.real() * hi.imag() + w.imag() * hi.real()};
        hi = lo - t;
        lo += t;
      }
    }
  }
}

RealFft::RealFft(std::size_t n) : n_(n), half_(n >= 2 ? n / 2 : 1) {
  if (n < 2 || !is_power_of_two(n)) {
    throw ValidationError("real fft: length " + std::to_string(n) + " must be a power of two >= 2");
  }
  twiddles_.resize(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = {std::cos(ang), std::sin(ang)};
  }
}

void RealFft::forward(std::span<const double> x, std::span<Complex> spectrum) const {
  const std::size_t h = n_ / 2;
  std::vector<Complex> z(h);
  for (std::size_t i = 0; i < h; ++i) z[i] = {x[2 * i], x[2 * i + 1]};
  half_.transform(z, false);
  for (std::size_t k = 0; k <= h; ++k) {
    const Complex zk = z[k % h];
    const Complex zc = std::conj(z[(h - k) % h]);
    const Complex even = 0.5 * (zk + zc);
    const Complex odd_times_i = 0.5 * (zk - zc);  // = i * O_k
    const Complex odd{odd_times_i.imag(), -odd_times_i.real()};
    const Complex w = twiddles_[k];
    spectrum[k] = even + Complex{w.real() * odd.real() - w.imag() * odd.imag(),
                                 w.real() * odd.imag() + w.imag() * odd.real()};
  }
}

void RealFft::inverse(std::span<const Complex> spectrum, std::span<double> x) const {
  const std::size_t h = n_ / 2;
  std::vector<Complex> z(h);
  auto bin = [&](std::size_t k) {
    Complex v = spectrum[k];
    if (k == 0 || k == h) v = {v.real(), 0.0};
    return v;
  };
  for (std::size_t k = 0; k < h; ++k) {
    const Complex xk = bin(k);
    const Complex xc = std::conj(bin(h - k));
    const Complex even = xk + xc;
    const Complex diff = xk - xc;
    const Complex w = std::conj(twiddles_[k]);
    const Complex odd{w.real() * diff.real() - w.imag() * diff.imag(),
                      w.real() * diff.imag() + w.imag() * diff.real()};
    z[k] = even + Complex{-odd.imag(), odd.real()};
  }
  half_.transform(z, true);
  for (std::size_t i = 0; i < h; ++i) {
    x[2 * i] = z[i].real();
    x[2 * i + 1] = z[i].imag();
  }
}

std::shared_ptr<const RealFft> real_fft_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const RealFft>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto plan = std::make_shared<const RealFft>(n);
  cache.emplace(n, plan);
  return plan;
}

std::vector<Complex> direct_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    out[k] = {re, im};
  }
  return out;
}

}  // namespace mixsynth
