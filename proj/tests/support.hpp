#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mixsynth/nets.hpp"
#include "mixsynth/tensor.hpp"

namespace testing {

using mixsynth::Tensor;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
  std::vector<double> uniform_vec(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }
  std::vector<double> normal_vec(std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(sd);
    return v;
  }
  Tensor tensor(Tensor::Shape shape, double lo, double hi) {
    Tensor t(shape);
    for (double& x : t.values()) x = uniform(lo, hi);
    return t;
  }
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

inline double rms_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

/// Small model for fast tests.
inline mixsynth::nets::ModelConfig small_config(std::size_t K = 8, std::size_t M = 9, std::size_t D = 4,
                                                std::size_t hidden = 16, std::size_t layers = 2) {
  mixsynth::nets::ModelConfig c;
  c.n_harmonics = K;
  c.n_noise_bands = M;
  c.latent_dim = D;
  c.decoder_hidden = hidden;
  c.encoder_hidden = hidden;
  c.decoder_layers = layers;
  c.reverb_length = 64;
  return c;
}

}  // namespace testing
