#pragma once

#include <string>
#include <vector>

#include "mixsynth/autodiff.hpp"

namespace testing {

struct GradCase {
  std::string name;
  mixsynth::ad::GraphBuilder builder;
  mixsynth::Tensor point;
};

/// One case per differentiable primitive, each reduced to a scalar by a fixed random weighting.
std::vector<GradCase> primitive_cases();
/// Decoder outputs w.r.t. f0, z and loudness.
std::vector<GradCase> decode_cases();
/// Synthesizer output w.r.t. f0 and each control signal.
std::vector<GradCase> synth_cases();
/// Full mixture loss, R = 2, T = 20, K = 8, two loss scales, w.r.t. every source parameter.
std::vector<GradCase> mixture_cases();

}  // namespace testing
