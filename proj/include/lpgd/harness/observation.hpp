// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "lpgd/objectives.hpp"
#include "lpgd/random.hpp"

namespace lpgd::harness {

struct Observation {
  Image y;
  /// |y - A x| / |A x|.
  double relative_noise = 0.0;
};

/// y = A x + e with e_i ~ N(0, s^2), s = noise_level |A x| / sqrt(pixels).
inline Observation synthesize_observation(const Image& x, const GaussianBlurOperator& blur,
                                          double noise_level, std::uint64_t seed) {
  if (!(noise_level >= 0.0)) throw InvalidInput("synthesize_observation: noise_level must be >= 0");
  require_size(x.size(), blur.cols(), "synthesize_observation");
  const Vector ax = blur.apply(x.data());
  const double signal = ax.norm();
  if (noise_level == 0.0) return {Image(x.rows(), x.cols(), ax), 0.0};
  if (signal == 0.0)
    throw DegenerateSignal("synthesize_observation: blurred image is identically zero");
  const double sd = noise_level * signal / std::sqrt(static_cast<double>(ax.size()));
  Rng rng(seed);
  const Vector noise = sd * rng.normal_vector(ax.size());
  return {Image(x.rows(), x.cols(), ax + noise), noise.norm() / signal};
}

}  // namespace lpgd::harness
