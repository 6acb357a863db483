// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lpgd/harness/idx.hpp"
#include "lpgd/random.hpp"

namespace lpgd::harness {

struct SplitSizes {
  std::size_t train_ones = 1000;
  std::size_t test_ones = 100;
  std::size_t test_others = 100;
};

struct DatasetSpec {
  std::string images_path;
  std::string labels_path;
  SplitSizes sizes;
  std::uint64_t seed = 0;
};

/// Dataset indices of each split.
struct SplitIndices {
  std::vector<std::size_t> train_ones;
  std::vector<std::size_t> test_ones;
  std::vector<std::size_t> test_others;
};

/// Shuffles the label-1 indices and the other indices with independent
/// seeded streams, then takes the first k of each: train ones first, test
/// ones next.
inline SplitIndices select_splits(const std::vector<int>& labels, const SplitSizes& sizes,
                                  std::uint64_t seed) {
  std::vector<std::size_t> ones;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? ones : others).push_back(i);
  if (ones.size() < sizes.train_ones + sizes.test_ones)
    throw InvalidInput("dataset has " + std::to_string(ones.size()) + " ones, need " +
                       std::to_string(sizes.train_ones + sizes.test_ones));
  if (others.size() < sizes.test_others)
    throw InvalidInput("dataset has " + std::to_string(others.size()) +
                       " non-one digits, need " + std::to_string(sizes.test_others));
  Rng ones_rng(derive_seed(seed, 0x6f6e6573));
  Rng others_rng(derive_seed(seed, 0x6f746872));
  ones_rng.shuffle(ones);
  others_rng.shuffle(others);
  SplitIndices out;
  out.train_ones.assign(ones.begin(), ones.begin() + sizes.train_ones);
  out.test_ones.assign(ones.begin() + sizes.train_ones,
                       ones.begin() + sizes.train_ones + sizes.test_ones);
  out.test_others.assign(others.begin(), others.begin() + sizes.test_others);
  return out;
}

/// Area-weighted resample to rows x cols (box filter with fractional
/// overlaps, preserving the mean intensity).
inline Image downscale(const Image& x, Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw InvalidInput("downscale: target dims must be positive");
  if (rows == x.rows() && cols == x.cols()) return x;
  auto weights = [](Index in, Index out) {
    DenseMatrix w = DenseMatrix::Zero(out, in);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
      const double lo = o * scale;
      const double hi = (o + 1) * scale;
      for (Index i = static_cast<Index>(std::floor(lo)); i < in && i < hi; ++i) {
        const double overlap = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
        if (overlap > 0.0) w(o, i) = overlap / scale;
      }
    }
    return w;
  };
  Image out(rows, cols);
  out.matrix() = weights(x.rows(), rows) * x.matrix() * weights(x.cols(), cols).transpose();
  return out;
}

}  // namespace lpgd::harness
