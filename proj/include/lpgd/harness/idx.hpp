// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lpgd/linalg.hpp"

namespace lpgd::harness {

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

struct LabeledImage {
  Image image;
  int label = 0;
};

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::uint32_t be32(const std::string& bytes, std::size_t offset, const std::string& path,
                          const char* field) {
  if (bytes.size() < offset + 4)
    throw ParseError(path + ": truncated IDX header, missing " + field);
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i)
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

}  // namespace detail

/// Reads an IDX image file (magic 2051) and label file (magic 2049).
/// Pixels are scaled to [0, 1]; images are stored column-major with row
/// index i and column index j of the original row-major file.
inline std::vector<LabeledImage> parse_idx(const std::string& image_bytes,
                                           const std::string& label_bytes,
                                           const std::string& image_name = "images",
                                           const std::string& label_name = "labels") {
  const auto magic_i = detail::be32(image_bytes, 0, image_name, "magic number");
  if (magic_i != kIdxImageMagic)
    throw ParseError(image_name + ": bad magic " + std::to_string(magic_i) + " (expected 2051)");
  const auto magic_l = detail::be32(label_bytes, 0, label_name, "magic number");
  if (magic_l != kIdxLabelMagic)
    throw ParseError(label_name + ": bad magic " + std::to_string(magic_l) + " (expected 2049)");
  const std::uint64_t count = detail::be32(image_bytes, 4, image_name, "image count");
  const std::uint64_t rows = detail::be32(image_bytes, 8, image_name, "row count");
  const std::uint64_t cols = detail::be32(image_bytes, 12, image_name, "column count");
  const std::uint64_t label_count = detail::be32(label_bytes, 4, label_name, "label count");
  if (count != label_count)
    throw ParseError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                     std::to_string(label_count) + " labels");
  if (rows == 0 || cols == 0) throw ParseError(image_name + ": zero image dimension");
  const std::uint64_t pixels = rows * cols;
  if (image_bytes.size() < 16 + count * pixels)
    throw ParseError(image_name + ": truncated pixel data (" + std::to_string(count) +
                     " images of " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " declared)");
  if (label_bytes.size() < 8 + count) throw ParseError(label_name + ": truncated label data");

  std::vector<LabeledImage> out;
  out.reserve(count);
  const auto r = static_cast<Index>(rows);
  const auto c = static_cast<Index>(cols);
  for (std::uint64_t k = 0; k < count; ++k) {
    Image img(r, c);
    const std::size_t base = 16 + k * pixels;
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j)
        img(i, j) = static_cast<unsigned char>(image_bytes[base + i * c + j]) / 255.0;
    out.push_back({std::move(img), static_cast<unsigned char>(label_bytes[8 + k])});
  }
  return out;
}

inline std::vector<LabeledImage> load_idx(const std::string& images_path,
                                          const std::string& labels_path) {
  return parse_idx(detail::slurp(images_path), detail::slurp(labels_path), images_path,
                   labels_path);
}

}  // namespace lpgd::harness
