// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lpgd/trainer.hpp"

namespace lpgd {

/// Binary schedule container, all integers and floats little-endian:
///
///   offset  size   field
///   0       8      magic "LPGDSCHD"
///   8       4      u32 format version (1)
///   12      4      u32 parametrization tag (0 scalar, 1 diagonal, 2 full, 3 conv)
///   16      8      u64 n (length of vectors the preconditioner acts on)
///   24      8      u64 h1 (conv kernel rows, 0 otherwise)
///   32      8      u64 h2 (conv kernel cols, 0 otherwise)
///   40      8      u64 m1 (conv image rows, 0 otherwise)
///   48      8      u64 m2 (conv image cols, 0 otherwise)
///   56      8      u64 T (number of parameter vectors)
///   64      8      f64 tau (safeguard step)
///   72      8      u64 r (parameters per vector)
///   80      8 T r  f64 payload, row-major [T][r]
///   ...     8      u64 metadata length L in bytes
///   ...     L      UTF-8 metadata, "key=value\n" lines sorted by key
///
/// See docs/schedule_format.md.
namespace schedule_io {

inline constexpr std::array<char, 8> kMagic = {'L', 'P', 'G', 'D', 'S', 'C', 'H', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 80;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u(std::size_t width, const char* field) {
    if (pos_ + width > bytes_.size())
      throw ParseError(std::string("schedule file truncated while reading ") + field);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  double f64(const char* field) { return std::bit_cast<double>(u(8, field)); }
  std::string raw(std::size_t n, const char* field) {
    if (pos_ + n > bytes_.size() || pos_ + n < pos_)
      throw ParseError(std::string("schedule file truncated while reading ") + field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode(const PreconditionerSchedule& s) {
  const Parametrization& par = s.par;
  std::string out(kMagic.begin(), kMagic.end());
  detail::put_u32(out, kFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(par.kind()));
  detail::put_u64(out, static_cast<std::uint64_t>(par.dim()));
  const bool conv = par.kind() == ParamKind::Conv;
  detail::put_u64(out, conv ? static_cast<std::uint64_t>(par.kernel_rows()) : 0);
  detail::put_u64(out, conv ? static_cast<std::uint64_t>(par.kernel_cols()) : 0);
  detail::put_u64(out, conv ? static_cast<std::uint64_t>(par.image_rows()) : 0);
  detail::put_u64(out, conv ? static_cast<std::uint64_t>(par.image_cols()) : 0);
  detail::put_u64(out, s.thetas.size());
  detail::put_f64(out, s.tau);
  detail::put_u64(out, static_cast<std::uint64_t>(par.param_dim()));
  for (const auto& theta : s.thetas) {
    if (!(theta.par == par)) throw InvalidInput("schedule_io: mixed parametrizations");
    for (Index j = 0; j < theta.params.size(); ++j) detail::put_f64(out, theta.params[j]);
  }
  std::string meta;
  for (const auto& [k, v] : s.provenance) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw InvalidInput("schedule_io: metadata keys/values must not contain '=' or newlines");
    meta += k + "=" + v + "\n";
  }
  detail::put_u64(out, meta.size());
  out += meta;
  return out;
}

inline PreconditionerSchedule decode(const std::string& bytes) {
  detail::Reader rd(bytes);
  if (rd.raw(8, "magic") != std::string(kMagic.begin(), kMagic.end()))
    throw ParseError("schedule file: bad magic");
  const auto version = rd.u(4, "format version");
  if (version != kFormatVersion)
    throw ParseError("schedule file: unsupported format version " + std::to_string(version));
  const auto tag = rd.u(4, "parametrization tag");
  const auto n = static_cast<Index>(rd.u(8, "n"));
  const auto h1 = static_cast<Index>(rd.u(8, "h1"));
  const auto h2 = static_cast<Index>(rd.u(8, "h2"));
  const auto m1 = static_cast<Index>(rd.u(8, "m1"));
  const auto m2 = static_cast<Index>(rd.u(8, "m2"));
  const auto count = rd.u(8, "T");
  const double tau = rd.f64("tau");
  const auto r = static_cast<Index>(rd.u(8, "r"));

  if (tag > 3) throw ParseError("schedule file: unknown parametrization tag " + std::to_string(tag));
  if (tag != 3 && (h1 || h2 || m1 || m2))
    throw ParseError("schedule file: kernel and image dims must be zero for " +
                     std::string(to_string(static_cast<ParamKind>(tag))));
  if (n < 1 || (tag == 2 && n > (Index{1} << 31)))
    throw ParseError("schedule file: invalid dimension n = " + std::to_string(n));
  if (!(std::isfinite(tau) && tau > 0.0)) throw ParseError("schedule file: tau must be positive");
  std::optional<Parametrization> par;
  try {
    switch (tag) {
      case 0: par = Parametrization::scalar(n); break;
      case 1: par = Parametrization::diagonal(n); break;
      case 2: par = Parametrization::full(n); break;
      default: par = Parametrization::conv(h1, h2, m1, m2);
    }
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("schedule file: ") + e.what());
  }
  if (par->dim() != n) throw ParseError("schedule file: conv dims inconsistent with n");
  if (par->param_dim() != r) throw ParseError("schedule file: parameter count inconsistent");
  if (r > 0 && count > rd.remaining() / 8 / static_cast<std::uint64_t>(r))
    throw ParseError("schedule file truncated while reading payload");

  PreconditionerSchedule s{*par, {}, tau, {}};
  s.thetas.reserve(count);
  for (std::uint64_t t = 0; t < count; ++t) {
    Vector v(r);
    for (Index j = 0; j < r; ++j) v[j] = rd.f64("payload");
    if (!all_finite(v)) throw ParseError("schedule file: non-finite parameters");
    s.thetas.emplace_back(*par, std::move(v));
  }
  const auto meta_len = rd.u(8, "metadata length");
  std::istringstream meta(rd.raw(meta_len, "metadata"));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("schedule file: malformed metadata line");
    s.provenance[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (rd.remaining() != 0) throw ParseError("schedule file: trailing bytes");
  return s;
}

inline void write(const std::string& path, const PreconditionerSchedule& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  const std::string bytes = encode(s);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path + "'");
}

inline PreconditionerSchedule read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open schedule file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode(ss.str());
}

}  // namespace schedule_io
}  // namespace lpgd
