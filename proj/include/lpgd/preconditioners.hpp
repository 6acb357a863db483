// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>

#include "lpgd/linalg.hpp"

namespace lpgd {

enum class ParamKind { Scalar = 0, Diagonal = 1, FullMatrix = 2, Conv = 3 };

inline std::string_view to_string(ParamKind k) {
  switch (k) {
    case ParamKind::Scalar: return "scalar";
    case ParamKind::Diagonal: return "diagonal";
    case ParamKind::FullMatrix: return "full";
    case ParamKind::Conv: return "conv";
  }
  return "unknown";
}

inline ParamKind param_kind_from_string(std::string_view s) {
  if (s == "scalar") return ParamKind::Scalar;
  if (s == "diagonal" || s == "diag") return ParamKind::Diagonal;
  if (s == "full" || s == "full_matrix") return ParamKind::FullMatrix;
  if (s == "conv" || s == "convolution") return ParamKind::Conv;
  throw InvalidInput("unknown parametrization '" + std::string(s) + "'");
}

/// Which family G_theta belongs to, plus the dimensions it acts on.
///
/// Parameter layouts:
///   Scalar      theta = (alpha)                 G = alpha I
///   Diagonal    theta = p, length n             G = diag(p)
///   FullMatrix  theta[j n + i] = P(i, j)        G = P (column-stacked)
///   Conv        theta = kernel image data       G g = kernel * g
/// For Conv the kernel is h1 x h2 and theta[q h1 + p] holds offset
/// (p - r1, q - r2); the gradient vectors are m1 x m2 images.
class Parametrization {
 public:
  static Parametrization scalar(Index n) { return {ParamKind::Scalar, n, 0, 0, 0, 0}; }
  static Parametrization diagonal(Index n) { return {ParamKind::Diagonal, n, 0, 0, 0, 0}; }
  static Parametrization full(Index n) { return {ParamKind::FullMatrix, n, 0, 0, 0, 0}; }
  static Parametrization conv(Index h1, Index h2, Index m1, Index m2) {
    KernelGeometry::of(h1, h2);
    if (m1 < 1 || m2 < 1) throw InvalidInput("Parametrization: image dims must be positive");
    return {ParamKind::Conv, m1 * m2, h1, h2, m1, m2};
  }

  ParamKind kind() const { return kind_; }
  std::string_view name() const { return to_string(kind_); }

  /// Length of the gradient vectors G_theta acts on.
  Index dim() const { return n_; }

  Index param_dim() const {
    switch (kind_) {
      case ParamKind::Scalar: return 1;
      case ParamKind::Diagonal: return n_;
      case ParamKind::FullMatrix: return n_ * n_;
      case ParamKind::Conv: return h1_ * h2_;
    }
    return 0;
  }

  Index kernel_rows() const { return h1_; }
  Index kernel_cols() const { return h2_; }
  Index image_rows() const { return m1_; }
  Index image_cols() const { return m2_; }
  KernelGeometry geometry() const { return KernelGeometry::of(h1_, h2_); }

  bool operator==(const Parametrization&) const = default;

 private:
  Parametrization(ParamKind k, Index n, Index h1, Index h2, Index m1, Index m2)
      : kind_(k), n_(n), h1_(h1), h2_(h2), m1_(m1), m2_(m2) {
    if (n < 0) throw InvalidInput("Parametrization: negative dimension");
  }

  ParamKind kind_;
  Index n_;
  Index h1_;
  Index h2_;
  Index m1_;
  Index m2_;
};

struct ParamVector {
  Parametrization par;
  Vector params;

  ParamVector(Parametrization p, Vector v) : par(p), params(std::move(v)) {
    require_size(params.size(), par.param_dim(), "ParamVector");
    require_finite(params, "ParamVector");
  }

  static ParamVector zeros(const Parametrization& p) { return {p, Vector::Zero(p.param_dim())}; }

  Image kernel() const {
    return Image(par.kernel_rows(), par.kernel_cols(), params);
  }
  Eigen::Map<const DenseMatrix> matrix() const { return {params.data(), par.dim(), par.dim()}; }
};

/// G_theta g.
inline Vector apply(const ParamVector& theta, const Vector& g) {
  const Parametrization& par = theta.par;
  require_size(g.size(), par.dim(), "apply");
  switch (par.kind()) {
    case ParamKind::Scalar: return theta.params[0] * g;
    case ParamKind::Diagonal: return theta.params.cwiseProduct(g);
    case ParamKind::FullMatrix: return theta.matrix() * g;
    case ParamKind::Conv:
      return conv2d(theta.kernel(), Image(par.image_rows(), par.image_cols(), g)).data();
  }
  throw InvalidInput("apply: unsupported parametrization");
}

/// theta-space vector B^T r, where G_theta g_at_x = B theta. This is the
/// adjoint of theta -> G_theta g_at_x, so
///   <r, apply(theta, g_at_x)> = <theta, adjoint_apply(par, g_at_x, r)>.
inline Vector adjoint_apply(const Parametrization& par, const Vector& g_at_x, const Vector& r) {
  require_size(g_at_x.size(), par.dim(), "adjoint_apply");
  require_size(r.size(), par.dim(), "adjoint_apply");
  switch (par.kind()) {
    case ParamKind::Scalar: {
      Vector out(1);
      out[0] = g_at_x.dot(r);
      return out;
    }
    case ParamKind::Diagonal: return g_at_x.cwiseProduct(r);
    case ParamKind::FullMatrix: {
      // Entry for P(i, j) is r_i g_j; column-stacking r g^T.
      Vector out(par.param_dim());
      Eigen::Map<DenseMatrix>(out.data(), par.dim(), par.dim()).noalias() = r * g_at_x.transpose();
      return out;
    }
    case ParamKind::Conv: {
      // theta(k1, k2) = sum_n r(n1, n2) g(n1 - k1, n2 - k2).
      const KernelGeometry geo = par.geometry();
      const Index m1 = par.image_rows();
      const Index m2 = par.image_cols();
      const DenseMatrix p = pad_for_kernel(Image(m1, m2, g_at_x), geo);
      const Eigen::Map<const DenseMatrix> rm(r.data(), m1, m2);
      Vector out(par.param_dim());
      for (Index k2 = geo.lo2(); k2 <= geo.hi2(); ++k2)
        for (Index k1 = geo.lo1(); k1 <= geo.hi1(); ++k1)
          out[geo.col_of(k2) * geo.h1 + geo.row_of(k1)] =
              rm.cwiseProduct(p.block(geo.hi1() - k1, geo.hi2() - k2, m1, m2)).sum();
      return out;
    }
  }
  throw InvalidInput("adjoint_apply: unsupported parametrization");
}

/// Parameters with G_theta = tau I.
inline ParamVector embed_tau(const Parametrization& par, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("embed_tau: tau must be positive");
  switch (par.kind()) {
    case ParamKind::Scalar: return {par, Vector::Constant(1, tau)};
    case ParamKind::Diagonal: return {par, Vector::Constant(par.dim(), tau)};
    case ParamKind::FullMatrix: {
      ParamVector out = ParamVector::zeros(par);
      for (Index i = 0; i < par.dim(); ++i) out.params[i * par.dim() + i] = tau;
      return out;
    }
    case ParamKind::Conv:
      return {par, delta_kernel(par.kernel_rows(), par.kernel_cols(), tau).data()};
  }
  throw InvalidInput("embed_tau: unsupported parametrization");
}

/// Smoothness constant of g_t: (1/N) sum_k L_k |B_k|^2 with |B_k|^2 bounded
/// per family (max |g_i|^2 for diagonal, |g|^2 for scalar and full,
/// h1 h2 |g|_F^2 for convolution).
inline double lipschitz_bound(const Parametrization& par, std::span<const Vector> grads,
                              std::span<const double> smoothness) {
  if (grads.empty()) throw InvalidInput("lipschitz_bound: empty dataset");
  if (grads.size() != smoothness.size())
    throw InvalidInput("lipschitz_bound: gradient and smoothness lists differ in length");
  double sum = 0.0;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const Vector& g = grads[k];
    require_size(g.size(), par.dim(), "lipschitz_bound");
    double b_norm_sq = 0.0;
    switch (par.kind()) {
      case ParamKind::Scalar:
      case ParamKind::FullMatrix: b_norm_sq = g.squaredNorm(); break;
      case ParamKind::Diagonal: {
        const double m = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
        b_norm_sq = m * m;
        break;
      }
      case ParamKind::Conv:
        b_norm_sq = static_cast<double>(par.param_dim()) * g.squaredNorm();
        break;
    }
    sum += smoothness[k] * b_norm_sq;
  }
  return sum / static_cast<double>(grads.size());
}

}  // namespace lpgd
