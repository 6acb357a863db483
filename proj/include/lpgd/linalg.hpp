// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "lpgd/error.hpp"
#include "lpgd/random.hpp"

namespace lpgd {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!all_finite(m)) throw InvalidInput(std::string(what) + ": non-finite entries");
}

inline void require_size(Index got, Index want, const char* what) {
  if (got != want)
    throw InvalidInput(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                       ", expected " + std::to_string(want) + ")");
}

/// Grayscale image of `rows` x `cols` pixels. Pixels are stored column by
/// column, so `data()` is the column-stacked flattening used by every
/// vector-space routine in the library.
class Image {
 public:
  Image() = default;
  Image(Index rows, Index cols) : rows_(rows), cols_(cols), data_(Vector::Zero(rows * cols)) {
    if (rows < 0 || cols < 0) throw InvalidInput("Image: negative dimensions");
  }
  Image(Index rows, Index cols, Vector data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 0 || cols < 0) throw InvalidInput("Image: negative dimensions");
    require_size(data_.size(), rows * cols, "Image");
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return data_.size(); }

  double operator()(Index i, Index j) const { return data_[j * rows_ + i]; }
  double& operator()(Index i, Index j) { return data_[j * rows_ + i]; }

  /// Zero outside the image bounds.
  double at_or_zero(Index i, Index j) const {
    return (i >= 0 && i < rows_ && j >= 0 && j < cols_) ? (*this)(i, j) : 0.0;
  }

  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  Eigen::Map<const DenseMatrix> matrix() const { return {data_.data(), rows_, cols_}; }
  Eigen::Map<DenseMatrix> matrix() { return {data_.data(), rows_, cols_}; }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Vector data_;
};

/// Offset convention for an h1 x h2 kernel: offsets along axis i run from
/// -r_i to r_i + delta_i, with r_i = floor((h_i - 1) / 2) and delta_i = 1
/// for even h_i. Kernel pixel (p, q) holds offset (p - r1, q - r2), so
/// offset (0, 0) is the center.
struct KernelGeometry {
  Index h1 = 1;
  Index h2 = 1;
  Index r1 = 0;
  Index r2 = 0;
  Index delta1 = 0;
  Index delta2 = 0;

  static KernelGeometry of(Index h1, Index h2) {
    if (h1 < 1 || h2 < 1) throw InvalidInput("KernelGeometry: kernel dims must be positive");
    KernelGeometry g;
    g.h1 = h1;
    g.h2 = h2;
    g.r1 = (h1 - 1) / 2;
    g.r2 = (h2 - 1) / 2;
    g.delta1 = h1 % 2 == 0 ? 1 : 0;
    g.delta2 = h2 % 2 == 0 ? 1 : 0;
    return g;
  }

  Index lo1() const { return -r1; }
  Index hi1() const { return r1 + delta1; }
  Index lo2() const { return -r2; }
  Index hi2() const { return r2 + delta2; }

  /// Row/column of the kernel image holding offset (k1, k2).
  Index row_of(Index k1) const { return k1 + r1; }
  Index col_of(Index k2) const { return k2 + r2; }
};

/// Least-norm solution of M theta = b for symmetric M, through the
/// eigendecomposition of M. Eigenvalues with magnitude below
/// `relative_cutoff` times the largest magnitude are treated as zero.
inline Vector pinv_solve(const DenseMatrix& m, const Vector& b, double relative_cutoff = 1e-12) {
  if (m.rows() != m.cols()) throw InvalidInput("pinv_solve: matrix must be square");
  require_size(b.size(), m.rows(), "pinv_solve");
  require_finite(m, "pinv_solve");
  require_finite(b, "pinv_solve");
  if (m.size() == 0) return Vector(0);

  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(scale, 1e-300) && asym > 0.0)
    throw InvalidInput("pinv_solve: matrix is not symmetric");
  if (scale == 0.0) return Vector::Zero(b.size());

  const DenseMatrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalFailure("pinv_solve: eigensolver failed", 0);

  const Vector& lambda = eig.eigenvalues();
  const double sigma_max = lambda.cwiseAbs().maxCoeff();
  const double cutoff = relative_cutoff * sigma_max;
  const Vector coeffs = eig.eigenvectors().transpose() * b;
  Vector scaled = Vector::Zero(coeffs.size());
  for (Index i = 0; i < coeffs.size(); ++i)
    if (std::abs(lambda[i]) > cutoff) scaled[i] = coeffs[i] / lambda[i];
  return eig.eigenvectors() * scaled;
}

/// Default cap on the number of entries of a Kronecker product.
inline constexpr std::int64_t kDefaultKronCap = std::int64_t{1} << 26;

/// Block (i, j) of the result is a(i, j) * b.
inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b,
                        std::int64_t max_entries = kDefaultKronCap) {
  require_finite(a, "kron");
  require_finite(b, "kron");
  const std::int64_t rows = static_cast<std::int64_t>(a.rows()) * b.rows();
  const std::int64_t cols = static_cast<std::int64_t>(a.cols()) * b.cols();
  if (cols != 0 && rows > max_entries / std::max<std::int64_t>(cols, 1))
    throw CapacityError("kron: result of " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " exceeds entry cap " + std::to_string(max_entries));
  DenseMatrix out(rows, cols);
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector hadamard(const Vector& a, const Vector& b) {
  require_size(b.size(), a.size(), "hadamard");
  return a.cwiseProduct(b);
}

/// x embedded in zeros so that x(n1 - k1, n2 - k2) for every in-image n and
/// kernel offset k is the padded entry (n1 - k1 + hi1, n2 - k2 + hi2).
inline DenseMatrix pad_for_kernel(const Image& x, const KernelGeometry& geo) {
  DenseMatrix p = DenseMatrix::Zero(x.rows() + geo.h1 - 1, x.cols() + geo.h2 - 1);
  p.block(geo.hi1(), geo.hi2(), x.rows(), x.cols()) = x.matrix();
  return p;
}

/// Zero-padded 2D convolution with the centered kernel convention of
/// KernelGeometry:
///   out(n1, n2) = sum_{k1, k2} kernel(k1, k2) * x(n1 - k1, n2 - k2).
/// The output has the dimensions of x.
inline Image conv2d(const Image& kernel, const Image& x) {
  const KernelGeometry geo = KernelGeometry::of(kernel.rows(), kernel.cols());
  const Index m1 = x.rows();
  const Index m2 = x.cols();
  const DenseMatrix p = pad_for_kernel(x, geo);
  Image out(m1, m2);
  auto o = out.matrix();
  for (Index k2 = geo.lo2(); k2 <= geo.hi2(); ++k2)
    for (Index k1 = geo.lo1(); k1 <= geo.hi1(); ++k1) {
      const double w = kernel(geo.row_of(k1), geo.col_of(k2));
      if (w != 0.0) o += w * p.block(geo.hi1() - k1, geo.hi2() - k2, m1, m2);
    }
  return out;
}

/// out(i, j) = x(i + a1, j + a2) when that pixel exists, else 0.
inline Image translate(const Image& x, Index a1, Index a2) {
  Image out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) out(i, j) = x.at_or_zero(i + a1, j + a2);
  return out;
}

/// Centered delta kernel scaled by `value`.
inline Image delta_kernel(Index h1, Index h2, double value = 1.0) {
  const KernelGeometry geo = KernelGeometry::of(h1, h2);
  Image k(h1, h2);
  k(geo.row_of(0), geo.col_of(0)) = value;
  return k;
}

using LinearMap = std::function<Vector(const Vector&)>;

struct PowerIterationResult {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Power iteration on adjoint(apply(.)) for the squared spectral norm.
/// The Rayleigh quotient |A v|^2 with |v| = 1 is nondecreasing across
/// iterations; iteration stops once successive estimates differ by less
/// than `tol` relatively.
inline PowerIterationResult power_iteration(const LinearMap& apply, const LinearMap& adjoint,
                                            Index dim, std::size_t max_iters = 5000,
                                            double tol = 1e-10, std::uint64_t seed = 0x5eed) {
  PowerIterationResult res;
  if (dim == 0) {
    res.converged = true;
    return res;
  }
  Rng rng(seed);
  Vector v = rng.uniform_vector(dim);

#ifndef NDEBUG
  {
    const Vector u = apply(v);
    const Vector w = rng.uniform_vector(u.size());
    const double lhs = u.dot(w);
    const double rhs = v.dot(adjoint(w));
    if (std::abs(lhs - rhs) > 1e-8 * std::max({1.0, std::abs(lhs), std::abs(rhs)}))
      throw InvalidInput("power_iteration: apply/adjoint are not an adjoint pair");
  }
#endif

  v.normalize();
  double prev = -1.0;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    const Vector av = apply(v);
    const double estimate = av.squaredNorm();
    res.value = std::max(res.value, estimate);
    res.iterations = it;
    if (estimate == 0.0) {
      res.converged = true;
      return res;
    }
    if (prev >= 0.0 && std::abs(estimate - prev) < tol * estimate) {
      res.converged = true;
      return res;
    }
    prev = estimate;
    v = adjoint(av);
    const double norm = v.norm();
    if (norm == 0.0) {
      res.converged = true;
      return res;
    }
    v /= norm;
  }
  return res;
}

inline double op_norm_sq(const LinearMap& apply, const LinearMap& adjoint, Index dim,
                         std::size_t max_iters = 5000, double tol = 1e-10) {
  return power_iteration(apply, adjoint, dim, max_iters, tol).value;
}

/// Forward differences with zero in the last row (axis 1) and last column
/// (axis 2). Output stacks the two components: [D1 u; D2 u].
inline Vector forward_diff(const Image& u) {
  const Index m1 = u.rows();
  const Index m2 = u.cols();
  const Index n = m1 * m2;
  Vector d = Vector::Zero(2 * n);
  for (Index j = 0; j < m2; ++j)
    for (Index i = 0; i < m1; ++i) {
      const double here = u(i, j);
      if (i + 1 < m1) d[j * m1 + i] = u(i + 1, j) - here;
      if (j + 1 < m2) d[n + j * m1 + i] = u(i, j + 1) - here;
    }
  return d;
}

/// Adjoint of forward_diff (a negative divergence).
inline Image forward_diff_adjoint(const Vector& d, Index m1, Index m2) {
  const Index n = m1 * m2;
  require_size(d.size(), 2 * n, "forward_diff_adjoint");
  Image out(m1, m2);
  for (Index j = 0; j < m2; ++j)
    for (Index i = 0; i < m1; ++i) {
      const double p1 = d[j * m1 + i];
      const double p2 = d[n + j * m1 + i];
      if (i + 1 < m1) {
        out(i + 1, j) += p1;
        out(i, j) -= p1;
      }
      if (j + 1 < m2) {
        out(i, j + 1) += p2;
        out(i, j) -= p2;
      }
    }
  return out;
}

}  // namespace lpgd
