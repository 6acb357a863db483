// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <utility>

#include "lpgd/linalg.hpp"

namespace lpgd {

/// A linear map between vector spaces with its adjoint.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual Vector apply(const Vector& x) const = 0;
  virtual Vector adjoint(const Vector& y) const = 0;

  /// Dense matrix built column by column from unit vectors.
  virtual DenseMatrix dense() const {
    DenseMatrix m(rows(), cols());
    Vector e = Vector::Zero(cols());
    for (Index j = 0; j < cols(); ++j) {
      e[j] = 1.0;
      m.col(j) = apply(e);
      e[j] = 0.0;
    }
    return m;
  }

  /// Dense Gram matrix A^T A.
  virtual DenseMatrix gram() const {
    const DenseMatrix a = dense();
    DenseMatrix g = a.transpose() * a;
    return 0.5 * (g + g.transpose());
  }

  double norm_sq_estimate(double tol = 1e-12) const {
    return op_norm_sq([this](const Vector& v) { return apply(v); },
                      [this](const Vector& v) { return adjoint(v); }, cols(), 20000, tol);
  }
};

class MatrixOperator final : public LinearOperator {
 public:
  explicit MatrixOperator(DenseMatrix a) : a_(std::move(a)) { require_finite(a_, "MatrixOperator"); }

  Index rows() const override { return a_.rows(); }
  Index cols() const override { return a_.cols(); }
  Vector apply(const Vector& x) const override {
    require_size(x.size(), a_.cols(), "MatrixOperator::apply");
    return a_ * x;
  }
  Vector adjoint(const Vector& y) const override {
    require_size(y.size(), a_.rows(), "MatrixOperator::adjoint");
    return a_.transpose() * y;
  }
  DenseMatrix dense() const override { return a_; }

  const DenseMatrix& matrix() const { return a_; }

 private:
  DenseMatrix a_;
};

/// Zero-padded Gaussian blur on m1 x m2 images. The kernel is the outer
/// product of a truncated, unit-sum 1D Gaussian with itself, so it sums to
/// one, is symmetric under 180 degree rotation and the operator is
/// self-adjoint. Applied separably.
class GaussianBlurOperator final : public LinearOperator {
 public:
  GaussianBlurOperator(Index m1, Index m2, double sigma = 2.0, Index radius = -1)
      : m1_(m1), m2_(m2), sigma_(sigma) {
    if (m1 < 1 || m2 < 1) throw InvalidInput("GaussianBlurOperator: image dims must be positive");
    if (!(sigma > 0.0)) throw InvalidInput("GaussianBlurOperator: sigma must be positive");
    radius_ = radius >= 0 ? radius : static_cast<Index>(std::ceil(3.0 * sigma));
    weights_.resize(2 * radius_ + 1);
    for (Index k = -radius_; k <= radius_; ++k)
      weights_[k + radius_] = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
    weights_ /= weights_.sum();
  }

  Index rows() const override { return m1_ * m2_; }
  Index cols() const override { return m1_ * m2_; }
  Index image_rows() const { return m1_; }
  Index image_cols() const { return m2_; }
  double sigma() const { return sigma_; }
  Index radius() const { return radius_; }
  const Vector& weights_1d() const { return weights_; }

  /// The (2 radius + 1)^2 kernel as an image centered at offset (0, 0).
  Image kernel() const {
    const Index h = 2 * radius_ + 1;
    Image k(h, h);
    k.matrix() = weights_ * weights_.transpose();
    return k;
  }

  Vector apply(const Vector& x) const override {
    require_size(x.size(), rows(), "GaussianBlurOperator::apply");
    // Columns first (along axis 1), then rows (along axis 2).
    Vector tmp = Vector::Zero(x.size());
    for (Index j = 0; j < m2_; ++j) {
      const double* src = x.data() + j * m1_;
      double* dst = tmp.data() + j * m1_;
      for (Index k = -radius_; k <= radius_; ++k) {
        const double w = weights_[k + radius_];
        const Index lo = std::max<Index>(0, k);
        const Index hi = std::min<Index>(m1_, m1_ + k);
        for (Index i = lo; i < hi; ++i) dst[i] += w * src[i - k];
      }
    }
    Vector out = Vector::Zero(x.size());
    for (Index k = -radius_; k <= radius_; ++k) {
      const double w = weights_[k + radius_];
      const Index lo = std::max<Index>(0, k);
      const Index hi = std::min<Index>(m2_, m2_ + k);
      for (Index j = lo; j < hi; ++j) {
        const double* src = tmp.data() + (j - k) * m1_;
        double* dst = out.data() + j * m1_;
        for (Index i = 0; i < m1_; ++i) dst[i] += w * src[i];
      }
    }
    return out;
  }

  Vector adjoint(const Vector& y) const override { return apply(y); }

 private:
  Index m1_;
  Index m2_;
  double sigma_;
  Index radius_ = 0;
  Vector weights_;
};

/// Forward-difference gradient u -> [D1 u; D2 u] as a LinearOperator.
class ForwardDifferenceOperator final : public LinearOperator {
 public:
  ForwardDifferenceOperator(Index m1, Index m2) : m1_(m1), m2_(m2) {}

  Index rows() const override { return 2 * m1_ * m2_; }
  Index cols() const override { return m1_ * m2_; }
  Vector apply(const Vector& x) const override {
    require_size(x.size(), cols(), "ForwardDifferenceOperator::apply");
    return forward_diff(Image(m1_, m2_, x));
  }
  Vector adjoint(const Vector& y) const override {
    return forward_diff_adjoint(y, m1_, m2_).data();
  }

 private:
  Index m1_;
  Index m2_;
};

class LeastSquaresObjective;

/// Convex, continuously differentiable objective.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Index dim() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;

  /// Value and gradient together; implementations share intermediate work.
  virtual std::pair<double, Vector> value_and_gradient(const Vector& x) const {
    return {value(x), gradient(x)};
  }

  /// Lipschitz constant of the gradient.
  virtual double smoothness() const = 0;
  virtual std::optional<double> strong_convexity() const { return std::nullopt; }

  /// Least-squares structure, when the objective has one.
  virtual const LeastSquaresObjective* least_squares() const { return nullptr; }
};

using ObjectivePtr = std::shared_ptr<const Objective>;

/// f(x) = 1/2 |A x - y|^2.
class LeastSquaresObjective final : public Objective {
 public:
  /// L defaults to the power-iteration estimate of |A|^2.
  LeastSquaresObjective(std::shared_ptr<const LinearOperator> a, Vector y,
                        std::optional<double> smoothness = std::nullopt,
                        std::optional<double> strong_convexity = std::nullopt)
      : a_(std::move(a)), y_(std::move(y)), mu_(strong_convexity) {
    if (!a_) throw InvalidInput("LeastSquaresObjective: null operator");
    require_size(y_.size(), a_->rows(), "LeastSquaresObjective");
    require_finite(y_, "LeastSquaresObjective");
    l_ = smoothness ? *smoothness : a_->norm_sq_estimate();
  }

  /// Dense-matrix convenience; mu is set to lambda_min(A^T A) when A is
  /// injective, so the instance carries its own strong-convexity constant.
  static std::shared_ptr<const LeastSquaresObjective> dense(DenseMatrix a, Vector y) {
    auto op = std::make_shared<MatrixOperator>(std::move(a));
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(op->gram(), Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().size() ? eig.eigenvalues().maxCoeff() : 0.0;
    const double lmin = eig.eigenvalues().size() ? eig.eigenvalues().minCoeff() : 0.0;
    std::optional<double> mu;
    if (lmin > 1e-12 * lmax) mu = lmin;
    return std::make_shared<LeastSquaresObjective>(std::move(op), std::move(y), lmax, mu);
  }

  Index dim() const override { return a_->cols(); }
  Index observation_dim() const { return a_->rows(); }

  Vector residual(const Vector& x) const {
    require_size(x.size(), dim(), "LeastSquaresObjective");
    return a_->apply(x) - y_;
  }

  double value(const Vector& x) const override { return 0.5 * residual(x).squaredNorm(); }
  Vector gradient(const Vector& x) const override { return a_->adjoint(residual(x)); }
  std::pair<double, Vector> value_and_gradient(const Vector& x) const override {
    const Vector r = residual(x);
    return {0.5 * r.squaredNorm(), a_->adjoint(r)};
  }

  double smoothness() const override { return l_; }
  std::optional<double> strong_convexity() const override { return mu_; }
  const LeastSquaresObjective* least_squares() const override { return this; }

  const LinearOperator& op() const { return *a_; }
  const std::shared_ptr<const LinearOperator>& op_ptr() const { return a_; }
  const Vector& observation() const { return y_; }

 private:
  std::shared_ptr<const LinearOperator> a_;
  Vector y_;
  double l_ = 0.0;
  std::optional<double> mu_;
};

inline double ls_eval(const LeastSquaresObjective& p, const Vector& x) { return p.value(x); }
inline Vector ls_grad(const LeastSquaresObjective& p, const Vector& x) { return p.gradient(x); }

/// Huber function: s^2 / (2 eps) for |s| <= eps, |s| - eps / 2 otherwise.
inline double huber(double s, double eps) {
  const double a = std::abs(s);
  return a <= eps ? 0.5 * s * s / eps : a - 0.5 * eps;
}

/// Squared operator norms feeding the Huber-TV smoothness bound.
struct HuberTvNorms {
  double blur_norm_sq = 0.0;
  double diff_norm_sq = 0.0;

  static HuberTvNorms estimate(const GaussianBlurOperator& blur) {
    const ForwardDifferenceOperator d(blur.image_rows(), blur.image_cols());
    return {blur.norm_sq_estimate(), d.norm_sq_estimate()};
  }
};

/// f(x) = 1/2 |A x - y|^2 + alpha * sum_ij h_eps(|(D x)_ij|) with A a
/// Gaussian blur and D forward differences.
class HuberTVObjective final : public Objective {
 public:
  HuberTVObjective(std::shared_ptr<const GaussianBlurOperator> blur, Vector y, double alpha,
                   double epsilon, std::optional<HuberTvNorms> norms = std::nullopt)
      : blur_(std::move(blur)), y_(std::move(y)), alpha_(alpha), eps_(epsilon) {
    if (!blur_) throw InvalidInput("HuberTVObjective: null blur operator");
    require_size(y_.size(), blur_->rows(), "HuberTVObjective");
    require_finite(y_, "HuberTVObjective");
    if (!(alpha >= 0.0)) throw InvalidInput("HuberTVObjective: alpha must be nonnegative");
    if (!(epsilon > 0.0)) throw InvalidInput("HuberTVObjective: epsilon must be positive");
    norms_ = norms ? *norms : HuberTvNorms::estimate(*blur_);
  }

  Index dim() const override { return blur_->cols(); }
  Index image_rows() const { return blur_->image_rows(); }
  Index image_cols() const { return blur_->image_cols(); }
  double alpha() const { return alpha_; }
  double epsilon() const { return eps_; }
  const Vector& observation() const { return y_; }
  const GaussianBlurOperator& blur() const { return *blur_; }
  const HuberTvNorms& norms() const { return norms_; }

  double fidelity(const Vector& x) const {
    require_size(x.size(), dim(), "HuberTVObjective");
    return 0.5 * (blur_->apply(x) - y_).squaredNorm();
  }

  double regulariser(const Vector& x) const {
    require_size(x.size(), dim(), "HuberTVObjective");
    const Vector d = forward_diff(Image(image_rows(), image_cols(), x));
    const Index n = dim();
    double sum = 0.0;
    for (Index p = 0; p < n; ++p) sum += huber(std::hypot(d[p], d[n + p]), eps_);
    return sum;
  }

  double value(const Vector& x) const override { return value_and_gradient(x).first; }
  Vector gradient(const Vector& x) const override { return value_and_gradient(x).second; }

  std::pair<double, Vector> value_and_gradient(const Vector& x) const override {
    require_size(x.size(), dim(), "HuberTVObjective");
    const Vector r = blur_->apply(x) - y_;
    Vector g = blur_->adjoint(r);
    double f = 0.5 * r.squaredNorm();
    if (alpha_ != 0.0) {
      const Index n = dim();
      Vector d = forward_diff(Image(image_rows(), image_cols(), x));
      double tv = 0.0;
      for (Index p = 0; p < n; ++p) {
        const double mag = std::hypot(d[p], d[n + p]);
        double scale;
        if (mag <= eps_) {
          tv += 0.5 * mag * mag / eps_;
          scale = 1.0 / eps_;
        } else {
          tv += mag - 0.5 * eps_;
          scale = 1.0 / mag;
        }
        d[p] *= scale;
        d[n + p] *= scale;
      }
      f += alpha_ * tv;
      g += alpha_ * forward_diff_adjoint(d, image_rows(), image_cols()).data();
    }
    return {f, std::move(g)};
  }

  /// |A|^2 + alpha |D|^2 / eps from power-iteration norm estimates.
  double smoothness() const override {
    return norms_.blur_norm_sq + alpha_ * norms_.diff_norm_sq / eps_;
  }

 private:
  std::shared_ptr<const GaussianBlurOperator> blur_;
  Vector y_;
  double alpha_;
  double eps_;
  HuberTvNorms norms_;
};

inline double huber_eval(const HuberTVObjective& o, const Vector& x) { return o.value(x); }
inline Vector huber_grad(const HuberTVObjective& o, const Vector& x) { return o.gradient(x); }
inline double smoothness_bound(const HuberTVObjective& o) { return o.smoothness(); }

}  // namespace lpgd
