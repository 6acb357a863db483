// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "lpgd/objectives.hpp"

namespace lpgd {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double fd_rel_error(const Objective& f, const Vector& x) {
  const double h = 1e-6 * (x.cwiseAbs().maxCoeff() + 1.0);
  const Vector g = f.gradient(x);
  Vector fd(x.size());
  Vector xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double up = f.value(xp);
    xp[i] = x[i] - h;
    const double down = f.value(xp);
    xp[i] = x[i];
    fd[i] = (up - down) / (2.0 * h);
  }
  return (g - fd).norm() / std::max(fd.norm(), 1e-12);
}

std::shared_ptr<const GaussianBlurOperator> blur(Index m1, Index m2) {
  return std::make_shared<GaussianBlurOperator>(m1, m2, 2.0);
}

// Per-pixel double loop following the written definition, independent of
// forward_diff.
double huber_tv_oracle(const Image& x, const Vector& ax, const Vector& y, double alpha,
                       double eps) {
  double tv = 0.0;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      const double d1 = i + 1 < x.rows() ? x(i + 1, j) - x(i, j) : 0.0;
      const double d2 = j + 1 < x.cols() ? x(i, j + 1) - x(i, j) : 0.0;
      const double s = std::sqrt(d1 * d1 + d2 * d2);
      tv += s <= eps ? s * s / (2.0 * eps) : s - eps / 2.0;
    }
  return 0.5 * (ax - y).squaredNorm() + alpha * tv;
}

TEST(LeastSquares, ValueExamples) {
  const auto id = LeastSquaresObjective::dense(DenseMatrix::Identity(2, 2), vec({0, 0}));
  EXPECT_EQ(ls_eval(*id, vec({1, 2})), 2.5);
  EXPECT_EQ(ls_grad(*id, vec({1, 2})), vec({1, 2}));
  const auto fit = LeastSquaresObjective::dense(DenseMatrix::Identity(2, 2), vec({4, 5}));
  EXPECT_EQ(ls_eval(*fit, vec({4, 5})), 0.0);
  EXPECT_EQ(ls_grad(*fit, vec({4, 5})), Vector::Zero(2));
  DenseMatrix a(2, 2);
  a << 1, 2, 0, 1;
  const auto p = LeastSquaresObjective::dense(a, vec({1, 0}));
  EXPECT_EQ(ls_eval(*p, vec({1, 1})), 2.5);
  EXPECT_THROW(ls_eval(*p, vec({1})), InvalidInput);
}

TEST(LeastSquares, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  const auto p = LeastSquaresObjective::dense(rng.normal_matrix(4, 3), rng.normal_vector(4));
  for (int trial = 0; trial < 20; ++trial) EXPECT_LT(fd_rel_error(*p, rng.normal_vector(3)), 1e-6);
}

TEST(LeastSquares, SmoothnessIsSpectralNormSquared) {
  Rng rng(22);
  const DenseMatrix a = rng.normal_matrix(6, 4);
  const double s = Eigen::JacobiSVD<DenseMatrix>(a).singularValues()[0];
  const auto dense = LeastSquaresObjective::dense(a, Vector::Zero(6));
  EXPECT_NEAR(dense->smoothness(), s * s, 1e-10 * s * s);
  const LeastSquaresObjective iterative(std::make_shared<MatrixOperator>(a), Vector::Zero(6));
  EXPECT_NEAR(iterative.smoothness(), s * s, 1e-8 * s * s);
  ASSERT_TRUE(dense->strong_convexity().has_value());
}

TEST(Huber, BranchesMeetAtEpsilon) {
  EXPECT_DOUBLE_EQ(huber(0.01, 0.01), 0.005);
  EXPECT_DOUBLE_EQ(huber(-0.01, 0.01), 0.005);
  EXPECT_DOUBLE_EQ(huber(1.0, 0.01), 0.995);
  EXPECT_DOUBLE_EQ(huber(0.005, 0.01), 0.00125);
}

TEST(GaussianBlur, KernelProperties) {
  const GaussianBlurOperator b(28, 28, 2.0);
  EXPECT_EQ(b.radius(), 6);
  const Image k = b.kernel();
  EXPECT_EQ(k.rows(), 13);
  EXPECT_NEAR(k.data().sum(), 1.0, 1e-15);
  for (Index i = 0; i < 13; ++i)
    for (Index j = 0; j < 13; ++j) EXPECT_EQ(k(i, j), k(12 - i, 12 - j));
}

TEST(GaussianBlur, MatchesKernelConvolution) {
  Rng rng(23);
  const GaussianBlurOperator b(9, 11, 2.0);
  const Image x(9, 11, rng.uniform_vector(99));
  EXPECT_LE((b.apply(x.data()) - conv2d(b.kernel(), x).data()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GaussianBlur, SelfAdjointAndContractive) {
  Rng rng(24);
  const GaussianBlurOperator b(12, 10, 2.0);
  const Vector x = rng.normal_vector(120);
  const Vector z = rng.normal_vector(120);
  EXPECT_NEAR(b.apply(x).dot(z), x.dot(b.apply(z)), 1e-12);
  EXPECT_LE(b.norm_sq_estimate(), 1.0);
}

TEST(HuberTV, ConstantImageAtExactObservationIsZero) {
  const auto a = blur(8, 8);
  const Vector x = Vector::Constant(64, 0.3);
  const HuberTVObjective f(a, a->apply(x), 1e-4, 0.01);
  EXPECT_EQ(huber_eval(f, x), 0.0);
  EXPECT_EQ(huber_grad(f, x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HuberTV, SingleStepEdgeUsesLinearBranch) {
  const auto a = blur(4, 4);
  Image x(4, 4);
  x(3, 0) = 1.0;  // one vertical unit step from (2, 0)
  const HuberTVObjective f(a, a->apply(x.data()), 1.0, 0.01);
  EXPECT_DOUBLE_EQ(f.regulariser(x.data()), 2.0 * 0.995);  // edges (2,0)->(3,0), (3,0)->(3,1)
  Image y(4, 4);
  for (Index j = 0; j < 4; ++j) y(3, j) = 1.0;
  EXPECT_NEAR(f.regulariser(y.data()), 4.0 * 0.995, 1e-15);
}

TEST(HuberTV, MatchesDoubleLoopOracle) {
  Rng rng(25);
  const auto a = blur(4, 4);
  for (int trial = 0; trial < 10; ++trial) {
    const Image x(4, 4, rng.uniform_vector(16, -0.02, 0.02));
    const Vector y = rng.uniform_vector(16);
    const HuberTVObjective f(a, y, 0.3, 0.01);
    EXPECT_NEAR(f.value(x.data()), huber_tv_oracle(x, a->apply(x.data()), y, 0.3, 0.01), 1e-12);
  }
}

TEST(HuberTV, GradientMatchesFiniteDifferences) {
  Rng rng(26);
  const auto a = blur(8, 8);
  const HuberTVObjective f(a, rng.uniform_vector(64, 0, 1), 0.05, 0.01);
  for (int trial = 0; trial < 20; ++trial)
    EXPECT_LT(fd_rel_error(f, rng.uniform_vector(64, 0, 1)), 1e-5);
}

TEST(HuberTV, ConvexAlongSegments) {
  Rng rng(27);
  const auto a = blur(6, 6);
  const HuberTVObjective f(a, rng.uniform_vector(36), 0.1, 0.01);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector p = rng.uniform_vector(36);
    const Vector q = rng.uniform_vector(36);
    EXPECT_LE(f.value(0.5 * (p + q)), 0.5 * f.value(p) + 0.5 * f.value(q) + 1e-12);
  }
}

TEST(HuberTV, SampledLipschitz) {
  Rng rng(28);
  const auto a = blur(8, 8);
  const HuberTVObjective f(a, rng.uniform_vector(64), 1e-2, 0.01);
  const double l = f.smoothness();
  for (int trial = 0; trial < 100; ++trial) {
    const Vector p = rng.uniform_vector(64);
    const Vector q = p + 0.01 * rng.normal_vector(64);
    EXPECT_LE((f.gradient(p) - f.gradient(q)).norm(), l * (p - q).norm() + 1e-9);
  }
}

TEST(HuberTV, SmoothnessBound) {
  const auto a = blur(28, 28);
  const HuberTVObjective f(a, Vector::Zero(784), 1e-4, 0.01);
  EXPECT_LE(smoothness_bound(f), 1.08);
  const HuberTVObjective no_reg(a, Vector::Zero(784), 0.0, 0.01);
  EXPECT_EQ(smoothness_bound(no_reg), f.norms().blur_norm_sq);
  EXPECT_LE(smoothness_bound(no_reg), 1.0);
}

TEST(HuberTV, RejectsBadParameters) {
  const auto a = blur(4, 4);
  EXPECT_THROW(HuberTVObjective(a, Vector::Zero(16), -1.0, 0.01), InvalidInput);
  EXPECT_THROW(HuberTVObjective(a, Vector::Zero(16), 1.0, 0.0), InvalidInput);
  EXPECT_THROW(HuberTVObjective(a, Vector::Zero(15), 1.0, 0.01), InvalidInput);
}

}  // namespace
}  // namespace lpgd
