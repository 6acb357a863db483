// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "lpgd/deploy.hpp"

namespace lpgd {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::shared_ptr<const LeastSquaresObjective> diag_ls(std::initializer_list<double> d, Vector y) {
  return LeastSquaresObjective::dense(DenseMatrix(vec(d).asDiagonal()), std::move(y));
}

RunOptions opts(std::size_t iters) {
  RunOptions o;
  o.iters = iters;
  return o;
}

TEST(DeployPolicy, FreezeAndRecycle) {
  const DeployPolicy freeze{DeployMode::Freeze};
  const DeployPolicy recycle{DeployMode::Recycle};
  std::vector<std::size_t> r;
  for (std::size_t t = 0; t < 7; ++t) r.push_back(recycle.select(t, 3));
  EXPECT_EQ(r, (std::vector<std::size_t>{0, 1, 2, 0, 1, 2, 0}));
  EXPECT_EQ(freeze.select(10, 3), 2u);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(freeze.select(t, 3), recycle.select(t, 3));
  EXPECT_THROW(freeze.select(0, 0), InvalidInput);
}

TEST(RunSchedule, SafeguardScheduleReproducesFixedStep) {
  Rng rng(71);
  const auto p = LeastSquaresObjective::dense(rng.normal_matrix(8, 5), rng.normal_vector(8));
  const auto par = Parametrization::diagonal(5);
  const double tau = 1.0 / p->smoothness();
  const PreconditionerSchedule s{par, {embed_tau(par, tau), embed_tau(par, tau)}, tau, {}};
  const Vector x0 = rng.normal_vector(5);
  const RunTrace learned = run_schedule(*p, x0, s, {DeployMode::Freeze}, 20);
  const RunTrace gd = gd_fixed(*p, x0, tau, 20);
  EXPECT_EQ(learned.values, gd.values);
  EXPECT_EQ(learned.final_iterate, gd.final_iterate);
  EXPECT_TRUE(learned.non_monotone);
}

TEST(RunSchedule, RecycleOrderAndLength) {
  const auto p = diag_ls({1, 2}, vec({0, 0}));
  const auto par = Parametrization::scalar(2);
  const PreconditionerSchedule s{
      par, {ParamVector(par, vec({0.1})), ParamVector(par, vec({0.2})), ParamVector(par, vec({0.3}))},
      0.1, {}};
  const RunTrace tr = run_schedule(*p, vec({1, 1}), s, {DeployMode::Recycle}, 7);
  EXPECT_EQ(tr.schedule_indices, (std::vector<std::size_t>{0, 1, 2, 0, 1, 2, 0}));
  EXPECT_EQ(tr.length(), 8u);
}

TEST(RunSchedule, DivergenceIsFlagged) {
  const auto p = diag_ls({1, 2}, vec({0, 0}));
  const auto par = Parametrization::scalar(2);
  const PreconditionerSchedule s{par, {ParamVector(par, vec({5.0}))}, 0.1, {}};
  const RunTrace tr = run_schedule(*p, vec({1, 1}), s, {DeployMode::Freeze}, 200);
  EXPECT_TRUE(tr.diverged);
  EXPECT_LT(tr.length(), 201u);
}

TEST(GdFixed, Examples) {
  const auto p = diag_ls({1, 1}, vec({2, 3}));
  const RunTrace at_min = gd_fixed(*p, vec({2, 3}), 1.0, 5);
  for (double v : at_min.values) EXPECT_EQ(v, 0.0);
  const auto half = diag_ls({1}, vec({0}));
  const RunTrace one = gd_fixed(*half, vec({4}), 1.0, 3);
  EXPECT_EQ(one.values[1], 0.0);
  EXPECT_THROW(gd_fixed(*p, vec({0, 0}), 0.0, 1), InvalidInput);
}

TEST(GdFixed, StrictlyDecreasingWithInverseL) {
  Rng rng(72);
  const auto p = LeastSquaresObjective::dense(rng.normal_matrix(10, 6), rng.normal_vector(10));
  const RunTrace tr = gd_fixed(*p, rng.normal_vector(6), 1.0 / p->smoothness(), 50);
  for (std::size_t t = 1; t < tr.length(); ++t) EXPECT_LT(tr.values[t], tr.values[t - 1]);
}

TEST(Backtracking, AcceptsUnitStepOnHalfSquare) {
  const auto p = diag_ls({1}, vec({0}));
  const RunTrace tr = backtracking_gd(*p, vec({3}), opts(2));
  EXPECT_EQ(tr.values[1], 0.0);
}

TEST(Backtracking, MonotoneOnHuberTV) {
  Rng rng(73);
  auto blur = std::make_shared<GaussianBlurOperator>(8, 8, 2.0);
  const HuberTVObjective f(blur, rng.uniform_vector(64, 0, 1), 1e-3, 0.01);
  const Vector x0 = f.observation();
  const RunTrace bt = backtracking_gd(f, x0, opts(200));
  for (std::size_t t = 1; t < bt.length(); ++t) EXPECT_LE(bt.values[t], bt.values[t - 1]);
  const auto ref = reference_optimum(f, x0);
  ASSERT_TRUE(ref.converged);
  const RunTrace gd = gd_fixed(f, x0, 1.0 / f.smoothness(), 200);
  EXPECT_LE(bt.values.back() - ref.value, 10.0 * (gd.values.back() - ref.value) + 1e-12);
}

TEST(Backtracking, RejectsBadParameters) {
  const auto p = diag_ls({1}, vec({0}));
  BacktrackingParams bp;
  bp.rho = 1.0;
  EXPECT_THROW(backtracking_gd(*p, vec({1}), opts(1), bp), InvalidInput);
}

TEST(ExactLineSearch, Examples) {
  const auto id = diag_ls({1, 1, 1}, vec({1, 2, 3}));
  const RunTrace one = exact_line_search_ls(*id, vec({0, 0, 0}), opts(2));
  EXPECT_NEAR(one.values[1], 0.0, 1e-30);
  const auto p = diag_ls({1, 10}, vec({1, 1}));
  const Vector x0 = vec({5, -3});
  const RunTrace els = exact_line_search_ls(*p, x0, opts(30));
  const RunTrace gd = gd_fixed(*p, x0, 1.0 / p->smoothness(), 30);
  for (std::size_t t = 1; t < els.length(); ++t) EXPECT_LT(els.values[t], gd.values[t]);
}

TEST(Fista, Examples) {
  EXPECT_DOUBLE_EQ(fista_next(1.0), (1.0 + std::sqrt(5.0)) / 2.0);
  EXPECT_NEAR(fista_next(fista_next(1.0)), 2.1935, 1e-4);
  const auto p = diag_ls({1, 1}, vec({2, 3}));
  for (double v : fista(*p, vec({2, 3}), opts(5)).values) EXPECT_EQ(v, 0.0);
  Rng rng(74);
  const DenseMatrix a = vec({1.0, 0.5, 0.2, 0.1, 0.05}).asDiagonal();
  const auto q = LeastSquaresObjective::dense(a, rng.normal_vector(5));
  const Vector x0 = rng.normal_vector(5);
  const RunTrace fa = fista(*q, x0, opts(50));
  const RunTrace gd = gd_fixed(*q, x0, 1.0 / q->smoothness(), 50);
  EXPECT_LE(fa.values[50], gd.values[50]);
  EXPECT_TRUE(fa.non_monotone);
}

TEST(Bfgs, QuadraticTermination) {
  const auto p = diag_ls({1, 2}, vec({0, 0}));  // 1/2 x^T diag(1, 4) x
  std::vector<DenseMatrix> hs;
  BfgsOptions bo;
  bo.observer = [&](const DenseMatrix& h) { hs.push_back(h); };
  const RunTrace tr = bfgs(*p, vec({1, 1}), opts(3), bo);
  EXPECT_LE(tr.final_iterate.norm(), 1e-8);
  for (const auto& h : hs) EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Bfgs, SymmetricOnLargerProblem) {
  Rng rng(75);
  const auto p = LeastSquaresObjective::dense(rng.normal_matrix(12, 8), rng.normal_vector(12));
  BfgsOptions bo;
  double worst = 0.0;
  bo.observer = [&](const DenseMatrix& h) {
    worst = std::max(worst, (h - h.transpose()).cwiseAbs().maxCoeff());
  };
  const RunTrace tr = bfgs(*p, rng.normal_vector(8), opts(40), bo);
  EXPECT_LE(worst, 1e-10);
  EXPECT_LE(tr.grad_norms.back(), 1e-10 * tr.grad_norms.front());
  EXPECT_EQ(tr.length(), 41u);
}

TEST(Bfgs, SkipsZeroCurvature) {
  const DenseMatrix h = DenseMatrix::Identity(2, 2) * 3.0;
  EXPECT_EQ(bfgs_update(h, vec({1, 0}), vec({0, 1})), h);
  EXPECT_EQ(bfgs_update(h, vec({1, 0}), vec({0, 0})), h);
}

TEST(Bfgs, ThrowsWhenLineSearchFailsAwayFromOptimum) {
  const auto p = diag_ls({1, 2}, vec({0, 0}));
  BfgsOptions bo;
  bo.wolfe.max_trials = 1;
  bo.wolfe.c2 = 1e-6;
  EXPECT_THROW(bfgs(*p, vec({1, 1}), opts(3), bo), NumericalFailure);
}

TEST(Bfgs, CapacityCap) {
  const auto p = diag_ls({1, 1, 1}, vec({0, 0, 0}));
  BfgsOptions bo;
  bo.max_dim = 2;
  EXPECT_THROW(bfgs(*p, vec({1, 1, 1}), opts(1), bo), CapacityError);
}

TEST(ReferenceOptimum, MatchesDenseSolve) {
  Rng rng(76);
  const DenseMatrix a = rng.normal_matrix(7, 7) + 3.0 * DenseMatrix::Identity(7, 7);
  const Vector y = rng.normal_vector(7);
  const auto p = LeastSquaresObjective::dense(a, y);
  const auto ref = reference_optimum(*p, Vector::Zero(7));
  EXPECT_TRUE(ref.converged);
  EXPECT_LE((ref.x - a.lu().solve(y)).norm(), 1e-8);
}

TEST(ReferenceOptimum, AlreadyOptimal) {
  const auto p = diag_ls({1, 2}, vec({1, 2}));
  const auto ref = reference_optimum(*p, vec({1, 1}));
  EXPECT_TRUE(ref.converged);
  EXPECT_EQ(ref.iterations, 0u);
}

TEST(ReferenceOptimum, HuberTVReachesTolerance) {
  Rng rng(77);
  auto blur = std::make_shared<GaussianBlurOperator>(28, 28, 2.0);
  const HuberTVObjective f(blur, blur->apply(rng.uniform_vector(784, 0, 1)), 1e-4, 0.01);
  const auto ref = reference_optimum(f, f.observation());
  EXPECT_TRUE(ref.converged);
  EXPECT_LE(ref.grad_norm, 1e-10);
}

TEST(ReferenceOptimum, NotConvergedFlag) {
  Rng rng(78);
  const auto p = LeastSquaresObjective::dense(rng.normal_matrix(6, 6), rng.normal_vector(6));
  const auto ref = reference_optimum(*p, Vector::Zero(6), 1e-10, 2);
  EXPECT_FALSE(ref.converged);
  EXPECT_EQ(ref.iterations, 2u);
}

TEST(RunTrace, GapsFollowReference) {
  const auto p = diag_ls({1, 2}, vec({1, 2}));
  RunOptions o = opts(3);
  o.f_star = 0.0;
  o.snapshot_at = {0, 2};
  const RunTrace tr = gd_fixed(*p, vec({0, 0}), 0.2, o);
  ASSERT_EQ(tr.gaps.size(), 4u);
  EXPECT_EQ(tr.gaps, tr.values);
  ASSERT_EQ(tr.snapshots.size(), 2u);
  EXPECT_EQ(tr.snapshots[1].first, 2u);
}

}  // namespace
}  // namespace lpgd
