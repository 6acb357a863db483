// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lpgd/objectives.hpp"
#include "lpgd/preconditioners.hpp"

namespace lpgd {

/// Closed-form minimisers of the greedy subproblem
///   g_t(theta) = (1/N) sum_k 1/2 |A_k (x_k - G_theta grad_k) - y_k|^2.
namespace closed_form {

/// Default cap on n for the n^2 x n^2 full-matrix system.
inline constexpr Index kDefaultFullCap = 64;
/// Default cap on n for dense n x n Gram matrices.
inline constexpr Index kDefaultGramCap = 4096;

/// Per-point least-squares data at the current iterates.
class LsSnapshot {
 public:
  using ProblemPtr = std::shared_ptr<const LeastSquaresObjective>;

  LsSnapshot(std::vector<ProblemPtr> problems, std::vector<Vector> iterates)
      : problems_(std::move(problems)), iterates_(std::move(iterates)) {
    if (problems_.empty()) throw InvalidInput("LsSnapshot: empty dataset");
    if (problems_.size() != iterates_.size())
      throw InvalidInput("LsSnapshot: problem and iterate counts differ");
    const Index n = problems_.front()->dim();
    grads_.reserve(problems_.size());
    for (std::size_t k = 0; k < problems_.size(); ++k) {
      if (!problems_[k]) throw InvalidInput("LsSnapshot: null problem");
      require_size(problems_[k]->dim(), n, "LsSnapshot");
      require_size(iterates_[k].size(), n, "LsSnapshot");
      grads_.push_back(problems_[k]->gradient(iterates_[k]));
      require_finite(grads_.back(), "LsSnapshot gradient");
    }
  }

  std::size_t size() const { return problems_.size(); }
  Index dim() const { return problems_.front()->dim(); }
  const LeastSquaresObjective& problem(std::size_t k) const { return *problems_[k]; }
  const std::vector<ProblemPtr>& problems() const { return problems_; }
  const std::vector<Vector>& iterates() const { return iterates_; }
  const std::vector<Vector>& grads() const { return grads_; }

  /// Dense A_k^T A_k, one per distinct operator.
  std::vector<DenseMatrix> grams(Index cap = kDefaultGramCap) const {
    if (dim() > cap)
      throw CapacityError("LsSnapshot: dense Gram of size " + std::to_string(dim()) +
                          " exceeds cap " + std::to_string(cap));
    std::map<const LinearOperator*, std::size_t> seen;
    std::vector<DenseMatrix> unique;
    std::vector<DenseMatrix> out;
    out.reserve(size());
    for (const auto& p : problems_) {
      auto [it, inserted] = seen.try_emplace(&p->op(), unique.size());
      if (inserted) unique.push_back(p->op().gram());
      out.push_back(unique[it->second]);
    }
    return out;
  }

 private:
  std::vector<ProblemPtr> problems_;
  std::vector<Vector> iterates_;
  std::vector<Vector> grads_;
};

/// theta = ((1/N) sum (A_k B_k)^T (A_k B_k))^+ ((1/N) sum B_k^T grad f_k(v_k)).
inline Vector general_affine_ls(std::span<const DenseMatrix> b_list, std::span<const Vector> v_list,
                                const LsSnapshot& snap, Index cap = 4096) {
  const std::size_t n_pts = snap.size();
  if (b_list.size() != n_pts || v_list.size() != n_pts)
    throw InvalidInput("general_affine_ls: list lengths differ from snapshot size");
  const Index n = snap.dim();
  const Index r = b_list.front().cols();
  if (r > cap) throw CapacityError("general_affine_ls: parameter dimension exceeds cap");
  DenseMatrix lhs = DenseMatrix::Zero(r, r);
  Vector rhs = Vector::Zero(r);
  for (std::size_t k = 0; k < n_pts; ++k) {
    require_size(b_list[k].rows(), n, "general_affine_ls B rows");
    require_size(b_list[k].cols(), r, "general_affine_ls B cols");
    require_size(v_list[k].size(), n, "general_affine_ls v");
    DenseMatrix ab(snap.problem(k).observation_dim(), r);
    for (Index j = 0; j < r; ++j) ab.col(j) = snap.problem(k).op().apply(b_list[k].col(j));
    lhs.noalias() += ab.transpose() * ab;
    rhs.noalias() += b_list[k].transpose() * snap.problem(k).gradient(v_list[k]);
  }
  lhs /= static_cast<double>(n_pts);
  rhs /= static_cast<double>(n_pts);
  lhs = 0.5 * (lhs + lhs.transpose());
  return pinv_solve(lhs, rhs);
}

/// Optimal greedy scalar step: sum |g_k|^2 / sum |A_k g_k|^2, or 0 when
/// every A_k g_k vanishes.
inline double scalar_ls(const LsSnapshot& snap) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < snap.size(); ++k) {
    const Vector& g = snap.grads()[k];
    num += g.squaredNorm();
    den += snap.problem(k).op().apply(g).squaredNorm();
  }
  return den > 0.0 ? num / den : 0.0;
}

/// p = ((1/N) sum (g_k g_k^T) .* (A_k^T A_k))^+ ((1/N) sum g_k .* g_k).
inline Vector diagonal_ls(const LsSnapshot& snap, Index gram_cap = kDefaultGramCap) {
  const Index n = snap.dim();
  const std::vector<DenseMatrix> grams = snap.grams(gram_cap);
  DenseMatrix lhs = DenseMatrix::Zero(n, n);
  Vector rhs = Vector::Zero(n);
  for (std::size_t k = 0; k < snap.size(); ++k) {
    const Vector& g = snap.grads()[k];
    lhs.noalias() += (g * g.transpose()).cwiseProduct(grams[k]);
    rhs += g.cwiseProduct(g);
  }
  const double inv_n = 1.0 / static_cast<double>(snap.size());
  lhs *= inv_n;
  rhs *= inv_n;
  return pinv_solve(0.5 * (lhs + lhs.transpose()), rhs);
}

/// Full-matrix preconditioner from the n^2 x n^2 Kronecker system
///   ((1/N) sum (g_k g_k^T) kron (A_k^T A_k))^+ ((1/N) sum g_k kron g_k),
/// reshaped column by column into P.
inline DenseMatrix full_ls(const LsSnapshot& snap, Index cap = kDefaultFullCap) {
  const Index n = snap.dim();
  if (n > cap)
    throw CapacityError("full_ls: n = " + std::to_string(n) + " exceeds cap " +
                        std::to_string(cap) + " (system is n^2 x n^2)");
  const std::vector<DenseMatrix> grams = snap.grams();
  DenseMatrix lhs = DenseMatrix::Zero(n * n, n * n);
  Vector rhs = Vector::Zero(n * n);
  for (std::size_t k = 0; k < snap.size(); ++k) {
    const Vector& g = snap.grads()[k];
    lhs += kron(g * g.transpose(), grams[k]);
    rhs += kron(g, g);
  }
  const double inv_n = 1.0 / static_cast<double>(snap.size());
  lhs *= inv_n;
  rhs *= inv_n;
  const Vector theta = pinv_solve(0.5 * (lhs + lhs.transpose()), rhs);
  return Eigen::Map<const DenseMatrix>(theta.data(), n, n);
}

/// Least-norm P with P grads[k] = displacements[k] for every k. Requires
/// linearly independent gradients (so N <= n).
inline DenseMatrix interpolating_full(std::span<const Vector> grads,
                                      std::span<const Vector> displacements,
                                      double rank_tol = 1e-10) {
  if (grads.empty()) throw InvalidInput("interpolating_full: empty dataset");
  if (grads.size() != displacements.size())
    throw InvalidInput("interpolating_full: list lengths differ");
  const Index n = grads.front().size();
  const Index count = static_cast<Index>(grads.size());
  DenseMatrix g(n, count);
  DenseMatrix d(n, count);
  for (Index k = 0; k < count; ++k) {
    require_size(grads[k].size(), n, "interpolating_full");
    require_size(displacements[k].size(), n, "interpolating_full");
    g.col(k) = grads[k];
    d.col(k) = displacements[k];
  }
  require_finite(g, "interpolating_full");
  require_finite(d, "interpolating_full");
  Eigen::JacobiSVD<DenseMatrix> svd(g);
  const Vector& s = svd.singularValues();
  const double smax = s.size() ? s.maxCoeff() : 0.0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > rank_tol * smax && smax > 0.0) ++rank;
  if (rank < count)
    throw RankDeficient("interpolating_full: gradients are linearly dependent", rank);
  // P = D (G^T G)^{-1} G^T.
  const DenseMatrix gram = g.transpose() * g;
  return d * gram.ldlt().solve(g.transpose());
}

/// Strong-convexity modulus of g_t certified by some j with mu_j present
/// and B_j injective: mu_j lambda_min(B_j^T B_j) / N (largest over j).
inline std::optional<double> uniqueness_certificate(std::span<const DenseMatrix> b_list,
                                                    std::span<const std::optional<double>> mu_list,
                                                    double rank_tol = 1e-12) {
  if (b_list.size() != mu_list.size())
    throw InvalidInput("uniqueness_certificate: list lengths differ");
  std::optional<double> best;
  const double n_pts = static_cast<double>(b_list.size());
  for (std::size_t j = 0; j < b_list.size(); ++j) {
    if (!mu_list[j] || !(*mu_list[j] > 0.0)) continue;
    const DenseMatrix& b = b_list[j];
    if (b.cols() == 0 || b.rows() < b.cols()) continue;
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(b.transpose() * b, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmax > 0.0) || lmin <= rank_tol * lmax) continue;
    const double cert = *mu_list[j] * lmin / n_pts;
    if (!best || cert > *best) best = cert;
  }
  return best;
}

/// Expansion matrix B_k for theta -> G_theta g (dense; used for checks and
/// the general affine solver).
inline DenseMatrix expansion_matrix(const Parametrization& par, const Vector& g) {
  const Index r = par.param_dim();
  DenseMatrix b(par.dim(), r);
  Vector e = Vector::Zero(r);
  for (Index j = 0; j < r; ++j) {
    e[j] = 1.0;
    b.col(j) = apply(ParamVector(par, e), g);
    e[j] = 0.0;
  }
  return b;
}

}  // namespace closed_form
}  // namespace lpgd
