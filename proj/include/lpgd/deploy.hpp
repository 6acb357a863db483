// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lpgd/objectives.hpp"
#include "lpgd/preconditioners.hpp"
#include "lpgd/trainer.hpp"

namespace lpgd {

enum class DeployMode { Freeze, Recycle };

/// Which learned parameters drive iteration t: theta_{min(t, T-1)} under
/// Freeze, theta_{t mod T} under Recycle.
struct DeployPolicy {
  DeployMode mode = DeployMode::Freeze;

  std::size_t select(std::size_t t, std::size_t length) const {
    if (length == 0) throw InvalidInput("DeployPolicy: empty schedule");
    return mode == DeployMode::Freeze ? std::min(t, length - 1) : t % length;
  }
};

inline std::string_view to_string(DeployMode m) {
  return m == DeployMode::Freeze ? "freeze" : "recycle";
}

inline DeployMode deploy_mode_from_string(std::string_view s) {
  if (s == "freeze") return DeployMode::Freeze;
  if (s == "recycle") return DeployMode::Recycle;
  throw InvalidInput("unknown deploy policy '" + std::string(s) + "'");
}

/// One optimisation run: row t describes x_t, t = 0..iters.
struct RunTrace {
  std::string method;
  std::vector<double> values;
  /// f(x_t) - f*; empty when no reference optimum was supplied.
  std::vector<double> gaps;
  std::vector<double> grad_norms;
  std::vector<double> seconds;
  /// Parameter index used for each step (schedule runs only).
  std::vector<std::size_t> schedule_indices;
  /// Iterates kept at the requested snapshot iterations.
  std::vector<std::pair<std::size_t, Vector>> snapshots;
  Vector final_iterate;
  bool diverged = false;
  /// Stopped early by a numerical failure (e.g. line search).
  bool failed = false;
  std::string failure;
  /// The method does not guarantee f(x_{t+1}) <= f(x_t).
  bool non_monotone = false;

  std::size_t length() const { return values.size(); }
};

struct RunOptions {
  std::size_t iters = 100;
  std::optional<double> f_star;
  std::vector<std::size_t> snapshot_at;
  /// Abort once f exceeds this multiple of |f(x_0)|.
  double divergence_factor = 1e12;
};

namespace detail {

class Recorder {
 public:
  Recorder(std::string method, const RunOptions& opts, bool non_monotone)
      : opts_(opts), start_(std::chrono::steady_clock::now()) {
    trace_.method = std::move(method);
    trace_.non_monotone = non_monotone;
  }

  /// Records x_t; returns false when the run has diverged.
  bool record(const Vector& x, double f, const Vector& grad) {
    const std::size_t t = trace_.values.size();
    if (t == 0) f0_ = f;
    const bool blown = !std::isfinite(f) || !all_finite(grad) ||
                       (f0_ > 0.0 && f > opts_.divergence_factor * std::abs(f0_)) ||
                       (f0_ < 0.0 && f > opts_.divergence_factor * std::abs(f0_));
    if (blown) {
      trace_.diverged = true;
      return false;
    }
    trace_.values.push_back(f);
    if (opts_.f_star) trace_.gaps.push_back(f - *opts_.f_star);
    trace_.grad_norms.push_back(grad.norm());
    trace_.seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    for (std::size_t s : opts_.snapshot_at)
      if (s == t) trace_.snapshots.emplace_back(t, x);
    trace_.final_iterate = x;
    return true;
  }

  void fail(const std::string& why) {
    trace_.failed = true;
    trace_.failure = why;
  }

  RunTrace finish() { return std::move(trace_); }
  RunTrace& trace() { return trace_; }

 private:
  const RunOptions& opts_;
  std::chrono::steady_clock::time_point start_;
  RunTrace trace_;
  double f0_ = 0.0;
};

}  // namespace detail

/// x_{t+1} = x_t - G_{theta_sel(t)} grad f(x_t).
inline RunTrace run_schedule(const Objective& f, const Vector& x0,
                             const PreconditionerSchedule& schedule, DeployPolicy policy,
                             const RunOptions& opts, std::string label = "learned") {
  require_size(x0.size(), f.dim(), "run_schedule");
  require_size(schedule.par.dim(), f.dim(), "run_schedule schedule");
  if (schedule.thetas.empty()) throw InvalidInput("run_schedule: empty schedule");
  detail::Recorder rec(std::move(label), opts, true);
  Vector x = x0;
  auto [fx, g] = f.value_and_gradient(x);
  if (!rec.record(x, fx, g)) return rec.finish();
  for (std::size_t t = 0; t < opts.iters; ++t) {
    const std::size_t idx = policy.select(t, schedule.thetas.size());
    rec.trace().schedule_indices.push_back(idx);
    x -= apply(schedule.thetas[idx], g);
    std::tie(fx, g) = f.value_and_gradient(x);
    if (!rec.record(x, fx, g)) break;
  }
  return rec.finish();
}

inline RunTrace run_schedule(const Objective& f, const Vector& x0,
                             const PreconditionerSchedule& schedule, DeployPolicy policy,
                             std::size_t iters) {
  RunOptions opts;
  opts.iters = iters;
  return run_schedule(f, x0, schedule, policy, opts);
}

/// Plain gradient descent with a constant step.
inline RunTrace gd_fixed(const Objective& f, const Vector& x0, double step, const RunOptions& opts,
                         std::string label = "gd_fixed") {
  if (!(step > 0.0)) throw InvalidInput("gd_fixed: step must be positive");
  require_size(x0.size(), f.dim(), "gd_fixed");
  detail::Recorder rec(std::move(label), opts, false);
  Vector x = x0;
  auto [fx, g] = f.value_and_gradient(x);
  if (!rec.record(x, fx, g)) return rec.finish();
  for (std::size_t t = 0; t < opts.iters; ++t) {
    x -= step * g;
    std::tie(fx, g) = f.value_and_gradient(x);
    if (!rec.record(x, fx, g)) break;
  }
  return rec.finish();
}

inline RunTrace gd_fixed(const Objective& f, const Vector& x0, double step, std::size_t iters) {
  RunOptions opts;
  opts.iters = iters;
  return gd_fixed(f, x0, step, opts);
}

struct BacktrackingParams {
  double c = 1e-4;
  double rho = 0.5;
  double step0 = 1.0;
  std::size_t max_backtracks = 100;
};

/// Armijo backtracking: shrink s by rho from step0 until
/// f(x - s g) <= f(x) - c s |g|^2.
inline RunTrace backtracking_gd(const Objective& f, const Vector& x0, const RunOptions& opts,
                                BacktrackingParams params = {},
                                std::string label = "backtracking") {
  if (!(params.c > 0.0 && params.c < 1.0)) throw InvalidInput("backtracking_gd: need 0 < c < 1");
  if (!(params.rho > 0.0 && params.rho < 1.0))
    throw InvalidInput("backtracking_gd: need 0 < rho < 1");
  if (!(params.step0 > 0.0)) throw InvalidInput("backtracking_gd: step0 must be positive");
  require_size(x0.size(), f.dim(), "backtracking_gd");
  detail::Recorder rec(std::move(label), opts, false);
  Vector x = x0;
  auto [fx, g] = f.value_and_gradient(x);
  if (!rec.record(x, fx, g)) return rec.finish();
  for (std::size_t t = 0; t < opts.iters; ++t) {
    const double gg = g.squaredNorm();
    if (gg == 0.0) {
      if (!rec.record(x, fx, g)) break;
      continue;
    }
    double s = params.step0;
    Vector trial = x - s * g;
    double ft = f.value(trial);
    std::size_t backtracks = 0;
    while (!(ft <= fx - params.c * s * gg)) {
      if (++backtracks > params.max_backtracks)
        throw NumericalFailure("backtracking_gd: Armijo condition not met after " +
                                   std::to_string(params.max_backtracks) + " backtracks",
                               t);
      s *= params.rho;
      trial = x - s * g;
      ft = f.value(trial);
    }
    x = std::move(trial);
    std::tie(fx, g) = f.value_and_gradient(x);
    if (!rec.record(x, fx, g)) break;
  }
  return rec.finish();
}

/// Exact line search for least squares: step |g|^2 / |A g|^2 (0 when A g = 0).
inline RunTrace exact_line_search_ls(const LeastSquaresObjective& p, const Vector& x0,
                                     const RunOptions& opts,
                                     std::string label = "exact_line_search") {
  require_size(x0.size(), p.dim(), "exact_line_search_ls");
  detail::Recorder rec(std::move(label), opts, false);
  Vector x = x0;
  auto [fx, g] = p.value_and_gradient(x);
  if (!rec.record(x, fx, g)) return rec.finish();
  for (std::size_t t = 0; t < opts.iters; ++t) {
    const double den = p.op().apply(g).squaredNorm();
    const double alpha = den > 0.0 ? g.squaredNorm() / den : 0.0;
    x -= alpha * g;
    std::tie(fx, g) = p.value_and_gradient(x);
    if (!rec.record(x, fx, g)) break;
  }
  return rec.finish();
}

/// FISTA momentum sequence t_1 = 1, t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
inline double fista_next(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

/// Accelerated gradient with constant step 1/L (no proximal term).
/// Records the main sequence x_t.
inline RunTrace fista(const Objective& f, const Vector& x0, const RunOptions& opts,
                      std::string label = "fista") {
  require_size(x0.size(), f.dim(), "fista");
  const double lip = f.smoothness();
  if (!(lip > 0.0)) throw InvalidInput("fista: objective needs a positive smoothness constant");
  detail::Recorder rec(std::move(label), opts, true);
  Vector x = x0;
  auto [fx, gx] = f.value_and_gradient(x);
  if (!rec.record(x, fx, gx)) return rec.finish();
  Vector y = x;
  Vector gy = gx;
  double t = 1.0;
  for (std::size_t k = 0; k < opts.iters; ++k) {
    const Vector x_next = y - gy / lip;
    const double t_next = fista_next(t);
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x = x_next;
    t = t_next;
    std::tie(fx, gx) = f.value_and_gradient(x);
    if (!rec.record(x, fx, gx)) break;
    gy = f.gradient(y);
  }
  return rec.finish();
}

struct WolfeParams {
  double c1 = 1e-4;
  double c2 = 0.9;
  std::size_t max_trials = 50;
};

namespace detail {

struct LinePoint {
  double a = 0.0;
  double f = 0.0;
  double d = 0.0;
};

/// Minimiser of the cubic matching values and slopes at p and q; NaN when it
/// does not exist. Exact for quadratics.
inline double cubic_minimizer(const LinePoint& p, const LinePoint& q) {
  const double d1 = p.d + q.d - 3.0 * (p.f - q.f) / (p.a - q.a);
  const double disc = d1 * d1 - p.d * q.d;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = (q.a > p.a ? 1.0 : -1.0) * std::sqrt(disc);
  const double den = q.d - p.d + 2.0 * d2;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return q.a - (q.a - p.a) * (q.d + d2 - d1) / den;
}

/// Strong-Wolfe line search: bracketing phase followed by a zoom with
/// safeguarded cubic interpolation. Returns the accepted step, or nullopt
/// after `max_trials` function evaluations.
inline std::optional<double> wolfe_search(const Objective& f, const Vector& x, double fx,
                                          const Vector& g, const Vector& dir,
                                          const WolfeParams& wp, double& f_new, Vector& g_new) {
  const double d0 = g.dot(dir);
  std::size_t trials = 0;
  Vector last_grad;
  auto eval = [&](double a) {
    ++trials;
    auto [fa, ga] = f.value_and_gradient(x + a * dir);
    LinePoint p{a, fa, ga.dot(dir)};
    last_grad = std::move(ga);
    return p;
  };
  auto armijo_fails = [&](const LinePoint& p) {
    return !std::isfinite(p.f) || p.f > fx + wp.c1 * p.a * d0;
  };
  auto curvature_ok = [&](const LinePoint& p) { return std::abs(p.d) <= -wp.c2 * d0; };
  auto accept = [&](const LinePoint& p) {
    f_new = p.f;
    g_new = last_grad;
    return std::optional<double>(p.a);
  };

  auto zoom = [&](LinePoint lo, LinePoint hi) -> std::optional<double> {
    while (trials < wp.max_trials) {
      const double left = std::min(lo.a, hi.a);
      const double right = std::max(lo.a, hi.a);
      const double width = right - left;
      double a = std::isfinite(hi.f) ? cubic_minimizer(lo, hi) : std::numeric_limits<double>::quiet_NaN();
      if (!std::isfinite(a) || a <= left + 1e-6 * width || a >= right - 1e-6 * width)
        a = 0.5 * (lo.a + hi.a);
      const LinePoint p = eval(a);
      if (armijo_fails(p) || p.f >= lo.f) {
        hi = p;
      } else {
        if (curvature_ok(p)) return accept(p);
        if (p.d * (hi.a - lo.a) >= 0.0) hi = lo;
        lo = p;
      }
    }
    return std::nullopt;
  };

  LinePoint prev{0.0, fx, d0};
  double a = 1.0;
  while (trials < wp.max_trials) {
    const LinePoint p = eval(a);
    if (armijo_fails(p) || (trials > 1 && p.f >= prev.f)) return zoom(prev, p);
    if (curvature_ok(p)) return accept(p);
    if (p.d >= 0.0) return zoom(p, prev);
    double next = cubic_minimizer(prev, p);
    if (!std::isfinite(next) || next <= 1.1 * a) next = 2.0 * a;
    next = std::min(next, 10.0 * a);
    prev = p;
    a = next;
  }
  return std::nullopt;
}

}  // namespace detail

/// Standard inverse-Hessian rank-2 update
///   H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T,  rho = 1 / <s, y>,
/// left unchanged when <s, y> <= 1e-12 |s| |y|.
inline DenseMatrix bfgs_update(const DenseMatrix& h, const Vector& s, const Vector& y) {
  const double sy = s.dot(y);
  if (!(sy > 1e-12 * s.norm() * y.norm())) return h;
  const double rho = 1.0 / sy;
  const Vector hy = h * y;
  const double yhy = y.dot(hy);
  DenseMatrix out = h;
  out.noalias() -= rho * (hy * s.transpose() + s * hy.transpose());
  out.noalias() += (rho * rho * yhy + rho) * (s * s.transpose());
  return 0.5 * (out + out.transpose());
}

struct BfgsOptions {
  WolfeParams wolfe;
  Index max_dim = 4096;
  /// Called with the inverse-Hessian approximation after every iteration.
  std::function<void(const DenseMatrix&)> observer;
};

/// BFGS with a dense inverse-Hessian approximation, H_0 = I. Pairs with
/// <s, y> <= 1e-12 |s| |y| are skipped. A failed line search throws unless
/// the predicted decrease is already below the resolution of f, in which
/// case the iterate is held.
inline RunTrace bfgs(const Objective& f, const Vector& x0, const RunOptions& opts,
                     const BfgsOptions& bo = {}, std::string label = "bfgs") {
  require_size(x0.size(), f.dim(), "bfgs");
  const Index n = f.dim();
  if (n > bo.max_dim)
    throw CapacityError("bfgs: dimension " + std::to_string(n) + " exceeds dense cap " +
                        std::to_string(bo.max_dim));
  detail::Recorder rec(std::move(label), opts, false);
  Vector x = x0;
  auto [fx, g] = f.value_and_gradient(x);
  if (!rec.record(x, fx, g)) return rec.finish();
  DenseMatrix h = DenseMatrix::Identity(n, n);
  for (std::size_t t = 0; t < opts.iters; ++t) {
    if (g.squaredNorm() == 0.0) {
      if (!rec.record(x, fx, g)) break;
      continue;
    }
    Vector dir = -(h * g);
    if (!(g.dot(dir) < 0.0)) {
      h.setIdentity();
      dir = -g;
    }
    double f_new = fx;
    Vector g_new;
    const auto alpha = detail::wolfe_search(f, x, fx, g, dir, bo.wolfe, f_new, g_new);
    if (!alpha && -g.dot(dir) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(fx)) {
      // predicted decrease is below the resolution of f: hold the iterate
      if (!rec.record(x, fx, g)) break;
      continue;
    }
    if (!alpha)
      throw NumericalFailure("bfgs: Wolfe line search failed after " +
                                 std::to_string(bo.wolfe.max_trials) + " trials",
                             t);
    const Vector s = *alpha * dir;
    const Vector y = g_new - g;
    h = bfgs_update(h, s, y);
    if (bo.observer) bo.observer(h);
    x += s;
    fx = f_new;
    g = std::move(g_new);
    if (!rec.record(x, fx, g)) break;
  }
  return rec.finish();
}

struct ReferenceOptimum {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// High-accuracy minimiser by FISTA with step 1/L and gradient-based
/// adaptive restart, until |grad f| <= tol or max_iters; returns the best
/// iterate seen (lowest objective, ties broken by gradient norm).
inline ReferenceOptimum reference_optimum(const Objective& f, const Vector& x0,
                                          double tol = 1e-10, std::size_t max_iters = 50000) {
  require_size(x0.size(), f.dim(), "reference_optimum");
  const double lip = f.smoothness();
  if (!(lip > 0.0)) throw InvalidInput("reference_optimum: objective needs a positive smoothness");
  ReferenceOptimum best;
  best.x = x0;
  auto [fx, gx] = f.value_and_gradient(x0);
  best.value = fx;
  best.grad_norm = gx.norm();
  if (best.grad_norm <= tol) {
    best.converged = true;
    return best;
  }
  Vector x = x0;
  Vector y = x0;
  Vector gy = gx;
  double t = 1.0;
  for (std::size_t k = 1; k <= max_iters; ++k) {
    const Vector x_next = y - gy / lip;
    if (gy.dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x_next;
    } else {
      const double t_next = fista_next(t);
      y = x_next + ((t - 1.0) / t_next) * (x_next - x);
      t = t_next;
    }
    x = x_next;
    auto [v, g] = f.value_and_gradient(x);
    best.iterations = k;
    if (v < best.value || (v == best.value && g.norm() < best.grad_norm)) {
      best.x = x;
      best.value = v;
      best.grad_norm = g.norm();
    }
    if (g.norm() <= tol) {
      best.x = x;
      best.value = v;
      best.grad_norm = g.norm();
      best.converged = true;
      return best;
    }
    gy = f.gradient(y);
  }
  return best;
}

}  // namespace lpgd
