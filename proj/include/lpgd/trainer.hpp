// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpgd/objectives.hpp"
#include "lpgd/parallel.hpp"
#include "lpgd/preconditioners.hpp"

namespace lpgd {

enum class InnerSolver { PlainDescent, Accelerated };
enum class InitPolicy { SafeguardStart, WarmStart };
enum class TauPolicy { SmoothOnly, StronglyConvex };

struct TrainingRow;

struct TrainerConfig {
  std::size_t outer_iterations = 100;
  std::size_t inner_cap = 5000;
  double tolerance = 1e-3;
  InnerSolver inner_solver = InnerSolver::PlainDescent;
  InitPolicy init = InitPolicy::SafeguardStart;
  bool enforce_safeguard = true;
  TauPolicy tau_policy = TauPolicy::SmoothOnly;
  int threads = 1;
  /// Keep g_t at every inner iterate (diagnostics and tests).
  bool record_inner_values = false;
  /// Called after every outer iteration (progress reporting).
  std::function<void(const TrainingRow&)> on_row;

  void validate() const {
    if (outer_iterations < 1) throw InvalidInput("TrainerConfig: outer_iterations must be >= 1");
    if (inner_cap < 1) throw InvalidInput("TrainerConfig: inner_cap must be >= 1");
    if (!(tolerance > 0.0)) throw InvalidInput("TrainerConfig: tolerance must be positive");
  }
};

/// Classical step tau with G_{theta~} = tau I: 1 / L_max, or
/// 2 / (mu_min + L_max) when every objective is strongly convex.
inline double safeguard_tau(std::span<const ObjectivePtr> objectives, TauPolicy policy) {
  if (objectives.empty()) throw InvalidInput("safeguard_tau: empty dataset");
  double l_max = 0.0;
  double mu_min = std::numeric_limits<double>::infinity();
  for (const auto& f : objectives) {
    l_max = std::max(l_max, f->smoothness());
    if (policy == TauPolicy::StronglyConvex) {
      const auto mu = f->strong_convexity();
      if (!mu) throw InvalidInput("safeguard_tau: strongly-convex policy needs every mu_k");
      mu_min = std::min(mu_min, *mu);
    }
  }
  if (!(l_max > 0.0)) throw InvalidInput("safeguard_tau: smoothness constants must be positive");
  return policy == TauPolicy::StronglyConvex ? 2.0 / (mu_min + l_max) : 1.0 / l_max;
}

/// g_t(theta) = (1/N) sum_k f_k(x_k - G_theta grad f_k(x_k)) at a fixed
/// snapshot of iterates.
class GreedySubproblem {
 public:
  GreedySubproblem(std::vector<ObjectivePtr> objectives, std::vector<Vector> iterates,
                   Parametrization par, double tau, int threads = 1)
      : objectives_(std::move(objectives)),
        iterates_(std::move(iterates)),
        par_(par),
        safeguard_(embed_tau(par, tau)),
        tau_(tau),
        threads_(threads) {
    if (objectives_.empty()) throw InvalidInput("GreedySubproblem: empty dataset");
    if (objectives_.size() != iterates_.size())
      throw InvalidInput("GreedySubproblem: objective and iterate counts differ");
    const auto evals = parallel_map<std::pair<double, Vector>>(
        size(), threads_, [&](std::size_t k) {
          require_size(objectives_[k]->dim(), par_.dim(), "GreedySubproblem objective");
          require_size(iterates_[k].size(), par_.dim(), "GreedySubproblem iterate");
          return objectives_[k]->value_and_gradient(iterates_[k]);
        });
    values_.reserve(size());
    grads_.reserve(size());
    smoothness_.reserve(size());
    for (std::size_t k = 0; k < size(); ++k) {
      values_.push_back(evals[k].first);
      grads_.push_back(evals[k].second);
      smoothness_.push_back(objectives_[k]->smoothness());
    }
    lipschitz_ = lipschitz_bound(par_, grads_, smoothness_);
  }

  std::size_t size() const { return objectives_.size(); }
  const Parametrization& parametrization() const { return par_; }
  const std::vector<ObjectivePtr>& objectives() const { return objectives_; }
  const std::vector<Vector>& iterates() const { return iterates_; }
  const std::vector<Vector>& grads() const { return grads_; }
  /// f_k at the snapshot iterates.
  const std::vector<double>& values() const { return values_; }
  double lipschitz() const { return lipschitz_; }
  const ParamVector& safeguard() const { return safeguard_; }
  double tau() const { return tau_; }
  int threads() const { return threads_; }

  /// Mean objective at the snapshot, F(x_t).
  double mean_value() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(size());
  }

  Vector stepped(std::size_t k, const ParamVector& theta) const {
    return iterates_[k] - apply(theta, grads_[k]);
  }

  double eval(const ParamVector& theta) const { return evaluate(theta, false).first; }
  Vector grad(const ParamVector& theta) const { return evaluate(theta, true).second; }

  /// (g_t(theta), grad g_t(theta)); the gradient is
  /// -(1/N) sum_k B_k^T grad f_k(x_k - G_theta grad_k).
  std::pair<double, Vector> eval_and_grad(const ParamVector& theta) const {
    return evaluate(theta, true);
  }

 private:
  std::pair<double, Vector> evaluate(const ParamVector& theta, bool with_grad) const {
    if (!(theta.par == par_)) throw InvalidInput("GreedySubproblem: parametrization mismatch");
    struct Term {
      double value = 0.0;
      Vector grad;
    };
    const auto terms = parallel_map<Term>(size(), threads_, [&](std::size_t k) {
      const Vector x = stepped(k, theta);
      Term term;
      if (with_grad) {
        auto [v, g] = objectives_[k]->value_and_gradient(x);
        term.value = v;
        term.grad = adjoint_apply(par_, grads_[k], g);
      } else {
        term.value = objectives_[k]->value(x);
      }
      return term;
    });
    double value = 0.0;
    Vector grad = Vector::Zero(with_grad ? par_.param_dim() : 0);
    for (const Term& term : terms) {
      value += term.value;
      if (with_grad) grad -= term.grad;
    }
    const double inv_n = 1.0 / static_cast<double>(size());
    return {value * inv_n, grad * inv_n};
  }

  std::vector<ObjectivePtr> objectives_;
  std::vector<Vector> iterates_;
  Parametrization par_;
  ParamVector safeguard_;
  double tau_;
  int threads_;
  std::vector<double> values_;
  std::vector<Vector> grads_;
  std::vector<double> smoothness_;
  double lipschitz_ = 0.0;
};

inline double eval_g(const GreedySubproblem& sub, const ParamVector& theta) {
  return sub.eval(theta);
}
inline Vector grad_g(const GreedySubproblem& sub, const ParamVector& theta) {
  return sub.grad(theta);
}

struct InnerResult {
  ParamVector theta;
  std::size_t iterations = 0;
  /// |grad g(theta)| / |grad g(theta~)| at the returned point.
  double grad_ratio = 0.0;
  double value = 0.0;
  double safeguard_value = 0.0;
  bool converged = false;
  bool fallback = false;
  /// grad g(theta~) = 0 or L_g = 0: theta~ returned without iterating.
  bool stationary = false;
  std::vector<double> history;
};

/// Minimises g_t with constant step 1 / L_g from theta~ (or `warm_start`
/// under the warm-start policy). Stops when
///   |grad g(theta_w)| / |grad g(theta~)| < tolerance   or   w = inner_cap.
/// With the safeguard on, a result worse than g(theta~) is replaced by theta~.
inline InnerResult inner_solve(const GreedySubproblem& sub, const TrainerConfig& config,
                               const ParamVector* warm_start = nullptr) {
  config.validate();
  const ParamVector& tilde = sub.safeguard();
  auto [g_tilde, grad_tilde] = sub.eval_and_grad(tilde);
  if (!std::isfinite(g_tilde) || !all_finite(grad_tilde))
    throw NumericalFailure("inner_solve: non-finite g at the safeguard parameters", 0);

  InnerResult res{tilde, 0, 0.0, 0.0, 0.0, false, false, false, {}};
  res.safeguard_value = g_tilde;
  const double denom = grad_tilde.norm();
  const double lip = sub.lipschitz();
  if (denom == 0.0 || !(lip > 0.0)) {
    res.value = g_tilde;
    res.converged = true;
    res.stationary = true;
    if (config.record_inner_values) res.history.push_back(g_tilde);
    return res;
  }

  const bool warm = config.init == InitPolicy::WarmStart && warm_start != nullptr;
  Vector x = warm ? warm_start->params : tilde.params;
  Vector x_prev = x;
  Vector query = x;
  double momentum = 1.0;
  const double step = 1.0 / lip;

  double value = g_tilde;
  Vector grad = grad_tilde;
  for (std::size_t w = 0;; ++w) {
    if (w > 0 || warm) {
      auto vg = sub.eval_and_grad(ParamVector(sub.parametrization(), query));
      value = vg.first;
      grad = std::move(vg.second);
    }
    if (!std::isfinite(value) || !all_finite(grad))
      throw NumericalFailure("inner_solve: non-finite g", w);
    if (config.record_inner_values) res.history.push_back(value);
    res.iterations = w;
    res.grad_ratio = grad.norm() / denom;
    res.value = value;
    if (res.grad_ratio < config.tolerance) {
      res.converged = true;
      break;
    }
    if (w == config.inner_cap) break;

    if (config.inner_solver == InnerSolver::PlainDescent) {
      query -= step * grad;
    } else {
      x = query - step * grad;
      const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      query = x + ((momentum - 1.0) / next) * (x - x_prev);
      x_prev = x;
      momentum = next;
    }
    if (!all_finite(query)) throw NumericalFailure("inner_solve: non-finite parameters", w + 1);
  }

  res.theta = ParamVector(sub.parametrization(), query);
  if (config.enforce_safeguard && res.value > g_tilde) {
    res.theta = tilde;
    res.value = g_tilde;
    res.grad_ratio = 1.0;
    res.fallback = true;
  }
  return res;
}

/// theta_0 .. theta_{T-1} with the safeguard step they were trained against.
struct PreconditionerSchedule {
  Parametrization par;
  std::vector<ParamVector> thetas;
  double tau = 0.0;
  std::map<std::string, std::string> provenance;

  std::size_t length() const { return thetas.size(); }
};

struct TrainingRow {
  std::size_t t = 0;
  /// F(x_t) = mean_k f_k(x_k^t).
  double mean_value = 0.0;
  std::vector<double> values;
  std::vector<double> grad_norms;
  double grad_ratio = 0.0;
  std::size_t inner_iterations = 0;
  bool fallback = false;
  bool stationary = false;
  /// g_t(theta~) = F(x_t - tau_F grad F(x_t)).
  double safeguard_value = 0.0;
  /// g_t(theta_t) = F(x_{t+1}).
  double learned_value = 0.0;
};

struct TrainingTrace {
  std::vector<TrainingRow> rows;
  /// F and per-point values after the last learned step.
  double final_mean_value = 0.0;
  std::vector<double> final_values;
  std::vector<double> final_grad_norms;

  /// F(x_0), ..., F(x_T).
  std::vector<double> mean_values() const {
    std::vector<double> out;
    out.reserve(rows.size() + 1);
    for (const auto& r : rows) out.push_back(r.mean_value);
    out.push_back(final_mean_value);
    return out;
  }
};

struct TrainResult {
  PreconditionerSchedule schedule;
  TrainingTrace trace;
  std::vector<Vector> final_iterates;
};

/// Greedy training: at each t build g_t from the current iterates, minimise
/// it, and advance every trajectory with the learned preconditioner.
inline TrainResult train(const std::vector<ObjectivePtr>& objectives,
                         const std::vector<Vector>& initial, const Parametrization& par,
                         const TrainerConfig& config) {
  config.validate();
  if (objectives.empty()) throw InvalidInput("train: empty dataset");
  if (objectives.size() != initial.size())
    throw InvalidInput("train: objective and initial-point counts differ");
  const double tau = safeguard_tau(objectives, config.tau_policy);

  TrainResult out{PreconditionerSchedule{par, {}, tau, {}}, {}, initial};
  std::optional<ParamVector> previous;
  for (std::size_t t = 0; t < config.outer_iterations; ++t) {
    GreedySubproblem sub(objectives, out.final_iterates, par, tau, config.threads);
    InnerResult inner = [&] {
      try {
        return inner_solve(sub, config, previous ? &*previous : nullptr);
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string("train: outer iteration ") + std::to_string(t) +
                                   ": " + e.what(),
                               e.iteration());
      }
    }();

    TrainingRow row;
    row.t = t;
    row.mean_value = sub.mean_value();
    row.values = sub.values();
    row.grad_norms.reserve(sub.size());
    for (const auto& g : sub.grads()) row.grad_norms.push_back(g.norm());
    row.grad_ratio = inner.grad_ratio;
    row.inner_iterations = inner.iterations;
    row.fallback = inner.fallback;
    row.stationary = inner.stationary;
    row.safeguard_value = inner.safeguard_value;
    row.learned_value = inner.value;
    if (config.on_row) config.on_row(row);
    out.trace.rows.push_back(std::move(row));

    for (std::size_t k = 0; k < sub.size(); ++k) out.final_iterates[k] = sub.stepped(k, inner.theta);
    previous = inner.theta;
    out.schedule.thetas.push_back(std::move(inner.theta));
  }

  const auto evals = parallel_map<std::pair<double, Vector>>(
      objectives.size(), config.threads,
      [&](std::size_t k) { return objectives[k]->value_and_gradient(out.final_iterates[k]); });
  double sum = 0.0;
  for (const auto& [v, g] : evals) {
    sum += v;
    out.trace.final_values.push_back(v);
    out.trace.final_grad_norms.push_back(g.norm());
  }
  out.trace.final_mean_value = sum / static_cast<double>(objectives.size());
  return out;
}

struct RateReport {
  /// max_k L_k / (2 t N) |x_0 - x*|^2 for t = 0..T (infinite at t = 0).
  std::vector<double> sublinear_bound;
  /// t with F(x_t) - F* above the sublinear bound.
  std::vector<std::size_t> sublinear_violations;
  /// M_i = 1 + sum_{k != i} (f_k(x_k^0) - f_k*) / (f_i(x_i^0) - f_i*);
  /// absent when f_i(x_i^0) = f_i*.
  std::vector<std::optional<double>> per_function_constants;
  /// 1 - mu_min / L_max (stacked mu_F / L_F), when every mu_k is known.
  std::optional<double> linear_factor;
  std::vector<double> linear_bound;
  std::vector<std::size_t> linear_violations;
  /// The alternative factor 1 - L_max / mu_min; it is not a contraction
  /// whenever L_max > mu_min, so it is only reported.
  std::optional<double> displayed_factor;
  bool displayed_factor_contractive = false;
};

/// Convergence-rate diagnostics for a training run. `mean_values` holds
/// F(x_0), ..., F(x_T); `initial_values` and `optimal_values` are f_k(x_k^0)
/// and f_k*; `dist_sq` is |x_0 - x*|^2 over the stacked trajectories.
inline RateReport rate_bounds(std::span<const double> mean_values,
                              std::span<const double> smoothness,
                              std::span<const std::optional<double>> strong_convexity,
                              double dist_sq, std::span<const double> initial_values,
                              std::span<const double> optimal_values, double slack = 1e-12) {
  const std::size_t n_pts = smoothness.size();
  if (n_pts == 0) throw InvalidInput("rate_bounds: empty dataset");
  if (initial_values.size() != n_pts || optimal_values.size() != n_pts)
    throw InvalidInput("rate_bounds: per-function lists differ in length");
  if (!strong_convexity.empty() && strong_convexity.size() != n_pts)
    throw InvalidInput("rate_bounds: strong-convexity list differs in length");

  double f_star = 0.0;
  for (double v : optimal_values) f_star += v;
  f_star /= static_cast<double>(n_pts);
  const double l_max = *std::max_element(smoothness.begin(), smoothness.end());

  RateReport rep;
  for (std::size_t t = 0; t < mean_values.size(); ++t) {
    const double bound = t == 0 ? std::numeric_limits<double>::infinity()
                                : l_max / (2.0 * static_cast<double>(t) * n_pts) * dist_sq;
    rep.sublinear_bound.push_back(bound);
    if (t > 0 && mean_values[t] - f_star > bound + slack) rep.sublinear_violations.push_back(t);
  }

  double total_gap = 0.0;
  for (std::size_t i = 0; i < n_pts; ++i) total_gap += initial_values[i] - optimal_values[i];
  for (std::size_t i = 0; i < n_pts; ++i) {
    const double own = initial_values[i] - optimal_values[i];
    if (own == 0.0)
      rep.per_function_constants.push_back(std::nullopt);
    else
      rep.per_function_constants.push_back(1.0 + (total_gap - own) / own);
  }

  bool all_mu = !strong_convexity.empty();
  double mu_min = std::numeric_limits<double>::infinity();
  for (const auto& mu : strong_convexity) {
    if (!mu) {
      all_mu = false;
      break;
    }
    mu_min = std::min(mu_min, *mu);
  }
  if (all_mu && mu_min > 0.0) {
    rep.linear_factor = 1.0 - mu_min / l_max;
    rep.displayed_factor = 1.0 - l_max / mu_min;
    rep.displayed_factor_contractive = *rep.displayed_factor >= 0.0 && *rep.displayed_factor < 1.0;
    if (!mean_values.empty()) {
      const double gap0 = mean_values[0] - f_star;
      double factor = 1.0;
      for (std::size_t t = 0; t < mean_values.size(); ++t) {
        const double bound = factor * gap0;
        rep.linear_bound.push_back(bound);
        if (mean_values[t] - f_star > bound + slack) rep.linear_violations.push_back(t);
        factor *= *rep.linear_factor;
      }
    }
  }
  return rep;
}

}  // namespace lpgd
