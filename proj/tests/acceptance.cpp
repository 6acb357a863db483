// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, each with its own
// tolerance and runtime budget. Exit status is nonzero if any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lpgd/closed_form.hpp"
#include "lpgd/deploy.hpp"
#include "lpgd/harness/experiment.hpp"
#include "lpgd/trainer.hpp"

namespace {

using namespace lpgd;
namespace fs = std::filesystem;
using harness::format_double;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string data_file(const std::string& name) { return std::string(LPGD_DATA_DIR) + "/" + name; }

const std::string kImages = data_file("mnist-subset-images-idx3-ubyte");
const std::string kLabels = data_file("mnist-subset-labels-idx1-ubyte");

struct LsSet {
  std::vector<std::shared_ptr<const LeastSquaresObjective>> problems;
  std::vector<ObjectivePtr> objectives;
  std::vector<Vector> x0;
  std::vector<double> f_star;
};

LsSet random_ls(Rng& rng, std::size_t n_pts, Index m, Index n) {
  LsSet s;
  for (std::size_t k = 0; k < n_pts; ++k) {
    const DenseMatrix a = rng.normal_matrix(m, n) / std::sqrt(static_cast<double>(m));
    const Vector y = rng.normal_vector(m);
    auto p = LeastSquaresObjective::dense(a, y);
    s.f_star.push_back(p->value(a.colPivHouseholderQr().solve(y)));
    s.problems.push_back(p);
    s.objectives.push_back(p);
    s.x0.push_back(rng.normal_vector(n));
  }
  return s;
}

Vector step(const ParamVector& theta, const Objective& f, const Vector& x) {
  return x - apply(theta, f.gradient(x));
}

Outcome one_step_diagonal() {
  Rng rng(1001);
  double worst = 0.0;
  int tried = 0;
  while (tried < 50) {
    LsSet s = random_ls(rng, 1, 20, 10);
    if (Eigen::JacobiSVD<DenseMatrix>(s.problems[0]->op().dense()).singularValues().minCoeff() < 1e-3)
      continue;
    if (s.problems[0]->gradient(s.x0[0]).cwiseAbs().minCoeff() < 1e-8) continue;
    ++tried;
    const auto par = Parametrization::diagonal(10);
    const closed_form::LsSnapshot snap(s.problems, s.x0);
    const ParamVector theta(par, closed_form::diagonal_ls(snap));
    const double f0 = s.problems[0]->value(s.x0[0]) - s.f_star[0];
    const double f1 = s.problems[0]->value(step(theta, *s.problems[0], s.x0[0])) - s.f_star[0];
    worst = std::max(worst, f1 / f0);
  }
  return {worst <= 1e-10, "worst relative gap " + format_double(worst) + " (<= 1e-10)"};
}

Outcome full_matrix_instant() {
  Rng rng(1002);
  LsSet s = random_ls(rng, 5, 10, 10);
  DenseMatrix g(10, 5);
  for (Index k = 0; k < 5; ++k) g.col(k) = s.problems[k]->gradient(s.x0[k]);
  const Index rank = Eigen::FullPivLU<DenseMatrix>(g).rank();
  const closed_form::LsSnapshot snap(s.problems, s.x0);
  const DenseMatrix p = closed_form::full_ls(snap);
  const auto par = Parametrization::full(10);
  const ParamVector theta(par, Eigen::Map<const Vector>(p.data(), p.size()));
  double worst = 0.0;
  for (std::size_t k = 0; k < 5; ++k)
    worst = std::max(worst, s.problems[k]->value(step(theta, *s.problems[k], s.x0[k])) - s.f_star[k]);
  return {rank == 5 && worst <= 1e-8,
          "gradient rank " + std::to_string(rank) + ", worst gap " + format_double(worst) +
              " (<= 1e-8)"};
}

Outcome closed_form_agreement() {
  Rng rng(1003);
  LsSet s = random_ls(rng, 6, 12, 8);
  const closed_form::LsSnapshot snap(s.problems, s.x0);
  const double tau = safeguard_tau(s.objectives, TauPolicy::SmoothOnly);
  double worst_gap = 0.0;
  double worst_stat = 0.0;
  std::string scale;
  for (const auto& par : {Parametrization::scalar(8), Parametrization::diagonal(8),
                          Parametrization::full(8)}) {
    Vector exact;
    switch (par.kind()) {
      case ParamKind::Scalar: exact = Vector::Constant(1, closed_form::scalar_ls(snap)); break;
      case ParamKind::Diagonal: exact = closed_form::diagonal_ls(snap); break;
      default: {
        const DenseMatrix p = closed_form::full_ls(snap);
        exact = Eigen::Map<const Vector>(p.data(), p.size());
      }
    }
    const GreedySubproblem sub(s.objectives, s.x0, par, tau);
    if (scale.empty()) scale = format_double(eval_g(sub, sub.safeguard()));
    TrainerConfig cfg;
    cfg.inner_solver = InnerSolver::Accelerated;
    cfg.tolerance = 1e-10;
    cfg.inner_cap = 1000000;
    const InnerResult res = inner_solve(sub, cfg);
    const double best = eval_g(sub, ParamVector(par, exact));
    worst_gap = std::max(worst_gap, std::abs(res.value - best));
    const double g0 = grad_g(sub, ParamVector::zeros(par)).norm();
    worst_stat = std::max(worst_stat, grad_g(sub, ParamVector(par, exact)).norm() / g0);
  }
  return {worst_gap <= 1e-6 && worst_stat <= 1e-8,
          "g(safeguard) " + scale + ", worst |g_iter - g_closed| " + format_double(worst_gap) +
              " (<= 1e-6), worst closed-form |grad|/|grad(0)| " + format_double(worst_stat) +
              " (<= 1e-8)"};
}

double fd_rel_error(const GreedySubproblem& sub, const Vector& theta) {
  const Parametrization& par = sub.parametrization();
  const double h = 1e-6 * (theta.cwiseAbs().maxCoeff() + 1.0);
  Vector fd(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    Vector up = theta;
    Vector down = theta;
    up[i] += h;
    down[i] -= h;
    fd[i] = (eval_g(sub, ParamVector(par, up)) - eval_g(sub, ParamVector(par, down))) / (2 * h);
  }
  return (grad_g(sub, ParamVector(par, theta)) - fd).norm() / fd.norm();
}

std::vector<Parametrization> image_params(Index m) {
  const Index n = m * m;
  return {Parametrization::scalar(n), Parametrization::diagonal(n), Parametrization::full(n),
          Parametrization::conv(3, 3, m, m)};
}

Outcome gradient_correctness() {
  Rng rng(1004);
  const Index m = 5;
  LsSet ls = random_ls(rng, 3, 30, m * m);
  auto blur = std::make_shared<GaussianBlurOperator>(m, m, 2.0);
  std::vector<ObjectivePtr> tv;
  std::vector<Vector> tv_x0;
  for (int k = 0; k < 3; ++k) {
    tv.push_back(std::make_shared<HuberTVObjective>(blur, rng.uniform_vector(m * m, 0, 1), 0.05, 0.01));
    tv_x0.push_back(rng.uniform_vector(m * m, 0, 1));
  }
  double worst = 0.0;
  std::size_t checks = 0;
  for (const auto& par : image_params(m))
    for (const auto* snap : {&ls.objectives, &tv}) {
      const auto& x0 = snap == &tv ? tv_x0 : ls.x0;
      const GreedySubproblem sub(*snap, x0, par, 0.2);
      for (int trial = 0; trial < 20; ++trial) {
        worst = std::max(worst, fd_rel_error(sub, 0.3 * rng.normal_vector(par.param_dim())));
        ++checks;
      }
    }
  return {worst < 1e-5, std::to_string(checks) + " points, worst relative error " +
                            format_double(worst) + " (< 1e-5)"};
}

Outcome lipschitz_validity() {
  Rng rng(1005);
  const Index m = 5;
  LsSet ls = random_ls(rng, 4, 30, m * m);
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  for (const auto& par : image_params(m)) {
    const GreedySubproblem sub(ls.objectives, ls.x0, par, 0.2);
    for (int trial = 0; trial < 100; ++trial) {
      const Vector a = rng.normal_vector(par.param_dim());
      const Vector b = a + std::pow(10.0, rng.uniform(-3, 1)) * rng.normal_vector(par.param_dim());
      const double lhs = (grad_g(sub, ParamVector(par, a)) - grad_g(sub, ParamVector(par, b))).norm();
      const double rhs = sub.lipschitz() * (a - b).norm();
      worst = std::max(worst, lhs / rhs);
      violations += lhs > rhs + 1e-12;
    }
  }
  return {violations == 0, "400 pairs, " + std::to_string(violations) +
                               " violations, max |dgrad| / (L |dtheta|) = " + format_double(worst)};
}

std::vector<harness::LabeledImage> ones(std::size_t count, std::uint64_t seed) {
  const auto data = harness::load_idx(kImages, kLabels);
  std::vector<int> labels;
  for (const auto& d : data) labels.push_back(d.label);
  const auto split = harness::select_splits(labels, {count, 0, 0}, seed);
  std::vector<harness::LabeledImage> out;
  for (auto i : split.train_ones) out.push_back(data[i]);
  return out;
}

Outcome safeguarded_training() {
  const auto imgs = ones(32, 0);
  TrainerConfig cfg;
  cfg.outer_iterations = 30;
  cfg.inner_solver = InnerSolver::Accelerated;
  cfg.inner_cap = 200;

  auto blur = std::make_shared<const GaussianBlurOperator>(28, 28, 2.0);
  const HuberTvNorms norms = HuberTvNorms::estimate(*blur);
  std::vector<ObjectivePtr> tv;
  std::vector<Vector> tv_x0;
  for (std::size_t k = 0; k < imgs.size(); ++k) {
    const auto obs = harness::synthesize_observation(imgs[k].image, *blur, 0.04,
                                                     harness::noise_seed(0, k));
    tv.push_back(std::make_shared<HuberTVObjective>(blur, obs.y.data(), 1e-4, 0.01, norms));
    tv_x0.push_back(obs.y.data());
  }
  const auto res = train(tv, tv_x0, Parametrization::conv(7, 7, 28, 28), cfg);
  const auto f = res.trace.mean_values();
  std::size_t chain_violations = 0;
  std::size_t fallbacks = 0;
  for (std::size_t t = 0; t < res.trace.rows.size(); ++t) {
    const auto& row = res.trace.rows[t];
    chain_violations += !(f[t + 1] <= row.safeguard_value + 1e-12 && row.safeguard_value <= f[t] + 1e-12);
    fallbacks += row.fallback;
  }

  const Index m = 8;
  auto small = std::make_shared<const GaussianBlurOperator>(m, m, 2.0);
  const DenseMatrix a = small->dense();
  std::vector<ObjectivePtr> ls;
  std::vector<Vector> ls_x0;
  std::vector<double> lk;
  std::vector<double> f0;
  std::vector<double> fs;
  double dist = 0.0;
  for (std::size_t k = 0; k < imgs.size(); ++k) {
    const Image truth = harness::downscale(imgs[k].image, m, m);
    const auto obs = harness::synthesize_observation(truth, *small, 0.04, harness::noise_seed(0, k));
    auto p = LeastSquaresObjective::dense(a, obs.y.data());
    const Vector x_star = pinv_solve(a.transpose() * a, a.transpose() * obs.y.data());
    ls.push_back(p);
    ls_x0.push_back(obs.y.data());
    lk.push_back(p->smoothness());
    f0.push_back(p->value(obs.y.data()));
    fs.push_back(p->value(x_star));
    dist += (obs.y.data() - x_star).squaredNorm();
  }
  const auto ls_res = train(ls, ls_x0, Parametrization::conv(7, 7, m, m), cfg);
  const auto lf = ls_res.trace.mean_values();
  const RateReport rep = rate_bounds(lf, lk, {}, dist, f0, fs);
  return {chain_violations == 0 && rep.sublinear_violations.empty(),
          "Huber-TV chain violations " + std::to_string(chain_violations) + "/30 (" +
              std::to_string(fallbacks) + " fallbacks, F " + format_double(f.front()) + " -> " +
              format_double(f.back()) + "); least-squares sublinear violations " +
              std::to_string(rep.sublinear_violations.size()) + "/30"};
}

Outcome smoothness_bound() {
  const GaussianBlurOperator blur(28, 28, 2.0);
  const HuberTvNorms norms = HuberTvNorms::estimate(blur);
  const double alpha = 1e-4;
  const double eps = 0.01;
  const double l = norms.blur_norm_sq + alpha * norms.diff_norm_sq / eps;
  return {l > 1.0 && l <= 1.08, "|A|^2 = " + format_double(norms.blur_norm_sq) + ", |D|^2 = " +
                                    format_double(norms.diff_norm_sq) + ", L = " +
                                    format_double(l) + " (want (1.0, 1.08])"};
}

double golden_section(const std::function<double(double)>& phi, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - r * (hi - lo);
  double d = lo + r * (hi - lo);
  double fc = phi(c);
  double fd = phi(d);
  for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - r * (hi - lo);
      fc = phi(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + r * (hi - lo);
      fd = phi(d);
    }
  }
  return 0.5 * (lo + hi);
}

Outcome scalar_line_search() {
  Rng rng(1008);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    LsSet s = random_ls(rng, 1, 15, 8);
    const auto& p = *s.problems[0];
    const Vector g = p.gradient(s.x0[0]);
    const double lam_min =
        Eigen::SelfAdjointEigenSolver<DenseMatrix>(p.op().gram()).eigenvalues().minCoeff();
    const double oracle = golden_section(
        [&](double t) { return p.value(s.x0[0] - t * g); }, 0.0, 2.0 / lam_min);
    const double closed = closed_form::scalar_ls(closed_form::LsSnapshot(s.problems, s.x0));
    worst = std::max(worst, std::abs(closed - oracle) / std::max(1.0, std::abs(oracle)));
  }
  return {worst <= 1e-6, "worst relative step difference " + format_double(worst) + " (<= 1e-6)"};
}

Outcome noise_calibration() {
  const auto imgs = ones(1000, 0);
  const GaussianBlurOperator blur(28, 28, 2.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < imgs.size(); ++k)
    sum += harness::synthesize_observation(imgs[k].image, blur, 0.04, harness::noise_seed(0, k))
               .relative_noise;
  const double mean = sum / static_cast<double>(imgs.size());
  return {mean >= 0.035 && mean <= 0.045,
          "mean relative noise over 1000 observations " + format_double(mean) +
              " (want [0.035, 0.045])"};
}

std::map<std::string, double> gaps_at(const fs::path& csv, std::size_t t) {
  std::ifstream f(csv);
  std::string line;
  std::getline(f, line);
  std::map<std::string, double> out;
  while (std::getline(f, line)) {
    const auto fields = harness::split_list(line);
    if (fields.size() == 7 && fields[1] == std::to_string(t))
      out[fields[0]] = fields[2] == harness::kDivergedMarker
                           ? std::numeric_limits<double>::infinity()
                           : harness::parse_double(fields[2], "mean_gap");
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lpgd_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

Outcome benchmark_ordering() {
  harness::ExperimentConfig c;
  c.name = "desk";
  c.images_path = kImages;
  c.labels_path = kLabels;
  c.sizes = {100, 100, 100};
  c.trainer.outer_iterations = 50;
  c.kernel_rows = 13;
  c.kernel_cols = 13;
  c.parametrizations = {"conv", "diagonal"};
  c.trainer.inner_solver = InnerSolver::Accelerated;
  c.trainer.inner_cap = 200;
  c.eval_iterations = 50;
  c.baselines = {"gd_fixed"};
  c.dump_iterations = {};
  c.out = scratch("desk").string();
  harness::run_experiment(c);
  const auto g = gaps_at(fs::path(c.out) / "trace_test_ones.csv", 50);
  fs::remove_all(c.out);
  const double conv = g.at("learned_conv");
  const double diag = g.at("learned_diagonal");
  const double gd = g.at("gd_fixed");
  return {conv < gd && conv < diag, "t = 50 test ones mean gap: conv " + format_double(conv) +
                                        ", diagonal " + format_double(diag) + ", gd_fixed " +
                                        format_double(gd)};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  harness::ExperimentConfig c;
  c.name = "determinism";
  c.images_path = kImages;
  c.labels_path = kLabels;
  c.sizes = {16, 8, 8};
  c.image_size = 14;
  c.trainer.outer_iterations = 8;
  c.kernel_rows = 5;
  c.kernel_cols = 5;
  c.parametrizations = {"conv", "diagonal"};
  c.trainer.inner_cap = 100;
  c.eval_iterations = 20;
  c.seed = 11;
  c.threads = 1;
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  c.out = a.string();
  harness::run_experiment(c);
  c.out = b.string();
  harness::run_experiment(c);
  std::size_t same = 0;
  std::size_t total = 0;
  for (const char* f : {"trace_train.csv", "trace_test_ones.csv", "trace_test_others.csv"}) {
    ++total;
    const std::string x = slurp(a / f);
    same += !x.empty() && x == slurp(b / f);
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                             " CSVs byte-identical across two runs"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  Outcome (*run)();
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "one-step diagonal convergence", 5, one_step_diagonal},
      {2, "full-matrix instant convergence", 5, full_matrix_instant},
      {3, "closed form vs iterative agreement", 30, closed_form_agreement},
      {4, "subproblem gradient vs finite differences", 60, gradient_correctness},
      {5, "subproblem Lipschitz bound", 30, lipschitz_validity},
      {6, "safeguarded training", 300, safeguarded_training},
      {7, "benchmark smoothness bound", 10, smoothness_bound},
      {8, "scalar closed form vs exact line search", 5, scalar_line_search},
      {9, "noise calibration", 30, noise_calibration},
      {10, "desk-scale benchmark ordering", 900, benchmark_ordering},
      {11, "determinism", 600, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs <= c.budget_seconds;
    const bool pass = out.pass && in_budget;
    failures += !pass;
    char timing[96];
    std::snprintf(timing, sizeof(timing), "%.2f s of %.0f s", secs, c.budget_seconds);
    std::printf("%s criterion %d: %s: %s; %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), timing, in_budget ? "" : " (over budget)");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
