// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lpgd/deploy.hpp"
#include "lpgd/harness/config.hpp"
#include "lpgd/harness/dataset.hpp"
#include "lpgd/harness/idx.hpp"
#include "lpgd/harness/observation.hpp"
#include "lpgd/parallel.hpp"
#include "lpgd/schedule_io.hpp"
#include "lpgd/trainer.hpp"
#include "lpgd/version.hpp"

namespace lpgd::harness {

namespace fs = std::filesystem;

/// One deblurring problem built from a dataset image.
struct Instance {
  std::size_t dataset_index = 0;
  Image truth;
  Image observation;
  double relative_noise = 0.0;
  std::shared_ptr<const HuberTVObjective> objective;
  Vector x0;
  ReferenceOptimum reference;
};

struct Split {
  std::string name;
  std::vector<Instance> items;

  std::vector<ObjectivePtr> objectives() const {
    std::vector<ObjectivePtr> out;
    for (const auto& it : items) out.push_back(it.objective);
    return out;
  }
  std::vector<Vector> initial_points() const {
    std::vector<Vector> out;
    for (const auto& it : items) out.push_back(it.x0);
    return out;
  }
};

struct ExperimentData {
  std::shared_ptr<const GaussianBlurOperator> blur;
  HuberTvNorms norms;
  SplitIndices indices;
  Split train{"train", {}};
  Split test_ones{"test_ones", {}};
  Split test_others{"test_others", {}};

  double smoothness(const ExperimentConfig& c) const {
    return norms.blur_norm_sq + c.alpha * norms.diff_norm_sq / c.epsilon;
  }
};

using Log = std::function<void(const std::string&)>;

inline Log silent_log() {
  return [](const std::string&) {};
}

inline Log stderr_log() {
  return [](const std::string& s) { std::cerr << s << std::endl; };
}

inline std::uint64_t noise_seed(std::uint64_t master, std::size_t dataset_index) {
  return derive_seed(derive_seed(master, 0x6e6f697365), dataset_index);
}

/// Loads the dataset, selects splits, synthesizes observations and (when
/// asked) computes reference optima for the requested splits.
inline ExperimentData prepare_data(const ExperimentConfig& c, bool want_train, bool want_test,
                                   const Log& log = silent_log()) {
  c.validate();
  const auto dataset = load_idx(c.images_path, c.labels_path);
  if (dataset.empty()) throw InvalidInput("dataset is empty");
  std::vector<int> labels;
  for (const auto& d : dataset) labels.push_back(d.label);

  ExperimentData data;
  data.indices = select_splits(labels, c.sizes, c.seed);

  const Index m1 = c.image_size ? c.image_size : dataset.front().image.rows();
  const Index m2 = c.image_size ? c.image_size : dataset.front().image.cols();
  data.blur = std::make_shared<const GaussianBlurOperator>(m1, m2, c.blur_sigma);
  data.norms = HuberTvNorms::estimate(*data.blur);
  log("blur " + std::to_string(m1) + "x" + std::to_string(m2) + ": |A|^2 = " +
      format_double(data.norms.blur_norm_sq) + ", |D|^2 = " +
      format_double(data.norms.diff_norm_sq) + ", L = " + format_double(data.smoothness(c)));

  auto build = [&](Split& split, const std::vector<std::size_t>& idx) {
    split.items = parallel_map<Instance>(idx.size(), c.threads, [&](std::size_t i) {
      Instance inst;
      inst.dataset_index = idx[i];
      const Image& raw = dataset[idx[i]].image;
      if (raw.rows() != dataset.front().image.rows() || raw.cols() != dataset.front().image.cols())
        throw InvalidInput("dataset images differ in size");
      inst.truth = downscale(raw, m1, m2);
      Observation obs =
          synthesize_observation(inst.truth, *data.blur, c.noise_level, noise_seed(c.seed, idx[i]));
      inst.observation = std::move(obs.y);
      inst.relative_noise = obs.relative_noise;
      inst.objective = std::make_shared<const HuberTVObjective>(
          data.blur, inst.observation.data(), c.alpha, c.epsilon, data.norms);
      inst.x0 = c.initial_point == InitialPoint::Observation ? inst.observation.data()
                                                             : Vector::Zero(m1 * m2);
      inst.reference = reference_optimum(*inst.objective, inst.x0, c.reference_tolerance,
                                         c.reference_max_iterations);
      return inst;
    });
    std::size_t converged = 0;
    double worst = 0.0;
    for (const auto& it : split.items) {
      converged += it.reference.converged;
      worst = std::max(worst, it.reference.grad_norm);
    }
    log(split.name + ": " + std::to_string(split.items.size()) + " problems, reference optima " +
        std::to_string(converged) + " converged, worst |grad| " + format_double(worst));
  };
  if (want_train) build(data.train, data.indices.train_ones);
  if (want_test) {
    build(data.test_ones, data.indices.test_ones);
    build(data.test_others, data.indices.test_others);
  }
  return data;
}

inline Parametrization make_parametrization(const std::string& name, const ExperimentConfig& c,
                                            Index m1, Index m2) {
  switch (param_kind_from_string(name)) {
    case ParamKind::Scalar: return Parametrization::scalar(m1 * m2);
    case ParamKind::Diagonal: return Parametrization::diagonal(m1 * m2);
    case ParamKind::FullMatrix: return Parametrization::full(m1 * m2);
    case ParamKind::Conv: return Parametrization::conv(c.kernel_rows, c.kernel_cols, m1, m2);
  }
  throw InvalidInput("unsupported parametrization '" + name + "'");
}

inline std::string learned_label(const Parametrization& par) {
  return "learned_" + std::string(par.name());
}

/// Per-run curves reduced to what the CSVs report.
struct Curve {
  std::vector<double> gaps;
  std::vector<double> grad_norms;
  bool diverged = false;
  bool failed = false;
};

inline Curve curve_of(const RunTrace& r) {
  return {r.gaps, r.grad_norms, r.diverged, r.failed};
}

struct CsvRow {
  std::string method;
  std::size_t t = 0;
  std::string mean_gap;
  std::string median_gap;
  std::string mean_grad_norm;
  std::size_t diverged_runs = 0;
  std::size_t failed_runs = 0;
};

inline constexpr const char* kTraceHeader =
    "method,t,mean_gap,median_gap,mean_grad_norm,diverged_runs,failed_runs";
inline constexpr const char* kDivergedMarker = "diverged";

/// Rows t = 0..iters. A diverged run counts as +infinity from the step it
/// blew up; a run stopped by a numerical failure holds its last iterate.
/// Any infinite statistic is written as the divergence marker.
inline std::vector<CsvRow> aggregate(const std::string& method, const std::vector<Curve>& runs,
                                     std::size_t iters) {
  std::vector<CsvRow> rows;
  const double inf = std::numeric_limits<double>::infinity();
  auto text = [&](double v) { return std::isfinite(v) ? format_double(v) : std::string(kDivergedMarker); };
  for (std::size_t t = 0; t <= iters; ++t) {
    CsvRow row{method, t, "", "", "", 0, 0};
    std::vector<double> gaps;
    double gap_sum = 0.0;
    double norm_sum = 0.0;
    for (const auto& c : runs) {
      double gap;
      double norm;
      if (t < c.gaps.size()) {
        gap = c.gaps[t];
        norm = c.grad_norms[t];
      } else if (c.diverged || c.gaps.empty()) {
        gap = inf;
        norm = inf;
        ++row.diverged_runs;
      } else {
        gap = c.gaps.back();
        norm = c.grad_norms.back();
        ++row.failed_runs;
      }
      gaps.push_back(gap);
      gap_sum += gap;
      norm_sum += norm;
    }
    const double n = static_cast<double>(runs.size());
    std::sort(gaps.begin(), gaps.end());
    const std::size_t mid = gaps.size() / 2;
    const double median = gaps.empty()         ? 0.0
                          : gaps.size() % 2    ? gaps[mid]
                                               : 0.5 * (gaps[mid - 1] + gaps[mid]);
    row.mean_gap = text(gap_sum / n);
    row.median_gap = text(median);
    row.mean_grad_norm = text(norm_sum / n);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string csv_text(const std::vector<CsvRow>& rows) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : rows)
    out += r.method + "," + std::to_string(r.t) + "," + r.mean_gap + "," + r.median_gap + "," +
           r.mean_grad_norm + "," + std::to_string(r.diverged_runs) + "," +
           std::to_string(r.failed_runs) + "\n";
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

/// 8-bit binary PGM, intensities rescaled affinely from [min, max] to
/// [0, 255] (constant images map to 0).
inline void write_pgm(const fs::path& path, const Image& img) {
  const double lo = img.size() ? img.data().minCoeff() : 0.0;
  const double hi = img.size() ? img.data().maxCoeff() : 0.0;
  std::string bytes = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) +
                      "\n255\n";
  for (Index i = 0; i < img.rows(); ++i)
    for (Index j = 0; j < img.cols(); ++j) {
      const double v = hi > lo ? (img(i, j) - lo) / (hi - lo) : 0.0;
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
    }
  write_text(path, bytes);
}

/// A method's runs over one split.
struct MethodRuns {
  std::string method;
  std::vector<RunTrace> runs;
};

/// Runs `method` on every instance; a NumericalFailure at step t is
/// replayed for t steps and flagged as a failed run.
template <typename Runner>
MethodRuns run_method(const std::string& method, const Split& split, const ExperimentConfig& c,
                      Runner&& runner) {
  MethodRuns out{method, {}};
  out.runs = parallel_map<RunTrace>(split.items.size(), c.threads, [&](std::size_t k) {
    const Instance& inst = split.items[k];
    RunOptions opts;
    opts.iters = c.eval_iterations;
    opts.f_star = inst.reference.value;
    if (k == 0) opts.snapshot_at = c.dump_iterations;
    try {
      return runner(inst, opts);
    } catch (const NumericalFailure& e) {
      opts.iters = e.iteration();
      RunTrace partial = runner(inst, opts);
      partial.failed = true;
      partial.failure = e.what();
      return partial;
    }
  });
  return out;
}

inline MethodRuns run_baseline(const std::string& name, const Split& split,
                               const ExperimentConfig& c, double lip) {
  if (name == "gd_fixed")
    return run_method(name, split, c, [&](const Instance& i, const RunOptions& o) {
      return gd_fixed(*i.objective, i.x0, 1.0 / lip, o);
    });
  if (name == "backtracking")
    return run_method(name, split, c, [&](const Instance& i, const RunOptions& o) {
      return backtracking_gd(*i.objective, i.x0, o);
    });
  if (name == "fista")
    return run_method(name, split, c, [&](const Instance& i, const RunOptions& o) {
      return fista(*i.objective, i.x0, o);
    });
  if (name == "bfgs")
    return run_method(name, split, c, [&](const Instance& i, const RunOptions& o) {
      return bfgs(*i.objective, i.x0, o);
    });
  throw InvalidInput("unknown baseline '" + name + "'");
}

inline MethodRuns run_learned(const PreconditionerSchedule& schedule, const Split& split,
                              const ExperimentConfig& c) {
  return run_method(learned_label(schedule.par), split, c,
                    [&](const Instance& i, const RunOptions& o) {
                      return run_schedule(*i.objective, i.x0, schedule, c.policy, o,
                                          learned_label(schedule.par));
                    });
}

/// Curves of a training run: row t holds f_k(x_k^t) - f_k* for t = 0..T.
inline std::vector<Curve> training_curves(const TrainResult& res, const Split& train) {
  std::vector<Curve> curves(train.items.size());
  for (std::size_t k = 0; k < train.items.size(); ++k) {
    const double fstar = train.items[k].reference.value;
    for (const auto& row : res.trace.rows) {
      curves[k].gaps.push_back(row.values[k] - fstar);
      curves[k].grad_norms.push_back(row.grad_norms[k]);
    }
    curves[k].gaps.push_back(res.trace.final_values[k] - fstar);
    curves[k].grad_norms.push_back(res.trace.final_grad_norms[k]);
  }
  return curves;
}

struct StageSelection {
  bool train = true;
  bool evaluate = true;
  bool baselines = true;
  /// Schedules to evaluate in addition to (or instead of) trained ones.
  std::vector<std::string> schedule_files;
};

struct ExperimentResult {
  fs::path directory;
  std::vector<PreconditionerSchedule> schedules;
  std::vector<TrainResult> training;
};

/// Writes the output into a sibling staging directory and moves it into
/// place at the end; an existing output directory is replaced only if it
/// holds a manifest from a previous run.
class ArtifactDir {
 public:
  explicit ArtifactDir(fs::path target) : target_(std::move(target)) {
    if (target_.empty()) throw InvalidInput("output directory must be set");
    if (fs::exists(target_) && !fs::is_empty(target_) && !fs::exists(target_ / "manifest.txt"))
      throw Error("refusing to replace '" + target_.string() +
                  "': it exists and is not an artifact directory");
    staging_ = target_;
    staging_ += ".partial";
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~ArtifactDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  ArtifactDir(const ArtifactDir&) = delete;
  ArtifactDir& operator=(const ArtifactDir&) = delete;

  const fs::path& path() const { return staging_; }

  void commit() {
    fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

inline std::string noise_summary(const Split& s) {
  if (s.items.empty()) return "none";
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& it : s.items) {
    sum += it.relative_noise;
    lo = std::min(lo, it.relative_noise);
    hi = std::max(hi, it.relative_noise);
  }
  return "mean " + format_double(sum / static_cast<double>(s.items.size())) + " min " +
         format_double(lo) + " max " + format_double(hi);
}

inline std::string index_list(const std::vector<std::size_t>& idx) {
  std::string out;
  for (std::size_t i = 0; i < idx.size(); ++i) out += (i ? "," : "") + std::to_string(idx[i]);
  return out;
}

/// Trains, evaluates and writes the artifact directory `c.out`:
/// schedule_<kind>.lpgd, trace_*.csv, dumps/*.pgm and manifest.txt.
inline ExperimentResult run_experiment(ExperimentConfig c, const StageSelection& stages = {},
                                       const Log& log = silent_log()) {
  c.trainer.threads = c.threads;
  c.validate();
  c.trainer.on_row = [&log](const TrainingRow& r) {
    log("  t = " + std::to_string(r.t) + "  F = " + format_double(r.mean_value) + "  inner " +
        std::to_string(r.inner_iterations) + "  ratio " + format_double(r.grad_ratio) +
        (r.fallback ? "  fallback" : ""));
  };
  ArtifactDir dir(c.out);
  const bool need_test = stages.evaluate || stages.baselines;
  ExperimentData data = prepare_data(c, stages.train, need_test, log);
  const Index m1 = data.blur->image_rows();
  const Index m2 = data.blur->image_cols();
  const double lip = data.smoothness(c);

  ExperimentResult result;
  std::vector<CsvRow> train_rows;
  if (stages.train) {
    for (const auto& name : c.parametrizations) {
      const Parametrization par = make_parametrization(name, c, m1, m2);
      log("training " + learned_label(par) + " (T = " +
          std::to_string(c.trainer.outer_iterations) + ", " + std::to_string(par.param_dim()) +
          " parameters)");
      TrainResult res = train(data.train.objectives(), data.train.initial_points(), par, c.trainer);
      for (const auto& f : config_fields()) res.schedule.provenance[f.key] = f.get(c);
      res.schedule.provenance["library_version"] = kVersion;
      schedule_io::write((dir.path() / ("schedule_" + std::string(par.name()) + ".lpgd")).string(),
                         res.schedule);
      auto rows = aggregate(learned_label(par), training_curves(res, data.train),
                            c.trainer.outer_iterations);
      train_rows.insert(train_rows.end(), rows.begin(), rows.end());
      std::size_t fallbacks = 0;
      for (const auto& r : res.trace.rows) fallbacks += r.fallback;
      log("  final train mean value " + format_double(res.trace.final_mean_value) + ", " +
          std::to_string(fallbacks) + " safeguard fallbacks");
      result.schedules.push_back(res.schedule);
      result.training.push_back(std::move(res));
    }
    write_text(dir.path() / "trace_train.csv", csv_text(train_rows));
  }
  for (const auto& file : stages.schedule_files) {
    PreconditionerSchedule s = schedule_io::read(file);
    if (s.par.dim() != m1 * m2)
      throw InvalidInput("schedule '" + file + "' acts on dimension " + std::to_string(s.par.dim()) +
                         ", images have " + std::to_string(m1 * m2) + " pixels");
    result.schedules.push_back(std::move(s));
  }

  if (need_test) {
    for (const Split* split : {&data.test_ones, &data.test_others}) {
      std::vector<MethodRuns> methods;
      if (stages.evaluate)
        for (const auto& s : result.schedules) {
          log("evaluating " + learned_label(s.par) + " on " + split->name);
          methods.push_back(run_learned(s, *split, c));
        }
      if (stages.baselines)
        for (const auto& b : c.baselines) {
          log("running " + b + " on " + split->name);
          methods.push_back(run_baseline(b, *split, c, lip));
        }
      std::vector<CsvRow> rows;
      for (const auto& m : methods) {
        std::vector<Curve> curves;
        for (const auto& r : m.runs) curves.push_back(curve_of(r));
        auto part = aggregate(m.method, curves, c.eval_iterations);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      write_text(dir.path() / ("trace_" + split->name + ".csv"), csv_text(rows));

      if (!split->items.empty() && !c.dump_iterations.empty()) {
        const fs::path dumps = dir.path() / "dumps" / split->name;
        fs::create_directories(dumps);
        write_pgm(dumps / "truth.pgm", split->items.front().truth);
        write_pgm(dumps / "observation.pgm", split->items.front().observation);
        for (const auto& m : methods)
          for (const auto& [t, x] : m.runs.front().snapshots)
            write_pgm(dumps / (m.method + "_t" + std::to_string(t) + ".pgm"), Image(m1, m2, x));
      }
    }
  }

  std::string manifest = "# lpgd experiment manifest; the key = value lines reload as a config\n";
  manifest += config_text(c);
  manifest += "# library_version = " + std::string(kVersion) + "\n";
  manifest += "# image_dims = " + std::to_string(m1) + "x" + std::to_string(m2) + "\n";
  manifest += "# blur_norm_sq = " + format_double(data.norms.blur_norm_sq) + "\n";
  manifest += "# diff_norm_sq = " + format_double(data.norms.diff_norm_sq) + "\n";
  manifest += "# smoothness = " + format_double(lip) + "\n";
  manifest += "# split_selection = first k of seeded shuffles (ones, others) from seed " +
              std::to_string(c.seed) + "\n";
  manifest += "# noise_seed = derive_seed(derive_seed(seed, 0x6e6f697365), dataset_index)\n";
  for (const Split* s : {&data.train, &data.test_ones, &data.test_others}) {
    if (s->items.empty()) continue;
    std::vector<std::size_t> idx;
    std::size_t converged = 0;
    for (const auto& it : s->items) {
      idx.push_back(it.dataset_index);
      converged += it.reference.converged;
    }
    manifest += "# " + s->name + "_indices = " + index_list(idx) + "\n";
    manifest += "# " + s->name + "_relative_noise = " + noise_summary(*s) + "\n";
    manifest += "# " + s->name + "_reference_converged = " + std::to_string(converged) + "/" +
                std::to_string(s->items.size()) + "\n";
  }
  manifest += "# pgm_scaling = per-image affine map of [min, max] to [0, 255]\n";
  write_text(dir.path() / "manifest.txt", manifest);
  dir.commit();
  result.directory = c.out;
  return result;
}

}  // namespace lpgd::harness
