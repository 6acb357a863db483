// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

// lpgd: learn, evaluate and compare gradient-descent preconditioners on the
// MNIST deblurring benchmark.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "lpgd/harness/compare.hpp"
#include "lpgd/harness/experiment.hpp"
#include "lpgd/schedule_io.hpp"
#include "lpgd/version.hpp"

namespace {

using namespace lpgd;
using namespace lpgd::harness;

std::string flag_name(const std::string& key) {
  std::string out = key;
  std::replace(out.begin(), out.end(), '_', '-');
  return "--" + out;
}

void inspect(const std::string& path) {
  const PreconditionerSchedule s = schedule_io::read(path);
  std::cout << "file: " << path << "\n"
            << "format_version: " << schedule_io::kFormatVersion << "\n"
            << "parametrization: " << s.par.name() << "\n"
            << "dim: " << s.par.dim() << "\n";
  if (s.par.kind() == ParamKind::Conv)
    std::cout << "kernel: " << s.par.kernel_rows() << "x" << s.par.kernel_cols() << "\n"
              << "image: " << s.par.image_rows() << "x" << s.par.image_cols() << "\n";
  std::cout << "params_per_step: " << s.par.param_dim() << "\n"
            << "steps: " << s.length() << "\n"
            << "tau: " << format_double(s.tau) << "\n";
  for (const auto& [k, v] : s.provenance) std::cout << "meta." << k << ": " << v << "\n";
  std::cout << "t,min,max,mean,l2\n";
  for (std::size_t t = 0; t < s.thetas.size(); ++t) {
    const Vector& p = s.thetas[t].params;
    std::cout << t << "," << format_double(p.minCoeff()) << "," << format_double(p.maxCoeff())
              << "," << format_double(p.mean()) << "," << format_double(p.norm()) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned greedy preconditioners for gradient descent"};
  app.set_version_flag("--version", std::string(lpgd::kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  bool quiet = false;
  app.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  std::map<std::string, std::string> overrides;
  for (const auto& field : config_fields())
    app.add_option(flag_name(field.key), overrides[field.key], field.help);

  auto* cmd_train = app.add_subcommand("train", "train schedules on the training ones");
  auto* cmd_eval = app.add_subcommand("eval", "evaluate schedule files on both test sets");
  std::vector<std::string> schedule_files;
  cmd_eval->add_option("--schedule", schedule_files, "schedule file (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* cmd_baselines = app.add_subcommand("baselines", "run the classical baselines on the test sets");
  auto* cmd_experiment = app.add_subcommand("experiment", "train, evaluate and run baselines");
  auto* cmd_compare = app.add_subcommand("compare", "merge trace CSVs of artifact directories");
  std::vector<std::string> compare_dirs;
  cmd_compare->add_option("dirs", compare_dirs, "artifact directories")->required();
  auto* cmd_inspect = app.add_subcommand("inspect-schedule", "print a schedule file summary");
  std::string inspect_path;
  cmd_inspect->add_option("file", inspect_path, "schedule file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_inspect->parsed()) {
      inspect(inspect_path);
      return 0;
    }
    if (cmd_compare->parsed()) {
      const std::string merged =
          compare(std::vector<fs::path>(compare_dirs.begin(), compare_dirs.end()));
      if (app.count("--out")) {
        write_text(overrides["out"], merged);
      } else {
        std::cout << merged;
      }
      return 0;
    }

    ExperimentConfig config;
    if (!config_file.empty()) load_config_file(config, config_file);
    for (const auto& field : config_fields())
      if (app.count(flag_name(field.key))) field.set(config, overrides[field.key]);

    StageSelection stages;
    if (cmd_train->parsed()) {
      stages = {true, false, false, {}};
    } else if (cmd_eval->parsed()) {
      stages = {false, true, false, schedule_files};
    } else if (cmd_baselines->parsed()) {
      stages = {false, false, true, {}};
    } else if (cmd_experiment->parsed()) {
      stages = {true, true, true, {}};
    }
    const auto result = run_experiment(config, stages, quiet ? silent_log() : stderr_log());
    if (!quiet) std::cerr << "wrote " << result.directory.string() << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
