// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lpgd/deploy.hpp"
#include "lpgd/harness/dataset.hpp"
#include "lpgd/trainer.hpp"

namespace lpgd::harness {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput(std::string(what) + ": '" + std::string(s) + "' is not a number");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput(std::string(what) + ": '" + std::string(s) +
                       "' is not a nonnegative integer");
  return v;
}

inline bool parse_bool(std::string_view s, std::string_view what) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidInput(std::string(what) + ": '" + std::string(s) + "' is not a boolean");
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    std::string item(s.substr(start, end - start));
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

enum class InitialPoint { Observation, Zero };

inline std::string_view to_string(InitialPoint p) {
  return p == InitialPoint::Observation ? "observation" : "zero";
}

inline const std::vector<std::string>& known_baselines() {
  static const std::vector<std::string> names = {"gd_fixed", "backtracking", "fista", "bfgs"};
  return names;
}

struct ExperimentConfig {
  std::string name = "experiment";
  std::string images_path = "data/mnist-subset-images-idx3-ubyte";
  std::string labels_path = "data/mnist-subset-labels-idx1-ubyte";
  SplitSizes sizes;
  /// Side length images are resampled to; 0 keeps the native size.
  Index image_size = 0;

  double blur_sigma = 2.0;
  double noise_level = 0.04;
  double alpha = 1e-4;
  double epsilon = 0.01;
  InitialPoint initial_point = InitialPoint::Observation;

  std::vector<std::string> parametrizations = {"conv"};
  Index kernel_rows = 28;
  Index kernel_cols = 28;
  TrainerConfig trainer;

  DeployPolicy policy;
  std::size_t eval_iterations = 100;
  std::vector<std::string> baselines = known_baselines();
  std::vector<std::size_t> dump_iterations = {10, 20, 50, 90};

  double reference_tolerance = 1e-10;
  std::size_t reference_max_iterations = 50000;

  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "runs/experiment";

  void validate() const {
    trainer.validate();
    if (name.empty() || name.find_first_of(",\n\"") != std::string::npos)
      throw InvalidInput("config: name must be nonempty without commas, quotes or newlines");
    if (!(blur_sigma > 0.0)) throw InvalidInput("config: blur_sigma must be positive");
    if (!(noise_level >= 0.0)) throw InvalidInput("config: noise_level must be >= 0");
    if (!(alpha >= 0.0)) throw InvalidInput("config: alpha must be >= 0");
    if (!(epsilon > 0.0)) throw InvalidInput("config: epsilon must be positive");
    if (sizes.train_ones < 1) throw InvalidInput("config: train_ones must be >= 1");
    if (image_size < 0) throw InvalidInput("config: image_size must be >= 0");
    if (parametrizations.empty()) throw InvalidInput("config: need at least one parametrization");
    for (const auto& p : parametrizations) param_kind_from_string(p);
    for (const auto& b : baselines)
      if (std::find(known_baselines().begin(), known_baselines().end(), b) ==
          known_baselines().end())
        throw InvalidInput("config: unknown baseline '" + b + "'");
    KernelGeometry::of(kernel_rows, kernel_cols);
    if (eval_iterations < 1) throw InvalidInput("config: eval_iterations must be >= 1");
    if (threads < 1) throw InvalidInput("config: threads must be >= 1");
    if (!(reference_tolerance > 0.0))
      throw InvalidInput("config: reference_tolerance must be positive");
  }
};

/// One configurable key: its text form in config files, manifests and
/// CLI flags.
struct ConfigField {
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  auto str = [](std::string key, std::string help, std::string C::*m) {
    return ConfigField{std::move(key), std::move(help),
                       [m](C& c, const std::string& v) { c.*m = v; },
                       [m](const C& c) { return c.*m; }};
  };
  auto num = [](std::string key, std::string help, auto get_ref) {
    return ConfigField{std::move(key), std::move(help),
                       [get_ref, k = key](C& c, const std::string& v) {
                         get_ref(c) = parse_double(v, k);
                       },
                       [get_ref](const C& c) { return format_double(get_ref(const_cast<C&>(c))); }};
  };
  auto count = [](std::string key, std::string help, auto get_ref) {
    return ConfigField{std::move(key), std::move(help),
                       [get_ref, k = key](C& c, const std::string& v) {
                         get_ref(c) = static_cast<std::remove_reference_t<decltype(get_ref(c))>>(
                             parse_uint(v, k));
                       },
                       [get_ref](const C& c) {
                         return std::to_string(get_ref(const_cast<C&>(c)));
                       }};
  };
  static const std::vector<ConfigField> fields = {
      str("name", "experiment label used by compare", &C::name),
      str("images", "IDX image file", &C::images_path),
      str("labels", "IDX label file", &C::labels_path),
      count("train_ones", "training ones", [](C& c) -> auto& { return c.sizes.train_ones; }),
      count("test_ones", "held-out ones", [](C& c) -> auto& { return c.sizes.test_ones; }),
      count("test_others", "held-out other digits",
            [](C& c) -> auto& { return c.sizes.test_others; }),
      count("image_size", "resample images to this side length (0 = native)",
            [](C& c) -> auto& { return c.image_size; }),
      num("blur_sigma", "Gaussian blur standard deviation",
          [](C& c) -> auto& { return c.blur_sigma; }),
      num("noise_level", "relative noise |y - Ax| / |Ax|",
          [](C& c) -> auto& { return c.noise_level; }),
      num("alpha", "Huber-TV weight", [](C& c) -> auto& { return c.alpha; }),
      num("epsilon", "Huber smoothing", [](C& c) -> auto& { return c.epsilon; }),
      {"initial_point", "observation or zero",
       [](C& c, const std::string& v) {
         if (v == "observation")
           c.initial_point = InitialPoint::Observation;
         else if (v == "zero")
           c.initial_point = InitialPoint::Zero;
         else
           throw InvalidInput("initial_point: expected observation or zero, got '" + v + "'");
       },
       [](const C& c) { return std::string(to_string(c.initial_point)); }},
      {"parametrizations", "comma list of scalar, diagonal, full, conv",
       [](C& c, const std::string& v) { c.parametrizations = split_list(v); },
       [](const C& c) { return join_list(c.parametrizations); }},
      count("kernel_rows", "conv kernel rows", [](C& c) -> auto& { return c.kernel_rows; }),
      count("kernel_cols", "conv kernel cols", [](C& c) -> auto& { return c.kernel_cols; }),
      count("iterations", "learned steps T",
            [](C& c) -> auto& { return c.trainer.outer_iterations; }),
      count("inner_cap", "inner iteration cap", [](C& c) -> auto& { return c.trainer.inner_cap; }),
      num("tolerance", "inner stopping tolerance on the gradient ratio",
          [](C& c) -> auto& { return c.trainer.tolerance; }),
      {"inner_solver", "plain or accelerated",
       [](C& c, const std::string& v) {
         if (v == "plain")
           c.trainer.inner_solver = InnerSolver::PlainDescent;
         else if (v == "accelerated")
           c.trainer.inner_solver = InnerSolver::Accelerated;
         else
           throw InvalidInput("inner_solver: expected plain or accelerated, got '" + v + "'");
       },
       [](const C& c) {
         return std::string(c.trainer.inner_solver == InnerSolver::PlainDescent ? "plain"
                                                                                : "accelerated");
       }},
      {"inner_init", "safeguard or warm",
       [](C& c, const std::string& v) {
         if (v == "safeguard")
           c.trainer.init = InitPolicy::SafeguardStart;
         else if (v == "warm")
           c.trainer.init = InitPolicy::WarmStart;
         else
           throw InvalidInput("inner_init: expected safeguard or warm, got '" + v + "'");
       },
       [](const C& c) {
         return std::string(c.trainer.init == InitPolicy::SafeguardStart ? "safeguard" : "warm");
       }},
      {"safeguard", "enforce the safeguard comparison (true/false)",
       [](C& c, const std::string& v) { c.trainer.enforce_safeguard = parse_bool(v, "safeguard"); },
       [](const C& c) { return std::string(c.trainer.enforce_safeguard ? "true" : "false"); }},
      {"tau_policy", "smooth (1/L) or strongly_convex (2/(mu+L))",
       [](C& c, const std::string& v) {
         if (v == "smooth")
           c.trainer.tau_policy = TauPolicy::SmoothOnly;
         else if (v == "strongly_convex")
           c.trainer.tau_policy = TauPolicy::StronglyConvex;
         else
           throw InvalidInput("tau_policy: expected smooth or strongly_convex, got '" + v + "'");
       },
       [](const C& c) {
         return std::string(c.trainer.tau_policy == TauPolicy::SmoothOnly ? "smooth"
                                                                         : "strongly_convex");
       }},
      {"policy", "freeze or recycle",
       [](C& c, const std::string& v) { c.policy.mode = deploy_mode_from_string(v); },
       [](const C& c) { return std::string(to_string(c.policy.mode)); }},
      count("eval_iterations", "iterations per test run",
            [](C& c) -> auto& { return c.eval_iterations; }),
      {"baselines", "comma list of gd_fixed, backtracking, fista, bfgs (may be empty)",
       [](C& c, const std::string& v) { c.baselines = split_list(v); },
       [](const C& c) { return join_list(c.baselines); }},
      {"dump_iterations", "iterations with reconstruction dumps",
       [](C& c, const std::string& v) {
         c.dump_iterations.clear();
         for (const auto& item : split_list(v))
           c.dump_iterations.push_back(parse_uint(item, "dump_iterations"));
       },
       [](const C& c) {
         std::vector<std::string> items;
         for (auto t : c.dump_iterations) items.push_back(std::to_string(t));
         return join_list(items);
       }},
      num("reference_tolerance", "gradient tolerance for reference optima",
          [](C& c) -> auto& { return c.reference_tolerance; }),
      count("reference_max_iterations", "iteration cap for reference optima",
            [](C& c) -> auto& { return c.reference_max_iterations; }),
      count("seed", "master seed", [](C& c) -> auto& { return c.seed; }),
      count("threads", "worker threads", [](C& c) -> auto& { return c.threads; }),
      str("out", "output directory", &C::out),
  };
  return fields;
}

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields())
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  throw InvalidInput("unknown config key '" + key + "'");
}

/// Applies "key = value" lines; '#' starts a comment, blank lines are
/// skipped.
inline void apply_config_text(ExperimentConfig& c, const std::string& text,
                              const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto lo = s.find_first_not_of(" \t\r");
      const auto hi = s.find_last_not_of(" \t\r");
      return lo == std::string::npos ? std::string() : s.substr(lo, hi - lo + 1);
    };
    try {
      set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  apply_config_text(c, ss.str(), path);
}

/// Every field as "key = value" lines, loadable by apply_config_text.
inline std::string config_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& f : config_fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

}  // namespace lpgd::harness
