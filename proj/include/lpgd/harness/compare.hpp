// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lpgd/harness/experiment.hpp"

namespace lpgd::harness {

inline constexpr const char* kMergedHeader =
    "experiment,split,method,t,mean_gap,median_gap,mean_grad_norm,diverged_runs,failed_runs";

/// Experiment label of an artifact directory: the manifest's name key, or
/// the directory name when there is no manifest.
inline std::string experiment_name(const fs::path& dir) {
  std::ifstream f(dir / "manifest.txt");
  std::string line;
  while (f && std::getline(f, line)) {
    if (line.rfind("name", 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.substr(0, eq).find_first_not_of(" \t", 4) != std::string::npos)
      continue;
    const auto b = line.find_first_not_of(" \t", eq + 1);
    return b == std::string::npos ? std::string() : line.substr(b);
  }
  return fs::absolute(dir).lexically_normal().filename().string();
}

/// Long-format merge of the trace CSVs in each directory, keyed by
/// (experiment, split, method, t). Identical duplicates collapse; differing
/// duplicates are reported together as one error.
inline std::string compare(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw InvalidInput("compare: no artifact directories given");
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::string> seen;
  std::vector<std::string> conflicts;
  std::string out = std::string(kMergedHeader) + "\n";
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) throw Error("compare: '" + dir.string() + "' is not a directory");
    const std::string exp = experiment_name(dir);
    bool any = false;
    for (const std::string split : {"train", "test_ones", "test_others"}) {
      const fs::path file = dir / ("trace_" + split + ".csv");
      if (!fs::exists(file)) continue;
      any = true;
      std::ifstream f(file);
      std::string line;
      std::getline(f, line);
      if (line != kTraceHeader)
        throw ParseError("compare: schema mismatch in '" + file.string() + "': header '" + line +
                         "'");
      std::size_t lineno = 1;
      while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_list(line);
        if (fields.size() != 7)
          throw ParseError("compare: " + file.string() + ":" + std::to_string(lineno) +
                           ": expected 7 fields");
        Key key{exp, split, fields[0], fields[1]};
        std::string rest;
        for (std::size_t i = 2; i < fields.size(); ++i) rest += "," + fields[i];
        auto [it, inserted] = seen.try_emplace(key, rest);
        if (!inserted) {
          if (it->second != rest)
            conflicts.push_back(exp + "/" + split + "/" + fields[0] + "/t=" + fields[1]);
          continue;
        }
        out += exp + "," + split + "," + fields[0] + "," + fields[1] + rest + "\n";
      }
    }
    if (!any) throw Error("compare: no trace CSVs in '" + dir.string() + "'");
  }
  if (!conflicts.empty()) {
    std::string msg = "compare: " + std::to_string(conflicts.size()) + " conflicting rows:";
    for (const auto& c : conflicts) msg += " " + c;
    throw Error(msg);
  }
  return out;
}

}  // namespace lpgd::harness
