// Copyright 2026 The lpgd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lpgd {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, non-finite data, bad tolerances.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A dense intermediate would exceed its configured size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An iterative method produced non-finite values or could not make progress.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, std::ptrdiff_t rank)
      : Error(what + " (numerical rank " + std::to_string(rank) + ")"), rank_(rank) {}

  std::ptrdiff_t rank() const noexcept { return rank_; }

 private:
  std::ptrdiff_t rank_;
};

/// Input file could not be decoded.
class ParseError : public Error {
 public:
  using Error::Error;
};

class DegenerateSignal : public Error {
 public:
  using Error::Error;
};

}  // namespace lpgd
