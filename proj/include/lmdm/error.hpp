//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace lmdm {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Non-finite coordinates or other malformed geometry.
class InvalidGeometry : public Error {
public:
  using Error::Error;
};

// Coincident atoms on an edge where a direction is required.
class DegenerateGeometry : public Error {
public:
  using Error::Error;
};

// Shape or precondition violations by the caller.
class ContractError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  NumericError(const std::string &what, int layer = -1)
      : Error(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

private:
  int layer_;
};

class UnsupportedElement : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string &what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class CheckpointError : public Error {
public:
  using Error::Error;
};

} // namespace lmdm
