// Copyright 2026 The moeplan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace moeplan {

// Base of every error thrown by the library. The CLI maps subclasses onto
// exit codes: infeasibility is 1, everything else is invalid input (2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class UnknownPreset : public Error {
 public:
  using Error::Error;
};

class InvalidStrategy : public Error {
 public:
  using Error::Error;
};

class IncompletePlan : public Error {
 public:
  using Error::Error;
};

class EmptySearchSpace : public Error {
 public:
  using Error::Error;
};

// No plan satisfies the memory cap. Carries the smallest cap that would admit
// at least one plan, so callers can report how far off the request was.
class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, std::int64_t min_achievable_bytes)
      : Error(what), min_achievable_bytes_(min_achievable_bytes) {}
  std::int64_t min_achievable_bytes() const { return min_achievable_bytes_; }

 private:
  std::int64_t min_achievable_bytes_;
};

class UnsupportedSchedule : public Error {
 public:
  using Error::Error;
};

class InconsistentPlan : public Error {
 public:
  using Error::Error;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class InconsistentInput : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyTrace : public Error {
 public:
  using Error::Error;
};

}  // namespace moeplan
