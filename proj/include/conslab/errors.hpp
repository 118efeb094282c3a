#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace conslab {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Two densities or measures do not live on the same dominating grid.
class GridMismatchError : public Error {
public:
  using Error::Error;
};

// An input is degenerate (all-zero density, empty family, ...).
class DegenerateInputError : public Error {
public:
  using Error::Error;
};

// Conditioning on a set of prior mass zero.
class InvalidConditioningError : public Error {
public:
  using Error::Error;
};

// The posterior denominator is zero: every positive-mass atom assigns
// zero likelihood to the data. Carries the index of the observation
// (position in the full observation stream) at which this happened.
class IllDefinedPosteriorError : public Error {
public:
  explicit IllDefinedPosteriorError(std::size_t observation_index)
      : Error("ill-defined posterior: all atoms have zero likelihood at observation " +
              std::to_string(observation_index)),
        observation_index_(observation_index) {}

  std::size_t observation_index() const noexcept { return observation_index_; }

private:
  std::size_t observation_index_;
};

// Both log-densities of a minimax test indicator are -inf.
class UndefinedSequenceError : public Error {
public:
  using Error::Error;
};

// Bad scenario / experiment configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

// An enumeration oracle was asked for an instance beyond its stated limits.
class EnumerationLimitError : public Error {
public:
  using Error::Error;
};

// A parameter is outside the domain of the requested operation.
class DomainError : public Error {
public:
  using Error::Error;
};

}  // namespace conslab
