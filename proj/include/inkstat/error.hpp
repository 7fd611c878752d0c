#pragma once

#include <stdexcept>
#include <string>

namespace inkstat {

// Base of every error the library throws. Callers that only care about
// "something went wrong in the analysis" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument: nonpositive degrees of freedom, probability outside
// (0,1), inconsistent synthetic config, ...
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Iterative routine failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed CSV header; the message names the offending column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Zero variance, zero marginal, single-class labels and similar.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace inkstat
