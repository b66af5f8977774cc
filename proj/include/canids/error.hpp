#pragma once

#include <stdexcept>
#include <string>

namespace canids {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a documented precondition (bad config, bad dataset shape).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Model training diverged or produced non-finite values.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact (model, scaler, report) is unreadable or incompatible.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace canids
