#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stunt {

/// Dense row-major matrix; every table and weight tensor in the library uses it.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Base of every error raised by the library. Anything deriving from Error is a
/// user-facing problem (bad input, bad config, too little data); other
/// exceptions escaping the library indicate a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data cannot support the requested operation (too few rows, a class
/// without enough samples, mismatched shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An episode could not be formed from a generated task; the caller is expected
/// to regenerate the task with a fresh mask.
class EpisodeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace stunt
