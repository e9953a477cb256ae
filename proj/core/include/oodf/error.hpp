#pragma once

#include <stdexcept>
#include <string>

namespace oodf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operator's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside the domain of an operation.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// A numeric result or input is NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed, or a file is malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration is invalid. Carries the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : Error(key_path.empty() ? message : key_path + ": " + message),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace oodf
