#pragma once

#include <stdexcept>
#include <string>

namespace dermq {

/// Base of every error thrown by the library. The CLI maps each subclass onto
/// a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on a function argument (exit code 2).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure while reading or writing corpus, report or image files (exit code 3).
class IoError : public Error {
 public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed manifest content; carries the 1-based line number (exit code 4).
class LoadError : public Error {
 public:
  LoadError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data unsuitable for the requested operation (exit code 4).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Divergence or non-finite values during optimisation (exit code 5).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or unreadable model file (exit code 6).
class ModelFileError : public Error {
 public:
  using Error::Error;
};

}  // namespace dermq
