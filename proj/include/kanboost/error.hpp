#pragma once

#include <stdexcept>
#include <string>

namespace kanboost {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t field, const std::string& what)
      : Error("line " + std::to_string(line) + ", field " + std::to_string(field) + ": " + what),
        line_(line),
        field_(field) {}

  std::size_t line() const noexcept { return line_; }
  // 1-based; 0 when the whole record is at fault.
  std::size_t field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::size_t field_;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what) : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace kanboost
