#pragma once

#include <stdexcept>
#include <string>

namespace automr {

// Base of every error the library raises. `kind()` is a stable tag used by
// the CLI to pick an exit code and by tests to match error categories.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Tensor shapes or dimensions that do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("ShapeError", what) {}
};

// Invalid user-provided configuration (model, train, schema, space).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

// Malformed input data. Carries the file and line (1-based, 0 if unknown).
class DataError : public Error {
 public:
  DataError(std::string kind, std::string file, std::size_t line, const std::string& msg)
      : Error(std::move(kind), format(file, line, msg)), file_(std::move(file)), line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& file, std::size_t line, const std::string& msg) {
    std::string out = file;
    if (line > 0) out += ":" + std::to_string(line);
    if (!out.empty()) out += ": ";
    return out + msg;
  }
  std::string file_;
  std::size_t line_;
};

// Binary container or store that cannot be decoded.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("FormatError", what) {}
};

// Filesystem failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

// Non-finite loss or gradients that survived the recovery policy.
class AnomalyError : public Error {
 public:
  explicit AnomalyError(const std::string& what) : Error("AnomalyError", what) {}
};

// Broken internal invariant (e.g. a tape entry lost its forward state).
class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error("InternalError", what) {}
};

}  // namespace automr
