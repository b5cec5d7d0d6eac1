#pragma once

#include <stdexcept>
#include <string>

namespace svga {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  Shape,
  Numeric,
  Config,
  State,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct InvalidArgumentError : Error {
  explicit InvalidArgumentError(const std::string& m) : Error(ErrorCode::InvalidArgument, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCode::Io, m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorCode::Parse, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorCode::Shape, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorCode::Numeric, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCode::Config, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorCode::State, m) {}
};

}  // namespace svga
