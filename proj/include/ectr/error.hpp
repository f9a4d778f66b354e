#pragma once

#include <stdexcept>
#include <string>

namespace ectr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller passed a value outside an operation's domain.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A non-finite or otherwise invalid number appeared during a computation.
/// `player` names the parameter group whose update failed ("phi", "theta", ...)
/// or is empty when the failure is not tied to a player.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string player = {})
      : Error(player.empty() ? what : "[" + player + "] " + what),
        player_(std::move(player)) {}
  const std::string& player() const noexcept { return player_; }

 private:
  std::string player_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed delimited-text input. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
        row_(row),
        column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace ectr
