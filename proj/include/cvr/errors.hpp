#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvr {

/// Bad user input: malformed files, dangling references, invalid topology.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Syntax or semantic error tied to a position in a text input.
class ParseError : public InputError {
public:
  ParseError(std::size_t line, std::size_t column, const std::string& message);

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

/// A numerical procedure failed: infeasible program, diverging sweep, iteration limit.
class SolveError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace cvr
