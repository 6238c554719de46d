#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace defembed {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number of the offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& message)
      : Error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A query or definition in which no token is known to the model.
class NoKnownTokens : public Error {
 public:
  NoKnownTokens() : Error("no known tokens") {}
};

}  // namespace defembed
