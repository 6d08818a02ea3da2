#ifndef COVO_ERROR_HPP_
#define COVO_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace covo {

// Base for every error raised by the library. The CLI maps ConfigError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnknownSymbolError : public Error {
 public:
  UnknownSymbolError(const std::string& message, char symbol)
      : Error(message), symbol_(symbol) {}
  char symbol() const noexcept { return symbol_; }

 private:
  char symbol_;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// log of zero, undefined metric, and similar.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace covo

#endif  // COVO_ERROR_HPP_
