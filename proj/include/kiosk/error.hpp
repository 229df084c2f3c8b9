#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kiosk {

/// Base for every error raised by the library. Callers that only need a
/// message can catch this; the subclasses carry the structured detail.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownDish : public Error {
 public:
  explicit UnknownDish(std::string dish_id)
      : Error("unknown dish: " + dish_id), dish_id_(std::move(dish_id)) {}
  const std::string& dish_id() const { return dish_id_; }

 private:
  std::string dish_id_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("line " + std::to_string(line) + ": " + reason), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("corpus has no sentence with at least two tokens") {}
};

class EmptyCart : public Error {
 public:
  EmptyCart() : Error("cart is empty") {}
};

class DimMismatch : public Error {
 public:
  DimMismatch(std::size_t expected, std::size_t got)
      : Error("dimension mismatch: expected " + std::to_string(expected) +
              ", got " + std::to_string(got)) {}
};

class TargetOutOfRange : public Error {
 public:
  using Error::Error;
};

class KOutOfRange : public Error {
 public:
  using Error::Error;
};

class TooFewSamples : public Error {
 public:
  explicit TooFewSamples(std::size_t n)
      : Error("too few training samples: " + std::to_string(n)) {}
};

class BothEmpty : public Error {
 public:
  BothEmpty() : Error("normalized distance undefined for two empty strings") {}
};

class EmptyCatalog : public Error {
 public:
  EmptyCatalog() : Error("catalog is empty") {}
};

class ZeroTotalMargin : public Error {
 public:
  ZeroTotalMargin() : Error("total gross margin is zero") {}
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace kiosk
