#pragma once

#include <stdexcept>
#include <string>

namespace zsbir {

// Base class; everything thrown by the library derives from it.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/axis disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Input outside an operation's domain (log of non-positive, div by zero).
struct DomainError : Error {
  using Error::Error;
};

// API misuse: a precondition the caller controls was violated.
struct ContractError : Error {
  using Error::Error;
};

// Non-finite value produced or consumed where finiteness is required.
struct NumericError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset-level inconsistency (missing modality, bad labels).
struct DataError : Error {
  using Error::Error;
};

// File parsing failure; message carries the byte offset where known.
struct ParseError : Error {
  using Error::Error;
};

// I/O failure (open/read/write).
struct IoError : Error {
  using Error::Error;
};

}  // namespace zsbir
