#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace thd {

// Input data violates a documented contract (bad offsets, malformed record,
// mismatched lengths, out-of-range values). Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& what) : ValidationError(what) {}
};

class RangeError : public ValidationError {
 public:
  explicit RangeError(const std::string& what) : ValidationError(what) {}
};

// Malformed critique / restoration markup. Carries the byte offset of the
// first offending character.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : ValidationError(what + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// A metric that has no defined value on the given pool (e.g. a single-class
// token pool).
class UndefinedMetricError : public ValidationError {
 public:
  explicit UndefinedMetricError(const std::string& what) : ValidationError(what) {}
};

// Remote critic/corrector transport failed after retries. Maps to CLI exit
// code 2.
class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace thd
