#pragma once

#include <stdexcept>
#include <string>

namespace ehrattack {

/// Invalid sizes, flags or configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A code or category that is not part of the vocabulary.
class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Substitution outside the record or one that would duplicate a code in a visit.
class EditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Records compared position-wise do not share the same shape.
class ComparisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every attack position is masked.
class ExhaustionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input/output files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ehrattack
