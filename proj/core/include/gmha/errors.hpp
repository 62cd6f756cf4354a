#pragma once

#include <stdexcept>
#include <string>

namespace gmha {

// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent architecture / hyperparameter combination.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Combination that is well-formed but deliberately not supported
// (e.g. folded attention with rotary embeddings).
class UnsupportedError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// NaN / Inf where finite values are required, or a degenerate softmax row.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cache writes out of order.
class OrderingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gmha
