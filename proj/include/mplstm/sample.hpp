#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mplstm/math.hpp"

namespace mplstm {

/// Input validation failure. Each reason gets its own subclass so callers and
/// tests can tell them apart.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};
class NoPerspectivesError : public ValidationError {
public:
  using ValidationError::ValidationError;
};
class EmptySequenceError : public ValidationError {
public:
  using ValidationError::ValidationError;
};
class RaggedSequenceError : public ValidationError {
public:
  using ValidationError::ValidationError;
};
class FeatureDimError : public ValidationError {
public:
  using ValidationError::ValidationError;
};
class LabelError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// m synchronized sequences of n feature vectors (dim d) plus a class label.
/// perspectives[p][i] is instance i of perspective p.
struct SequenceSample {
  std::vector<std::vector<Vec>> perspectives;
  std::size_t label = 0;

  std::size_t num_perspectives() const { return perspectives.size(); }
  std::size_t length() const { return perspectives.empty() ? 0 : perspectives.front().size(); }
  std::size_t feature_dim() const {
    return length() == 0 ? 0 : perspectives.front().front().size();
  }
};

/// Rejects m = 0, n = 0, ragged lengths and inconsistent feature dims, each
/// with its own error type. expected_dim = 0 skips the dimension check
/// against an external value (internal consistency is always checked).
void validate_sample(const SequenceSample& sample, std::size_t expected_m = 0,
                     std::size_t expected_dim = 0);

}  // namespace mplstm
