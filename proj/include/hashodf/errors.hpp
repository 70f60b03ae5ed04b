#pragma once

#include <stdexcept>
#include <string>

namespace hashodf {

// Exception families map onto the CLI exit-code contract:
// ConfigError -> 1, InputError/FormatError/UnsupportedError -> 2, NumericError -> 3.

/// Invalid configuration or hyperparameters (odd lmax, nonpositive nu, ...).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input that violates an operation's precondition (non-unit direction, shape mismatch).
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class IndexError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// Malformed file content (NIfTI header, bvec/bval, checkpoint).
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that this toolkit does not handle (multi-shell data).
class UnsupportedError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf, divergence, or a failed factorization.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace hashodf
