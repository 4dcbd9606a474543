#pragma once

#include <stdexcept>
#include <string>

namespace ctrw {

// Invalid parameters or inputs outside a function's domain. The CLI maps
// these to exit code 2.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numeric procedure could not deliver the requested accuracy (quadrature
// failure, singular denominator, truncation bound too large). Exit code 70.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input files. Treated like domain errors by the CLI.
class ParseError : public DomainError {
public:
    using DomainError::DomainError;
};

}  // namespace ctrw
