#pragma once
// Exception hierarchy shared by every fans module.
//
// Each category maps onto one exit code of the command-line tool:
//   ConfigError / ShapeError / ParseError / ValidationError -> 2
//   NumericError                                            -> 3
//   EmptySupportError                                       -> 4

#include <stdexcept>
#include <string>

namespace fans {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument (bad flag value, out-of-range index).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or matrix dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, overflow, or divergence.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A predictor was asked for a gradient it cannot provide.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed file whose contents violate a structural invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// No sample carries positive resampling weight.
class EmptySupportError : public Error {
public:
    using Error::Error;
};

// Dataset ingestion errors, each named distinctly.
class MagicMismatchError : public ParseError {
public:
    using ParseError::ParseError;
};

class RowLengthError : public ParseError {
public:
    using ParseError::ParseError;
};

class LabelRangeError : public ParseError {
public:
    using ParseError::ParseError;
};

}  // namespace fans
