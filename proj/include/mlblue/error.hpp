#pragma once

#include <stdexcept>
#include <string>

namespace mlblue {

// Base for every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user input: problem files, model sets, covariance data.
class ConfigError : public Error {
public:
    using Error::Error;
};

// The estimator is undefined for the requested allocation (no sample of a
// group containing the high-fidelity model).
class WellPosednessError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class EvaluatorError : public Error {
public:
    using Error::Error;
};

// Reading or writing result files failed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mlblue
