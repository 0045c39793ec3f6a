#pragma once

#include <stdexcept>
#include <string>

namespace refmort {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    Success = 0,
    InputError = 2,
    NonConvergence = 3,
    ConfigError = 4,
};

/// Base class for every error raised by the library. Carries the exit code the
/// CLI should report for it.
class Error : public std::runtime_error {
public:
    Error(const std::string &what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad or inconsistent input data: missing columns, negative counts,
/// duplicate keys, empty lag bands, degenerate estimator inputs.
class InputError : public Error {
public:
    explicit InputError(const std::string &what) : Error(what, ExitCode::InputError) {}
};

/// Header does not carry a required column.
class SchemaError : public InputError {
public:
    explicit SchemaError(const std::string &what) : InputError(what) {}
};

/// Row-level validation failure.
class ValidationError : public InputError {
public:
    explicit ValidationError(const std::string &what) : InputError(what) {}
};

/// Estimation could not proceed (empty lag band, zero denominator, ...).
class EstimationError : public InputError {
public:
    explicit EstimationError(const std::string &what) : InputError(what) {}
};

/// Iterative fit failed to converge or diverged.
class NonConvergenceError : public Error {
public:
    explicit NonConvergenceError(const std::string &what)
        : Error(what, ExitCode::NonConvergence) {}
};

/// Missing or contradictory configuration (schedule entry, scenario key, CLI input).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string &what) : Error(what, ExitCode::ConfigError) {}
};

} // namespace refmort
