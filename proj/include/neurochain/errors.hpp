#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neurochain {

/// Base of every error the library throws. `exit_code()` is the process exit
/// status the CLI reports for it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Invalid settings, mismatched dimensions, malformed scenario graphs.
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Input data violates its schema or a data invariant (monotonicity, sampling).
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// A text row or wire line could not be parsed. `line()` is 1-based, 0 if unknown.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : DataError(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class RangeError : public DataError {
public:
    using DataError::DataError;
};

/// A metric is undefined for its input (zero variance, too short).
class MetricError : public DataError {
public:
    using DataError::DataError;
};

/// Least-squares design matrix is rank deficient and no ridge term was given.
class SingularityError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Message fields out of range for the wire grammar.
class EncodeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Socket failure, timeout or disconnect.
class TransportError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

/// The remote side answered with `ERR <code> <text>`, or the arm rejected a
/// request locally with the same code.
class ProtocolError : public Error {
public:
    ProtocolError(int code, const std::string& text)
        : Error("ERR " + std::to_string(code) + " " + text), code_(code), text_(text) {}
    int code() const noexcept { return code_; }
    const std::string& text() const noexcept { return text_; }
    int exit_code() const noexcept override { return 4; }

private:
    int code_;
    std::string text_;
};

/// A pipeline box failed; carries the box id and the cause's exit code.
class PipelineError : public Error {
public:
    PipelineError(const std::string& box, const Error& cause)
        : Error("box `" + box + "`: " + cause.what()), box_(box), exit_code_(cause.exit_code()) {}
    const std::string& box() const noexcept { return box_; }
    int exit_code() const noexcept override { return exit_code_; }

private:
    std::string box_;
    int exit_code_;
};

}  // namespace neurochain
